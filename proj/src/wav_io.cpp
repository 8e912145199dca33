#include "pitsep/wav_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "pitsep/errors.hpp"

namespace pitsep {

namespace {

uint32_t read_u32(std::istream& in, const char* field) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError(std::string("wav: truncated while reading ") + field);
    return b[0] | (b[1] << 8) | (b[2] << 16) | (uint32_t(b[3]) << 24);
}

uint16_t read_u16(std::istream& in, const char* field) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    if (!in) throw FormatError(std::string("wav: truncated while reading ") + field);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
}

void write_u16(std::ostream& out, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace

Waveform load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("wav: cannot open " + path);

    char tag[4];
    in.read(tag, 4);
    if (!in || std::memcmp(tag, "RIFF", 4) != 0)
        throw FormatError("wav: missing RIFF tag in " + path);
    read_u32(in, "RIFF size");
    in.read(tag, 4);
    if (!in || std::memcmp(tag, "WAVE", 4) != 0)
        throw FormatError("wav: missing WAVE tag in " + path);

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t sample_rate = 0;
    bool have_fmt = false;
    Waveform wave;
    bool have_data = false;

    while (in.peek() != EOF) {
        in.read(tag, 4);
        if (!in) break;
        const uint32_t chunk_size = read_u32(in, "chunk size");
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            if (chunk_size < 16) throw FormatError("wav: fmt chunk too short");
            format = read_u16(in, "fmt.format");
            channels = read_u16(in, "fmt.channels");
            sample_rate = read_u32(in, "fmt.sample_rate");
            read_u32(in, "fmt.byte_rate");
            read_u16(in, "fmt.block_align");
            bits = read_u16(in, "fmt.bits_per_sample");
            in.ignore(chunk_size - 16);
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (!have_fmt) throw FormatError("wav: data chunk before fmt chunk");
            if (channels != 1)
                throw FormatError("wav: fmt.channels must be 1, got " + std::to_string(channels));
            std::vector<char> raw(chunk_size);
            in.read(raw.data(), chunk_size);
            if (!in) throw FormatError("wav: truncated data chunk");
            if (format == 1 && bits == 16) {
                const size_t n = chunk_size / 2;
                wave.samples.resize(n);
                for (size_t i = 0; i < n; ++i) {
                    int16_t v;
                    std::memcpy(&v, raw.data() + 2 * i, 2);
                    wave.samples[i] = static_cast<float>(v) / 32768.0f;
                }
            } else if (format == 3 && bits == 32) {
                const size_t n = chunk_size / 4;
                wave.samples.resize(n);
                std::memcpy(wave.samples.data(), raw.data(), n * 4);
            } else {
                throw FormatError("wav: unsupported fmt.format/bits combination " +
                                  std::to_string(format) + "/" + std::to_string(bits));
            }
            have_data = true;
        } else {
            in.ignore(chunk_size + (chunk_size & 1));
        }
    }
    if (!have_data) throw FormatError("wav: no data chunk in " + path);
    if (wave.samples.empty()) throw FormatError("wav: empty data chunk in " + path);
    wave.sample_rate = static_cast<int>(sample_rate);
    return wave;
}

void save_wav(const std::string& path, const Waveform& wave, WavEncoding encoding) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("wav: cannot write " + path);
    const uint32_t n = static_cast<uint32_t>(wave.samples.size());
    const uint16_t bytes_per = encoding == WavEncoding::Pcm16 ? 2 : 4;
    const uint32_t data_size = n * bytes_per;

    out.write("RIFF", 4);
    write_u32(out, 36 + data_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    write_u32(out, 16);
    write_u16(out, encoding == WavEncoding::Pcm16 ? 1 : 3);
    write_u16(out, 1);
    write_u32(out, static_cast<uint32_t>(wave.sample_rate));
    write_u32(out, static_cast<uint32_t>(wave.sample_rate) * bytes_per);
    write_u16(out, bytes_per);
    write_u16(out, bytes_per * 8);
    out.write("data", 4);
    write_u32(out, data_size);
    if (encoding == WavEncoding::Pcm16) {
        for (float s : wave.samples) {
            float c = std::min(1.0f, std::max(-1.0f, s));
            int v = static_cast<int>(std::lrint(c * 32767.0f));
            int16_t q = static_cast<int16_t>(std::min(32767, std::max(-32768, v)));
            out.write(reinterpret_cast<char*>(&q), 2);
        }
    } else {
        out.write(reinterpret_cast<const char*>(wave.samples.data()), data_size);
    }
    if (!out) throw FormatError("wav: write failed for " + path);
}

}  // namespace pitsep
