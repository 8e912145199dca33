#pragma once

// Mono RIFF WAV reader/writer, PCM16 and IEEE float32 only.

#include <string>

#include "pitsep/signal.hpp"

namespace pitsep {

enum class WavEncoding { Pcm16, Float32 };

Waveform load_wav(const std::string& path);
void save_wav(const std::string& path, const Waveform& wave,
              WavEncoding encoding = WavEncoding::Float32);

}  // namespace pitsep
