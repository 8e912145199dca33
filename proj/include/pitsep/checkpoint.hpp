#pragma once

// Checkpoint container. File layout (all integers little-endian):
//   magic   8 bytes "PITCKPT1"
//   version u32
//   spec_hash u64
//   count   u32
//   count entries of:
//     name_len u32, name bytes (UTF-8)
//     dtype    u8   (0 = float32, 1 = float64)
//     ndim     u32, dims u64 each
//     payload  raw values, little-endian

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "pitsep/errors.hpp"
#include "pitsep/layers.hpp"
#include "pitsep/optim.hpp"

namespace pitsep {

struct NamedTensor {
    std::vector<uint64_t> shape;
    int dtype = 0;  // 0 = f32, 1 = f64
    std::vector<unsigned char> payload;

    uint64_t count() const {
        uint64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
};

struct Checkpoint {
    static constexpr uint32_t kVersion = 1;
    uint64_t spec_hash = 0;
    std::map<std::string, NamedTensor> tensors;

    template <class S>
    void put_matrix(const std::string& name, const Mat<S>& m) {
        NamedTensor t;
        t.shape = {static_cast<uint64_t>(m.rows()), static_cast<uint64_t>(m.cols())};
        t.dtype = sizeof(S) == 4 ? 0 : 1;
        t.payload.resize(m.size() * sizeof(S));
        std::memcpy(t.payload.data(), m.data(), t.payload.size());
        tensors[name] = std::move(t);
    }
    template <class S>
    Mat<S> get_matrix(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw FormatError("checkpoint: missing tensor " + name);
        const NamedTensor& t = it->second;
        if (t.shape.size() != 2) throw FormatError("checkpoint: tensor " + name + " is not 2-D");
        if (t.dtype != (sizeof(S) == 4 ? 0 : 1))
            throw FormatError("checkpoint: dtype mismatch for tensor " + name);
        Mat<S> m(t.shape[0], t.shape[1]);
        std::memcpy(m.data(), t.payload.data(), t.payload.size());
        return m;
    }
    void put_scalar(const std::string& name, double v) {
        Mat<double> m(1, 1);
        m(0, 0) = v;
        put_matrix(name, m);
    }
    double get_scalar(const std::string& name) const { return get_matrix<double>(name)(0, 0); }
    bool has(const std::string& name) const { return tensors.count(name) > 0; }
};

namespace detail {
inline void ck_write(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
inline void ck_read(std::istream& in, void* p, std::size_t n, const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw FormatError(std::string("checkpoint: truncated while reading ") + what);
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("checkpoint: cannot write " + path);
    out.write("PITCKPT1", 8);
    const uint32_t version = Checkpoint::kVersion;
    detail::ck_write(out, &version, 4);
    detail::ck_write(out, &ckpt.spec_hash, 8);
    const uint32_t count = static_cast<uint32_t>(ckpt.tensors.size());
    detail::ck_write(out, &count, 4);
    for (const auto& [name, t] : ckpt.tensors) {
        const uint32_t name_len = static_cast<uint32_t>(name.size());
        detail::ck_write(out, &name_len, 4);
        detail::ck_write(out, name.data(), name.size());
        const unsigned char dtype = static_cast<unsigned char>(t.dtype);
        detail::ck_write(out, &dtype, 1);
        const uint32_t ndim = static_cast<uint32_t>(t.shape.size());
        detail::ck_write(out, &ndim, 4);
        for (uint64_t d : t.shape) detail::ck_write(out, &d, 8);
        detail::ck_write(out, t.payload.data(), t.payload.size());
    }
    if (!out) throw FormatError("checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("checkpoint: cannot open " + path);
    char magic[8];
    detail::ck_read(in, magic, 8, "magic");
    if (std::memcmp(magic, "PITCKPT1", 8) != 0)
        throw FormatError("checkpoint: bad magic in " + path);
    uint32_t version = 0;
    detail::ck_read(in, &version, 4, "version");
    if (version != Checkpoint::kVersion)
        throw FormatError("checkpoint: unsupported format_version " + std::to_string(version));
    Checkpoint ckpt;
    detail::ck_read(in, &ckpt.spec_hash, 8, "spec_hash");
    uint32_t count = 0;
    detail::ck_read(in, &count, 4, "tensor count");
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = 0;
        detail::ck_read(in, &name_len, 4, "name length");
        std::string name(name_len, '\0');
        detail::ck_read(in, name.data(), name_len, "name");
        NamedTensor t;
        unsigned char dtype = 0;
        detail::ck_read(in, &dtype, 1, "dtype");
        if (dtype > 1) throw FormatError("checkpoint: unknown dtype tag for tensor " + name);
        t.dtype = dtype;
        uint32_t ndim = 0;
        detail::ck_read(in, &ndim, 4, "ndim");
        t.shape.resize(ndim);
        for (uint32_t d = 0; d < ndim; ++d) detail::ck_read(in, &t.shape[d], 8, "dims");
        t.payload.resize(t.count() * (t.dtype == 0 ? 4 : 8));
        detail::ck_read(in, t.payload.data(), t.payload.size(), ("payload of " + name).c_str());
        ckpt.tensors[name] = std::move(t);
    }
    return ckpt;
}

// Parameter/optimizer round trips used by the trainer.
template <class S>
void put_params(Checkpoint& ckpt, const std::vector<ParamRef<S>>& params) {
    for (const auto& p : params) ckpt.put_matrix(p.name, *p.value);
}

template <class S>
void load_params(const Checkpoint& ckpt, std::vector<ParamRef<S>>& params) {
    for (auto& p : params) {
        Mat<S> m = ckpt.get_matrix<S>(p.name);
        if (m.rows() != p.value->rows() || m.cols() != p.value->cols())
            throw FormatError("checkpoint: shape mismatch for tensor " + p.name);
        *p.value = m;
    }
}

template <class S>
void put_adam(Checkpoint& ckpt, const std::vector<ParamRef<S>>& params, const AdamState<S>& st) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        ckpt.put_matrix(params[i].name + ".adam_m", st.m[i]);
        ckpt.put_matrix(params[i].name + ".adam_v", st.v[i]);
    }
    ckpt.put_scalar("optim.step", static_cast<double>(st.step));
}

template <class S>
void load_adam(const Checkpoint& ckpt, const std::vector<ParamRef<S>>& params, AdamState<S>& st) {
    st.m.clear();
    st.v.clear();
    for (const auto& p : params) {
        st.m.push_back(ckpt.get_matrix<S>(p.name + ".adam_m"));
        st.v.push_back(ckpt.get_matrix<S>(p.name + ".adam_v"));
    }
    st.step = static_cast<long>(ckpt.get_scalar("optim.step"));
}

}  // namespace pitsep
