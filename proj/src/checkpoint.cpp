#include "svgpkan/cli.hpp"

#include <cstring>
#include <fstream>

namespace svgpkan {

namespace {

constexpr char kMagic[8] = {'S', 'V', 'G', 'P', 'K', 'A', 'N', 'C'};

// Fixed little-endian layout so checkpoints move between builds.
void put_u32(std::ostream& o, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    o.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& o, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    o.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("checkpoint: truncated");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw std::runtime_error("checkpoint: truncated");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

void put_str(std::ostream& o, const std::string& s) {
    put_u64(o, s.size());
    o.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& in) {
    std::uint64_t n = get_u64(in);
    if (n > (1ull << 32)) throw std::runtime_error("checkpoint: absurd string length");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("checkpoint: truncated");
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for write");
    out.write(kMagic, 8);
    put_u32(out, c.version);
    put_u64(out, c.step);
    put_str(out, c.config_text);
    put_u64(out, c.tensors.size());
    for (const auto& [name, t] : c.tensors) {
        put_str(out, name);
        put_u64(out, t.shape().size());
        for (i64 d : t.shape()) put_u64(out, static_cast<std::uint64_t>(d));
        for (i64 i = 0; i < t.size(); ++i) {
            std::uint64_t bits;
            double v = t.data()[i];
            std::memcpy(&bits, &v, 8);
            put_u64(out, bits);
        }
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    Checkpoint c;
    c.version = get_u32(in);
    if (c.version != 1)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(c.version));
    c.step = get_u64(in);
    c.config_text = get_str(in);
    std::uint64_t n_tensors = get_u64(in);
    c.tensors.reserve(n_tensors);
    for (std::uint64_t k = 0; k < n_tensors; ++k) {
        std::string name = get_str(in);
        std::uint64_t rank = get_u64(in);
        if (rank > 16) throw std::runtime_error("checkpoint: absurd rank");
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<i64>(get_u64(in));
        std::vector<double> data(static_cast<size_t>(numel(shape)));
        for (auto& v : data) {
            std::uint64_t bits = get_u64(in);
            std::memcpy(&v, &bits, 8);
        }
        c.tensors.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
    }
    return c;
}

void capture_params(Checkpoint& c, const std::vector<Param*>& params) {
    for (const Param* p : params) c.tensors.emplace_back(p->name, p->value);
}

void restore_params(const Checkpoint& c, const std::vector<Param*>& params) {
    for (Param* p : params) {
        const Tensor* found = nullptr;
        for (const auto& [name, t] : c.tensors) {
            if (name == p->name) {
                found = &t;
                break;
            }
        }
        if (!found) throw std::runtime_error("checkpoint: missing tensor " + p->name);
        if (found->shape() != p->value.shape())
            throw std::runtime_error("checkpoint: shape mismatch for " + p->name);
        p->value = *found;
    }
}

}  // namespace svgpkan
