#include "t2v/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; byte swapping is not implemented");

namespace t2v {

namespace {

constexpr char kMagic[8] = {'M', 'S', 'T', '2', 'V', 'C', 'K', 'P'};

template <class T>
void put(std::string& buf, T v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(const std::string& buf, size_t& off) {
    if (off + sizeof(T) > buf.size()) throw std::runtime_error("checkpoint: truncated file");
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::string buf;
    buf.append(kMagic, 8);
    put<uint32_t>(buf, ckpt.version);
    put<uint32_t>(buf, uint32_t(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        if (name.size() > 0xffff) throw std::invalid_argument("checkpoint: tensor name too long");
        put<uint16_t>(buf, uint16_t(name.size()));
        buf.append(name);
        if (t.rank() > 0xff) throw std::invalid_argument("checkpoint: rank too large");
        put<uint8_t>(buf, uint8_t(t.rank()));
        for (size_t d : t.shape()) put<uint64_t>(buf, uint64_t(d));
        buf.append(reinterpret_cast<const char*>(t.values().data()), t.numel() * sizeof(float));
    }
    std::string cfg;
    for (const auto& [k, v] : ckpt.config) {
        if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos ||
            v.find('\n') != std::string::npos)
            throw std::invalid_argument("checkpoint: config key/value may not contain '=' or newlines: " + k);
        cfg += k;
        cfg += '=';
        cfg += v;
        cfg += '\n';
    }
    put<uint32_t>(buf, uint32_t(cfg.size()));
    buf.append(cfg);

    uint32_t crc = uint32_t(::crc32(0, reinterpret_cast<const Bytef*>(buf.data()), uInt(buf.size())));
    put<uint32_t>(buf, crc);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 8 + 4 + 4 + 4 + 4) throw std::runtime_error("checkpoint: truncated file");
    if (std::memcmp(buf.data(), kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic bytes (not a checkpoint file)");

    uint32_t stored_crc;
    std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
    uint32_t crc = uint32_t(::crc32(0, reinterpret_cast<const Bytef*>(buf.data()), uInt(buf.size() - 4)));
    if (crc != stored_crc) throw std::runtime_error("checkpoint: CRC mismatch (corrupted file)");

    size_t off = 8;
    Checkpoint ckpt;
    ckpt.version = take<uint32_t>(buf, off);
    if (ckpt.version != 1)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(ckpt.version));
    uint32_t count = take<uint32_t>(buf, off);
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t nlen = take<uint16_t>(buf, off);
        if (off + nlen > buf.size()) throw std::runtime_error("checkpoint: truncated file");
        std::string name = buf.substr(off, nlen);
        off += nlen;
        uint8_t rank = take<uint8_t>(buf, off);
        Shape shape(rank);
        size_t numel = 1;
        for (uint8_t d = 0; d < rank; ++d) {
            shape[d] = size_t(take<uint64_t>(buf, off));
            numel *= shape[d];
        }
        if (off + numel * sizeof(float) > buf.size()) throw std::runtime_error("checkpoint: truncated file");
        std::vector<float> data(numel);
        std::memcpy(data.data(), buf.data() + off, numel * sizeof(float));
        off += numel * sizeof(float);
        if (!ckpt.tensors.emplace(name, Tensor::from_data(shape, std::move(data))).second)
            throw std::runtime_error("checkpoint: duplicate tensor name " + name);
    }
    uint32_t cfg_len = take<uint32_t>(buf, off);
    if (off + cfg_len + 4 != buf.size()) throw std::runtime_error("checkpoint: truncated or oversized file");
    std::string cfg = buf.substr(off, cfg_len);
    size_t pos = 0;
    while (pos < cfg.size()) {
        size_t nl = cfg.find('\n', pos);
        if (nl == std::string::npos) throw std::runtime_error("checkpoint: malformed config block");
        std::string line = cfg.substr(pos, nl - pos);
        pos = nl + 1;
        size_t eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("checkpoint: malformed config line " + line);
        ckpt.config[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return ckpt;
}

}  // namespace t2v
