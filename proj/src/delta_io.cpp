#include "faithmate/delta_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "faithmate/error.hpp"

namespace faithmate {

namespace {

constexpr char kMagic[8] = {'F', 'M', 'D', 'E', 'L', 'T', 'A', '\0'};
constexpr uint32_t kFormatVersion = 1;
constexpr uint8_t kDtypeF64 = 0;

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw parse_error("truncated delta file: " + path);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8))
        throw parse_error("truncated delta file: " + path);
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::string read_str(std::istream& in, const std::string& path) {
    uint32_t n = read_u32(in, path);
    std::string s(n, '\0');
    if (n && !in.read(s.data(), n)) throw parse_error("truncated delta file: " + path);
    return s;
}

} // namespace

void save_param_delta(const ParamDelta& delta, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw parse_error("cannot open for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, kFormatVersion);
    write_u32(out, static_cast<uint32_t>(delta.base_fingerprint.size()));
    out.write(delta.base_fingerprint.data(),
              static_cast<std::streamsize>(delta.base_fingerprint.size()));
    write_u32(out, static_cast<uint32_t>(delta.entries.size()));
    for (const auto& [name, m] : delta.entries) {
        write_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(out, static_cast<uint32_t>(m.rows));
        write_u32(out, static_cast<uint32_t>(m.cols));
        out.put(static_cast<char>(kDtypeF64));
        for (double v : m.data) write_f64(out, v);
    }
    if (!out) throw parse_error("write failed: " + path);
}

ParamDelta load_param_delta(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_error("cannot open: " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw parse_error("not a delta file: " + path);
    uint32_t version = read_u32(in, path);
    if (version > kFormatVersion)
        throw schema_error(path + ": delta format version " + std::to_string(version) +
                           " is newer than supported " + std::to_string(kFormatVersion));
    ParamDelta delta;
    delta.base_fingerprint = read_str(in, path);
    uint32_t n = read_u32(in, path);
    for (uint32_t i = 0; i < n; ++i) {
        std::string name = read_str(in, path);
        uint32_t rows = read_u32(in, path);
        uint32_t cols = read_u32(in, path);
        int dtype = in.get();
        if (dtype != kDtypeF64) throw parse_error(path + ": unsupported dtype");
        Matrix m(rows, cols);
        for (auto& v : m.data) v = read_f64(in, path);
        delta.entries[name] = std::move(m);
    }
    return delta;
}

} // namespace faithmate
