#include "faithmate/manifest.hpp"

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "faithmate/error.hpp"

namespace faithmate {

namespace {

uint32_t rotl(uint32_t x, int n) { return (x << n) | (x >> (32 - n)); }

} // namespace

std::string sha1_hex(const std::string& bytes) {
    std::array<uint32_t, 5> h = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};

    std::string msg = bytes;
    uint64_t bit_len = static_cast<uint64_t>(bytes.size()) * 8;
    msg.push_back(static_cast<char>(0x80));
    while (msg.size() % 64 != 56) msg.push_back('\0');
    for (int i = 7; i >= 0; --i) msg.push_back(static_cast<char>((bit_len >> (8 * i)) & 0xFF));

    for (size_t chunk = 0; chunk < msg.size(); chunk += 64) {
        uint32_t w[80];
        for (int i = 0; i < 16; ++i) {
            w[i] = 0;
            for (int b = 0; b < 4; ++b)
                w[i] = (w[i] << 8) | static_cast<uint8_t>(msg[chunk + 4 * i + b]);
        }
        for (int i = 16; i < 80; ++i) w[i] = rotl(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);

        uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
        for (int i = 0; i < 80; ++i) {
            uint32_t f, k;
            if (i < 20) {
                f = (b & c) | (~b & d);
                k = 0x5A827999u;
            } else if (i < 40) {
                f = b ^ c ^ d;
                k = 0x6ED9EBA1u;
            } else if (i < 60) {
                f = (b & c) | (b & d) | (c & d);
                k = 0x8F1BBCDCu;
            } else {
                f = b ^ c ^ d;
                k = 0xCA62C1D6u;
            }
            uint32_t tmp = rotl(a, 5) + f + e + k + w[i];
            e = d;
            d = c;
            c = rotl(b, 30);
            b = a;
            a = tmp;
        }
        h[0] += a;
        h[1] += b;
        h[2] += c;
        h[3] += d;
        h[4] += e;
    }

    char out[41];
    std::snprintf(out, sizeof(out), "%08x%08x%08x%08x%08x", h[0], h[1], h[2], h[3], h[4]);
    return std::string(out);
}

std::string file_fingerprint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "missing";
    std::ostringstream buf;
    buf << in.rdbuf();
    return sha1_hex(buf.str());
}

Manifest make_manifest(const std::string& subcommand, const json& config,
                       const std::vector<std::string>& input_paths, uint64_t seed) {
    Manifest m;
    m.subcommand = subcommand;
    m.config = config;
    m.seed = seed;
    for (const auto& p : input_paths) m.inputs.emplace_back(p, file_fingerprint(p));

    json body;
    body["subcommand"] = m.subcommand;
    body["config"] = m.config;
    body["inputs"] = json::array();
    for (const auto& [path, fp] : m.inputs) body["inputs"].push_back({{"path", path}, {"fingerprint", fp}});
    body["seed"] = m.seed;
    body["code_version"] = m.code_version;
    m.id = sha1_hex(body.dump());
    return m;
}

void write_manifest(const Manifest& m, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::path dir = fs::path(out_dir) / "manifests";
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw parse_error("cannot create " + dir.string() + ": " + ec.message());

    json j;
    j["id"] = m.id;
    j["subcommand"] = m.subcommand;
    j["config"] = m.config;
    j["inputs"] = json::array();
    for (const auto& [path, fp] : m.inputs) j["inputs"].push_back({{"path", path}, {"fingerprint", fp}});
    j["seed"] = m.seed;
    j["code_version"] = m.code_version;
    j["schema_version"] = kSchemaVersion;

    fs::path file = dir / (m.id + ".json");
    std::ofstream out(file);
    if (!out) throw parse_error("cannot write " + file.string());
    out << j.dump(2) << "\n";
}

json artifact_header(const Manifest& m) {
    return json{{"type", "header"},
                {"schema_version", kSchemaVersion},
                {"manifest", m.id},
                {"subcommand", m.subcommand},
                {"code_version", m.code_version}};
}

} // namespace faithmate
