#pragma once

#include <string>
#include <vector>

#include "faithmate/types.hpp"

namespace faithmate {

// Every run writes a manifest (config hash, input fingerprints, seeds, code
// version) and every artifact file records the manifest id that produced it,
// so any artifact is reproducible from its manifest.

inline constexpr const char* kCodeVersion = "0.1.0";

std::string sha1_hex(const std::string& bytes);
std::string file_fingerprint(const std::string& path); // hash of contents, "missing" if absent

struct Manifest {
    std::string id; // hash of the canonical manifest body
    std::string subcommand;
    json config;
    std::vector<std::pair<std::string, std::string>> inputs; // (path, fingerprint)
    uint64_t seed = 0;
    std::string code_version = kCodeVersion;
};

Manifest make_manifest(const std::string& subcommand, const json& config,
                       const std::vector<std::string>& input_paths, uint64_t seed);
void write_manifest(const Manifest& m, const std::string& out_dir);

// Header line prepended to JSONL artifacts: {"schema_version", "manifest"}.
json artifact_header(const Manifest& m);

} // namespace faithmate
