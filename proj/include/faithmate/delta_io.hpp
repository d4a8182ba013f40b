#pragma once

#include <string>

#include "faithmate/backend.hpp"

namespace faithmate {

// Binary ParamDelta container: magic, format version, base_fingerprint
// header, then (name, shape, dtype, raw little-endian f64 values) entries.
void save_param_delta(const ParamDelta& delta, const std::string& path);
ParamDelta load_param_delta(const std::string& path);

} // namespace faithmate
