#pragma once

#include <string>
#include <vector>

#include "faithmate/types.hpp"

namespace faithmate {

enum class DatasetFormat { openbookqa, logiqa, generic };

DatasetFormat dataset_format_from_name(const std::string& name);

// Reads one JSON object per line, validates every record against the Instance
// invariants, and preserves file order. Throws parse_error with the offending
// line number on malformed input.
std::vector<Instance> load_dataset(const std::string& path, DatasetFormat format_hint);

} // namespace faithmate
