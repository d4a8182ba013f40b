#pragma once

#include <string>
#include <vector>

#include "faithmate/types.hpp"

namespace faithmate {

// JSON Lines persistence. Every line carries schema_version; loading a file
// written by a newer schema raises schema_error instead of coercing.

size_t store_scores(const std::vector<MetricScore>& records, const std::string& path,
                    bool append = false);
std::vector<MetricScore> load_scores(const std::string& path);

size_t store_preferences(const std::vector<PreferenceRecord>& records, const std::string& path,
                         bool append = false);
std::vector<PreferenceRecord> load_preferences(const std::string& path);

size_t store_cots(const std::vector<CoTSample>& records, const std::string& path,
                  bool append = false);
std::vector<CoTSample> load_cots(const std::string& path);

size_t store_instances(const std::vector<Instance>& records, const std::string& path,
                       bool append = false);

} // namespace faithmate
