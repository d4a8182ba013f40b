#include "faithmate/store.hpp"

#include <fstream>
#include <functional>

#include "faithmate/error.hpp"
#include "faithmate/text.hpp"

namespace faithmate {

namespace {

template <typename T>
size_t store_jsonl(const std::vector<T>& records, const std::string& path, bool append,
                   const std::function<json(const T&)>& encode,
                   const std::function<void(const T&)>& validate) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw parse_error("cannot open for writing: " + path);
    size_t n = 0;
    for (const auto& r : records) {
        validate(r);
        json j = encode(r);
        j["schema_version"] = kSchemaVersion;
        out << j.dump() << "\n";
        ++n;
    }
    return n;
}

template <typename T>
std::vector<T> load_jsonl(const std::string& path, const std::function<T(const json&)>& decode) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open: " + path);
    std::vector<T> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw parse_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        int version = j.value("schema_version", 0);
        if (version > kSchemaVersion)
            throw schema_error(path + ":" + std::to_string(line_no) + ": schema_version " +
                               std::to_string(version) + " is newer than supported " +
                               std::to_string(kSchemaVersion));
        if (j.value("type", "") == "header") continue;
        try {
            out.push_back(decode(j));
        } catch (const json::exception& e) {
            throw parse_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

} // namespace

size_t store_scores(const std::vector<MetricScore>& records, const std::string& path,
                    bool append) {
    return store_jsonl<MetricScore>(
        records, path, append, [](const MetricScore& s) { return to_json(s); },
        [](const MetricScore& s) { s.validate(); });
}

std::vector<MetricScore> load_scores(const std::string& path) {
    return load_jsonl<MetricScore>(path, score_from_json);
}

size_t store_preferences(const std::vector<PreferenceRecord>& records, const std::string& path,
                         bool append) {
    return store_jsonl<PreferenceRecord>(
        records, path, append, [](const PreferenceRecord& r) { return to_json(r); },
        [](const PreferenceRecord& r) { r.validate(); });
}

std::vector<PreferenceRecord> load_preferences(const std::string& path) {
    return load_jsonl<PreferenceRecord>(path, preference_from_json);
}

size_t store_cots(const std::vector<CoTSample>& records, const std::string& path, bool append) {
    return store_jsonl<CoTSample>(
        records, path, append, [](const CoTSample& c) { return to_json(c); },
        [](const CoTSample&) {});
}

std::vector<CoTSample> load_cots(const std::string& path) {
    return load_jsonl<CoTSample>(path, cot_from_json);
}

size_t store_instances(const std::vector<Instance>& records, const std::string& path,
                       bool append) {
    return store_jsonl<Instance>(
        records, path, append, [](const Instance& x) { return to_json(x); },
        [](const Instance& x) { x.validate(); });
}

} // namespace faithmate
