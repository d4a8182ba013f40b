#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace faithmate {

using json = nlohmann::json;

// Schema version stamped into every JSON Lines artifact this toolkit writes.
inline constexpr int kSchemaVersion = 1;

struct Choice {
    std::string label; // single letter, e.g. "A"
    std::string text;
};

// One multiple-choice question. `context` carries a LogiQA-style passage,
// `fact` an OpenbookQA-style supporting fact; either may be absent.
struct Instance {
    std::string id;
    std::string question;
    std::optional<std::string> context;
    std::vector<Choice> choices;
    std::string answer_key;
    std::optional<std::string> fact;

    // Throws validation_error on duplicate labels, unknown answer_key,
    // or fewer than two choices.
    void validate() const;
    std::vector<std::string> labels() const;
};

struct DecodingConfig {
    double temperature = 1.2;
    std::optional<int> top_k = 50;
    std::optional<double> top_p = 0.95;
    int max_new_tokens = 256;
    bool greedy = false; // greedy=true ignores temperature/top_k/top_p

    void validate() const;
};

// A sampled reasoning trace, segmented into steps. Separators are recorded so
// that joining steps reproduces `text` byte-for-byte.
struct CoTSample {
    std::string instance_id;
    std::string text;
    std::vector<std::string> steps;
    std::vector<std::string> separators; // separators[i] follows steps[i]; size == steps.size(), last entry may be ""
    std::optional<std::string> predicted_label; // nullopt => flagged, excluded from scoring
    DecodingConfig decoding;
    int sample_index = 0;

    std::string joined() const;
};

enum class MetricId {
    early_answering,
    adding_mistake,
    filler_token,
    paraphrasing,
    ccshap,
    ff_hard,
    ff_cont,
};

const char* metric_name(MetricId id);
MetricId metric_from_name(const std::string& name);
bool is_corruption_metric(MetricId id);
// ccshap is evaluation-only; everything else may rank training pairs.
bool is_training_metric(MetricId id);

struct MetricScore {
    std::string instance_id;
    std::string cot_ref; // sample index or checkpoint tag
    MetricId metric_id = MetricId::filler_token;
    double value = 0.0;
    std::optional<double> z_before;
    std::optional<double> z_after;
    json details = json::object();

    // Enforces the per-metric range invariants (corruption margin in [-1,1],
    // ccshap in [-1,1], ff_hard in {0,1}, ff_cont in [0,1]) and the sign
    // relation value = +/-(z_before - z_after) where both sides are present.
    void validate() const;
};

struct PreferenceRecord {
    std::string instance_id;
    std::string prompt;
    CoTSample chosen;
    CoTSample rejected;
    MetricId metric_id = MetricId::filler_token;
    double chosen_score = 0.0;
    double rejected_score = 0.0;

    void validate() const;
};

// JSON (de)serialization; used by the JSONL stores and the wire protocol.
json to_json(const Choice& c);
json to_json(const Instance& x);
json to_json(const DecodingConfig& d);
json to_json(const CoTSample& c);
json to_json(const MetricScore& s);
json to_json(const PreferenceRecord& r);

Choice choice_from_json(const json& j);
Instance instance_from_json(const json& j);
DecodingConfig decoding_from_json(const json& j);
CoTSample cot_from_json(const json& j);
MetricScore score_from_json(const json& j);
PreferenceRecord preference_from_json(const json& j);

} // namespace faithmate
