#include "faithmate/types.hpp"

#include <cmath>
#include <set>

#include "faithmate/error.hpp"

namespace faithmate {

void Instance::validate() const {
    if (id.empty()) throw validation_error("instance: empty id");
    if (question.empty()) throw validation_error("instance " + id + ": empty question");
    if (choices.size() < 2) throw validation_error("instance " + id + ": fewer than two choices");
    std::set<std::string> seen;
    for (const auto& c : choices) {
        if (c.label.empty()) throw validation_error("instance " + id + ": empty choice label");
        if (!seen.insert(c.label).second)
            throw validation_error("instance " + id + ": duplicate label " + c.label);
    }
    if (answer_key.empty()) throw validation_error("instance " + id + ": missing answer_key");
    if (!seen.count(answer_key))
        throw validation_error("instance " + id + ": answer_key " + answer_key +
                               " not among choice labels");
}

std::vector<std::string> Instance::labels() const {
    std::vector<std::string> out;
    out.reserve(choices.size());
    for (const auto& c : choices) out.push_back(c.label);
    return out;
}

void DecodingConfig::validate() const {
    if (temperature < 0) throw validation_error("decoding: negative temperature");
    if (top_k && *top_k <= 0) throw validation_error("decoding: top_k must be positive");
    if (top_p && (*top_p <= 0.0 || *top_p > 1.0))
        throw validation_error("decoding: top_p must be in (0,1]");
    if (max_new_tokens <= 0) throw validation_error("decoding: max_new_tokens must be positive");
}

std::string CoTSample::joined() const {
    std::string out;
    for (size_t i = 0; i < steps.size(); ++i) {
        out += steps[i];
        if (i < separators.size()) out += separators[i];
    }
    return out;
}

const char* metric_name(MetricId id) {
    switch (id) {
        case MetricId::early_answering: return "early_answering";
        case MetricId::adding_mistake: return "adding_mistake";
        case MetricId::filler_token: return "filler_token";
        case MetricId::paraphrasing: return "paraphrasing";
        case MetricId::ccshap: return "ccshap";
        case MetricId::ff_hard: return "ff_hard";
        case MetricId::ff_cont: return "ff_cont";
    }
    return "unknown";
}

MetricId metric_from_name(const std::string& name) {
    for (MetricId id : {MetricId::early_answering, MetricId::adding_mistake,
                        MetricId::filler_token, MetricId::paraphrasing, MetricId::ccshap,
                        MetricId::ff_hard, MetricId::ff_cont}) {
        if (name == metric_name(id)) return id;
    }
    throw validation_error("unknown metric id: " + name);
}

bool is_corruption_metric(MetricId id) {
    return id == MetricId::early_answering || id == MetricId::adding_mistake ||
           id == MetricId::filler_token || id == MetricId::paraphrasing;
}

bool is_training_metric(MetricId id) { return id != MetricId::ccshap; }

void MetricScore::validate() const {
    if (!std::isfinite(value))
        throw validation_error("score " + instance_id + ": non-finite value");
    if (z_before && (*z_before < 0.0 || *z_before > 1.0))
        throw validation_error("score " + instance_id + ": z_before out of [0,1]");
    if (z_after && (*z_after < 0.0 || *z_after > 1.0))
        throw validation_error("score " + instance_id + ": z_after out of [0,1]");
    if (is_corruption_metric(metric_id) || metric_id == MetricId::ccshap) {
        if (value < -1.0 - 1e-12 || value > 1.0 + 1e-12)
            throw validation_error("score " + instance_id + ": value out of [-1,1]");
    }
    if (is_corruption_metric(metric_id) && z_before && z_after) {
        double margin = *z_before - *z_after;
        double expect = metric_id == MetricId::paraphrasing ? -margin : margin;
        if (std::abs(value - expect) > 1e-9)
            throw validation_error("score " + instance_id +
                                   ": value violates the corruption sign convention");
    }
    if (metric_id == MetricId::ff_hard && value != 0.0 && value != 1.0)
        throw validation_error("score " + instance_id + ": ff_hard must be 0 or 1");
    if (metric_id == MetricId::ff_cont && (value < 0.0 || value > 1.0))
        throw validation_error("score " + instance_id + ": ff_cont out of [0,1]");
}

void PreferenceRecord::validate() const {
    if (chosen_score < rejected_score)
        throw validation_error("preference " + instance_id + ": chosen_score < rejected_score");
    // SFT-only records mirror chosen into rejected; distinct samples are
    // required only when the scores actually differ.
    if (chosen_score != rejected_score && chosen.sample_index == rejected.sample_index)
        throw validation_error("preference " + instance_id + ": chosen == rejected");
}

json to_json(const Choice& c) { return json{{"label", c.label}, {"text", c.text}}; }

json to_json(const Instance& x) {
    json j{{"id", x.id}, {"question", x.question}, {"answer_key", x.answer_key}};
    j["choices"] = json::array();
    for (const auto& c : x.choices) j["choices"].push_back(to_json(c));
    if (x.context) j["context"] = *x.context;
    if (x.fact) j["fact"] = *x.fact;
    return j;
}

json to_json(const DecodingConfig& d) {
    json j{{"temperature", d.temperature},
           {"max_new_tokens", d.max_new_tokens},
           {"greedy", d.greedy}};
    if (d.top_k) j["top_k"] = *d.top_k;
    if (d.top_p) j["top_p"] = *d.top_p;
    return j;
}

json to_json(const CoTSample& c) {
    json j{{"instance_id", c.instance_id},
           {"text", c.text},
           {"steps", c.steps},
           {"separators", c.separators},
           {"decoding", to_json(c.decoding)},
           {"sample_index", c.sample_index}};
    if (c.predicted_label) j["predicted_label"] = *c.predicted_label;
    return j;
}

json to_json(const MetricScore& s) {
    json j{{"instance_id", s.instance_id},
           {"cot_ref", s.cot_ref},
           {"metric_id", metric_name(s.metric_id)},
           {"value", s.value}};
    if (s.z_before) j["z_before"] = *s.z_before;
    if (s.z_after) j["z_after"] = *s.z_after;
    if (!s.details.empty()) j["details"] = s.details;
    return j;
}

json to_json(const PreferenceRecord& r) {
    return json{{"instance_id", r.instance_id},
                {"prompt", r.prompt},
                {"chosen", to_json(r.chosen)},
                {"rejected", to_json(r.rejected)},
                {"metric_id", metric_name(r.metric_id)},
                {"chosen_score", r.chosen_score},
                {"rejected_score", r.rejected_score}};
}

Choice choice_from_json(const json& j) {
    return Choice{j.at("label").get<std::string>(), j.at("text").get<std::string>()};
}

Instance instance_from_json(const json& j) {
    Instance x;
    x.id = j.at("id").get<std::string>();
    x.question = j.at("question").get<std::string>();
    for (const auto& c : j.at("choices")) x.choices.push_back(choice_from_json(c));
    x.answer_key = j.at("answer_key").get<std::string>();
    if (j.contains("context") && !j["context"].is_null())
        x.context = j["context"].get<std::string>();
    if (j.contains("fact") && !j["fact"].is_null()) x.fact = j["fact"].get<std::string>();
    return x;
}

DecodingConfig decoding_from_json(const json& j) {
    DecodingConfig d;
    d.temperature = j.value("temperature", d.temperature);
    d.max_new_tokens = j.value("max_new_tokens", d.max_new_tokens);
    d.greedy = j.value("greedy", d.greedy);
    d.top_k.reset();
    d.top_p.reset();
    if (j.contains("top_k") && !j["top_k"].is_null()) d.top_k = j["top_k"].get<int>();
    if (j.contains("top_p") && !j["top_p"].is_null()) d.top_p = j["top_p"].get<double>();
    return d;
}

CoTSample cot_from_json(const json& j) {
    CoTSample c;
    c.instance_id = j.at("instance_id").get<std::string>();
    c.text = j.at("text").get<std::string>();
    c.steps = j.at("steps").get<std::vector<std::string>>();
    c.separators = j.at("separators").get<std::vector<std::string>>();
    if (j.contains("predicted_label") && !j["predicted_label"].is_null())
        c.predicted_label = j["predicted_label"].get<std::string>();
    if (j.contains("decoding")) c.decoding = decoding_from_json(j["decoding"]);
    c.sample_index = j.value("sample_index", 0);
    return c;
}

MetricScore score_from_json(const json& j) {
    MetricScore s;
    s.instance_id = j.at("instance_id").get<std::string>();
    s.cot_ref = j.at("cot_ref").get<std::string>();
    s.metric_id = metric_from_name(j.at("metric_id").get<std::string>());
    s.value = j.at("value").get<double>();
    if (j.contains("z_before") && !j["z_before"].is_null())
        s.z_before = j["z_before"].get<double>();
    if (j.contains("z_after") && !j["z_after"].is_null()) s.z_after = j["z_after"].get<double>();
    if (j.contains("details")) s.details = j["details"];
    return s;
}

PreferenceRecord preference_from_json(const json& j) {
    PreferenceRecord r;
    r.instance_id = j.at("instance_id").get<std::string>();
    r.prompt = j.at("prompt").get<std::string>();
    r.chosen = cot_from_json(j.at("chosen"));
    r.rejected = cot_from_json(j.at("rejected"));
    r.metric_id = metric_from_name(j.at("metric_id").get<std::string>());
    r.chosen_score = j.at("chosen_score").get<double>();
    r.rejected_score = j.at("rejected_score").get<double>();
    return r;
}

} // namespace faithmate
