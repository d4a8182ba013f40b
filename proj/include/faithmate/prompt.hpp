#pragma once

#include <optional>
#include <string>

#include "faithmate/backend.hpp"
#include "faithmate/types.hpp"

namespace faithmate {

// The CoT elicitation prompt is a config artifact, not baked in. Placeholders:
// {question} {context} {choices} {fact}. Context/fact blocks vanish when the
// instance lacks them.
extern const char* kDefaultCotTemplate;

// Suffix appended before label-continuation scoring.
extern const char* kAnswerScaffold;

std::string render_cot_prompt(const Instance& instance, const std::string& tmpl);

// prompt + cot + answer scaffold; empty cot is allowed (direct answering).
std::string scoring_context(const std::string& cot_prompt, const std::string& cot_text);

// Finds the last "answer[:/is] <letter>" marker whose letter is one of
// `labels` (case-insensitive). Returns the canonical label.
std::optional<std::string> parse_predicted_label(const std::string& completion,
                                                 const std::vector<std::string>& labels);

// Splits a completion into (reasoning text, predicted label) at the final
// answer marker. Label absent => the whole completion is reasoning.
struct ParsedCompletion {
    std::string reasoning;
    std::optional<std::string> label;
};
ParsedCompletion split_completion(const std::string& completion,
                                  const std::vector<std::string>& labels);

// Samples one CoT. With force_answer_tail the answer is emitted by constrained
// decoding over the instance labels, so the completion always carries a
// parseable tail; without it, an unparseable completion yields a flagged
// sample (predicted_label absent), excluded from scoring but counted.
CoTSample generate_cot(Backend& handle, const Instance& instance, const std::string& tmpl,
                       const DecodingConfig& decoding, int sample_index, uint64_t seed,
                       bool force_answer_tail = true, int min_content_tokens = 3);

// Distribution over the instance's labels given an optional CoT.
ChoiceDistribution choice_scores(Backend& handle, const Instance& instance,
                                 const std::string& tmpl,
                                 const std::optional<std::string>& cot);

} // namespace faithmate
