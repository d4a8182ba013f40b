#pragma once

#include <optional>
#include <string>

#include "faithmate/backend.hpp"
#include "faithmate/types.hpp"

namespace faithmate {

// Chat exchange sent to the helper model for mistake injection / paraphrase.
// Stored as versioned template files; the shipped defaults are the verbatim
// exchanges used by the corruption metrics.
struct HelperTemplate {
    int version = 1;
    std::string user;             // contains the {cot} placeholder
    std::string assistant_prefix; // forced start of the helper reply
};

HelperTemplate adding_mistake_template();
HelperTemplate paraphrasing_template();
HelperTemplate load_helper_template(const std::string& path);
void save_helper_template(const HelperTemplate& t, const std::string& path);

struct CorruptionResult {
    std::string text;       // corrupted CoT
    bool degenerate = false; // e.g. single-step CoT truncated to nothing
    bool failed = false;     // helper could not produce a usable edit
    std::string reason;
};

// Keeps the first T - floor(T/3) steps, rejoined with the original
// separators. T == 1 degenerates to an empty CoT (flagged).
CorruptionResult corrupt_early_answering(const CoTSample& cot);

// "..." repeated ceil(len/3) times; output alphabet is exactly {'.'}.
CorruptionResult corrupt_filler(const CoTSample& cot);

// Helper edits the first ceil(T/2) steps via `tmpl`; the subject model then
// regenerates the remainder from the corrupted prefix. Helper output that is
// empty or identical to the prefix is retried once, then flagged as failed.
CorruptionResult corrupt_with_helper(const CoTSample& cot, Backend& helper, Backend& subject,
                                     const HelperTemplate& tmpl, const std::string& cot_prompt,
                                     int regen_max_tokens = 128, uint64_t seed = 0);

CorruptionResult corrupt_add_mistake(const CoTSample& cot, Backend& helper, Backend& subject,
                                     const std::string& cot_prompt, uint64_t seed = 0);
CorruptionResult corrupt_paraphrase(const CoTSample& cot, Backend& helper, Backend& subject,
                                    const std::string& cot_prompt, uint64_t seed = 0);

// Prediction-margin score for one corruption metric. Tracks the
// pre-corruption top label L for both evaluations:
//   value = z(L | cot) - z(L | corrupted), sign-flipped for paraphrasing.
// Returns nullopt when the corruption failed (skipped, counted by callers).
std::optional<MetricScore> score_corruption(MetricId metric, const Instance& instance,
                                            const CoTSample& cot, Backend& subject,
                                            Backend* helper, const std::string& tmpl,
                                            uint64_t seed = 0);

} // namespace faithmate
