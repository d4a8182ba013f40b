#pragma once

#include <optional>
#include <string>
#include <vector>

#include "faithmate/backend.hpp"
#include "faithmate/toy_backend.hpp"
#include "faithmate/types.hpp"

namespace faithmate {

struct UnlearnConfig {
    double beta = 0.1;
    double npo_coeff = 1.0;
    double kl_coeff = 1.0;
    std::string ref_policy = "fine_tuned";
    int epochs = 5;
    double warmup = 0.0;
    double learning_rate = 1e-5;
    int retain_set_size = 16;
    int min_content_tokens = 3;
    uint64_t seed = 0;

    void validate() const;
};

struct StepFlipRecord {
    int step_index = 0;
    std::string original_label;
    std::string post_unlearn_label;
    bool flipped = false;
    bool skipped = false;
};

struct FfResult {
    int ff_hard = 0;
    double ff_cont = 0.0;
    std::vector<StepFlipRecord> steps;
    int skipped_count = 0;
    bool undefined = false; // all steps skipped
};

// Seeded uniform sample of CoT steps from the dataset, excluding any step
// from the instance being unlearned. Throws on an insufficient pool.
std::vector<std::string> build_retain_set(const std::vector<CoTSample>& dataset_cots,
                                          const CoTSample& exclude, int size, uint64_t seed);

// NPO+KL objective on the toy model:
//   L = npo_coeff * L_forget + kl_coeff * L_retain
// L_forget = (2/beta) * mean over forget tokens of
//            log(1 + exp(beta * (log pi_theta(t) - log pi_ref(t))))
// L_retain = mean over retain positions of KL(pi_ref || pi_theta).
// Forget tokens are the content-bearing tokens of the selected step inside
// the full CoT context. `grads_out`, when non-null, receives dL/dparams.
double npo_kl_loss(ToyBackend& model, const ToyBackend& reference,
                   const std::string& context, const std::string& step_text,
                   const std::vector<std::string>& retain_texts, const UnlearnConfig& config,
                   ParamMap* grads_out);

struct UnlearnResult {
    ParamDelta delta;
    bool skipped = false;  // step below the content-token threshold
    bool diverged = false; // non-finite loss, aborted
    double initial_forget_logprob = 0.0;
    double final_forget_logprob = 0.0;
};

// Optimizes the NPO+KL objective for `epochs` passes (Adam) and returns the
// parameter delta. The model is restored to its pre-call parameters; callers
// apply the delta transiently for evaluation.
UnlearnResult unlearn_step(ToyBackend& model, const Instance& instance, const CoTSample& cot,
                           int step_index, const std::vector<std::string>& retain,
                           const UnlearnConfig& config, const std::string& tmpl);

// Per-step unlearn -> re-evaluate -> restore. ff_hard = 1 iff any flip;
// ff_cont = flips / non-skipped steps; ff_hard == I[ff_cont > 0] by
// construction. Baseline label is recorded before any unlearning.
FfResult ff_scores(ToyBackend& model, const Instance& instance, const CoTSample& cot,
                   const std::vector<CoTSample>& dataset_cots, const UnlearnConfig& config,
                   const std::string& tmpl);

// MetricScore view of an FfResult (per-step records land in details).
MetricScore ff_metric_score(const FfResult& r, MetricId which, const std::string& instance_id,
                            const std::string& cot_ref);

// Mean log-probability of the forget tokens of one step under the model;
// the quantity unlearning must drive down.
double forget_token_logprob(ToyBackend& model, const std::string& context,
                            const std::string& step_text, int min_content_tokens);

} // namespace faithmate
