#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "faithmate/backend.hpp"
#include "faithmate/toy_backend.hpp"
#include "faithmate/types.hpp"

namespace faithmate {

struct AdapterConfig {
    int rank = 64;
    double alpha = 128.0;
    double dropout = 0.1;
    std::vector<std::string> target_module_names; // matched as suffixes of parameter names
    std::string bias_mode = "none";

    void validate() const;
};

struct TrainConfig {
    int batch_size = 2;
    int grad_accum_steps = 4;
    double learning_rate = 5e-6;
    int epochs = 5;
    std::string schedule = "cosine";
    double warmup_ratio = 0.1;
    double max_grad_norm = 1.0;
    double dpo_beta = 0.1;
    uint64_t seed = 0;
    std::optional<int> max_steps; // overrides epochs when set

    void validate() const;
};

struct PairBuildResult {
    std::vector<PreferenceRecord> sft; // rejected mirrors chosen for SFT-only records
    std::vector<PreferenceRecord> dpo;
    int instances_seen = 0;
    int dpo_dropped_ties = 0;
    int skipped_unscored = 0;
};

// Eq-style argmax/argmin pair selection per instance. Ties break toward the
// lowest sample_index; instances whose max == min keep an SFT record but are
// dropped from DPO. ccshap is refused (evaluation-only).
PairBuildResult build_pairs(
    const std::map<std::string, std::vector<std::pair<CoTSample, double>>>& scored_sets,
    MetricId metric, const std::map<std::string, std::string>& prompts);

// Mean per-token negative log-likelihood of `target` under teacher forcing.
double sft_loss(Backend& handle, const std::string& prompt, const std::string& target);

// -log sigma(reward_chosen - reward_rejected)
double bt_reward_loss(double reward_chosen, double reward_rejected);

// -log sigma(beta * (policy/ref log-ratio of chosen - of rejected)),
// sequence log-probabilities summed over target tokens.
double dpo_loss(Backend& policy, Backend& reference, const PreferenceRecord& record, double beta);

// Same losses on the toy model with analytic gradients (dL/d full params);
// the training loop chains these into the adapter factors. sft_loss_grad
// returns the summed NLL (the quantity optimized); sft_loss reports the
// per-token mean.
double sft_loss_grad(ToyBackend& model, const std::string& prompt, const std::string& target,
                     ParamMap* grads_out);
double dpo_loss_grad(ToyBackend& policy, const ToyBackend& reference,
                     const PreferenceRecord& record, double beta, ParamMap* grads_out);

struct TrainStepLog {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
    std::optional<double> implicit_margin; // DPO only: beta * delta log-ratio
};

enum class TrainMode { sft, dpo };

struct TrainResult {
    ParamDelta delta; // materialized additive adapter delta
    std::vector<TrainStepLog> log;
    bool aborted = false; // non-finite loss; delta is the last good state
};

// Low-rank adapter training (SFT or DPO) with Adam, cosine schedule with
// warmup, gradient clipping, and gradient accumulation. Only the adapter
// factors on the targeted modules are optimized; DPO's reference is the
// pre-training snapshot of the same handle. Deterministic for a fixed seed.
TrainResult train(ToyBackend& model, const std::vector<PreferenceRecord>& records, TrainMode mode,
                  const AdapterConfig& adapter, const TrainConfig& config);

} // namespace faithmate
