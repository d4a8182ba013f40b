#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <unordered_map>

#include "faithmate/backend.hpp"
#include "faithmate/tensor.hpp"
#include "faithmate/tokenizer.hpp"

namespace faithmate {

struct ToyConfig {
    int vocab_size = CharTokenizer::kVocabSize;
    int d_model = 16;
    int n_layers = 2;
    int n_heads = 2;
    int hidden = 64; // MLP width
    int max_seq = 512;
    uint64_t init_seed = 1234;
    double init_std = 0.08;
};

// Deterministic pseudo-random doubles (uniform + gaussian) built on
// splitmix64 so initialization is identical across platforms and sessions.
class DetRng {
public:
    explicit DetRng(uint64_t seed) : state_(seed) {}
    uint64_t next_u64();
    double uniform();              // [0, 1)
    double gaussian();             // Box-Muller
    int uniform_int(int n);        // [0, n)

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Activation cache from one forward pass, consumed by backward().
struct LayerCache {
    Matrix x_in;               // input to the attention block
    Matrix h_attn;             // normed input
    std::vector<double> r_attn;
    Matrix q, k, v;
    std::vector<Matrix> probs; // one T x T matrix per head
    Matrix attn_concat;        // head outputs before wo
    Matrix x_mid;              // input to the MLP block
    Matrix h_mlp;
    std::vector<double> r_mlp;
    Matrix gate_pre, up, act;
};

struct ToyForwardCache {
    std::vector<int> tokens;
    std::vector<LayerCache> layers;
    Matrix x_final;
    std::vector<double> r_final;
    Matrix h_final;
};

// Two-layer pre-norm causal transformer over the char vocabulary, double
// precision throughout, with hand-coded backprop. Every training, unlearning,
// and merging path in the toolkit is testable against this model offline.
class ToyBackend : public Backend,
                   public std::enable_shared_from_this<ToyBackend> {
public:
    explicit ToyBackend(const ToyConfig& config);
    ToyBackend(const ToyConfig& config, ParamMap params);

    // Backend interface
    std::string fingerprint() const override;
    std::set<Capability> capabilities() const override;
    GenerateResult generate(const std::string& prompt, const DecodingConfig& decoding,
                            uint64_t seed) override;
    ChoiceDistribution choice_scores(const std::string& prompt,
                                     const std::vector<std::string>& labels) override;
    std::vector<double> token_logprobs(const std::string& prompt,
                                       const std::string& target) override;
    std::shared_ptr<Backend> apply_delta(const ParamDelta& delta) override;
    SnapshotToken snapshot() override;
    void restore(SnapshotToken token) override;
    void apply_delta_inplace(const ParamDelta& delta) override;

    // Trainable surface
    const ToyConfig& config() const { return config_; }
    const ParamMap& params() const { return params_; }
    void set_params(ParamMap params) { params_ = std::move(params); }
    void set_param(const std::string& name, const Matrix& value);

    // Per-position logits (rows = positions, cols = vocab). Sequences longer
    // than max_seq keep their tail.
    Matrix logits(const std::vector<int>& tokens) const;
    std::unique_ptr<ToyForwardCache> forward_cached(const std::vector<int>& tokens) const;
    // dLoss/dParams given dLoss/dLogits.
    ParamMap backward(const ToyForwardCache& cache, const Matrix& dlogits) const;

    std::vector<int> encode(const std::string& text) const { return CharTokenizer::encode(text); }

private:
    ToyConfig config_;
    ParamMap params_;
    std::unordered_map<SnapshotToken, ParamMap> snapshots_;
    SnapshotToken next_token_ = 1;

    void check_delta(const ParamDelta& delta) const;
    std::vector<int> clamp_tokens(std::vector<int> tokens) const;
};

ParamMap toy_init_params(const ToyConfig& config);

// Default LoRA target suffixes on the toy model (attention q/k/v/o plus the
// MLP gate/up/down projections).
std::vector<std::string> toy_default_target_modules();

} // namespace faithmate
