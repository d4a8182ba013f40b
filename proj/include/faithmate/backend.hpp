#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "faithmate/tensor.hpp"
#include "faithmate/types.hpp"

namespace faithmate {

enum class Capability { generate, choice_scores, token_logprobs, apply_delta, trainable };

// Normalized probability over a fixed set of answer labels.
struct ChoiceDistribution {
    std::map<std::string, double> probs;

    // Throws validation_error unless probs are >= 0 and sum to 1 +/- 1e-6.
    void validate() const;
    std::string argmax() const;
    double at(const std::string& label) const;
};

// Additive named parameter delta. Application requires a matching base model
// fingerprint; shapes must match the base parameters entry by entry.
struct ParamDelta {
    std::string base_fingerprint;
    ParamMap entries;

    ParamDelta negated() const;
    static ParamDelta zero_like(const std::string& fingerprint) {
        return ParamDelta{fingerprint, {}};
    }
};

// Task vectors are parameter deltas (fine-tuned minus base); merging operates
// on the same representation.
using TaskVector = ParamDelta;

struct GenerateResult {
    std::string text; // completion only, prompt excluded
};

using SnapshotToken = uint64_t;

// Uniform contract over any causal language model. Read operations
// (generate / choice_scores / token_logprobs) may run concurrently;
// apply_delta / snapshot / restore require exclusive access.
class Backend {
public:
    virtual ~Backend() = default;

    virtual std::string fingerprint() const = 0;
    virtual std::set<Capability> capabilities() const = 0;

    // Samples a completion of `prompt`. Greedy decoding must be a pure
    // function of (parameters, inputs); sampled decoding is seeded.
    virtual GenerateResult generate(const std::string& prompt, const DecodingConfig& decoding,
                                    uint64_t seed) = 0;

    // Distribution over `labels` as the answer continuation of `prompt`,
    // length-normalized label likelihood renormalized over the choices.
    virtual ChoiceDistribution choice_scores(const std::string& prompt,
                                             const std::vector<std::string>& labels) = 0;

    // One log-probability per target token under teacher forcing; all <= 0.
    // Throws contract_error on an empty target.
    virtual std::vector<double> token_logprobs(const std::string& prompt,
                                               const std::string& target) = 0;

    // Additive, out-of-place parameter update. Refuses deltas whose
    // base_fingerprint does not match this handle.
    virtual std::shared_ptr<Backend> apply_delta(const ParamDelta& delta) = 0;

    // In-place transient mutation support: restore(snapshot()) must return the
    // handle to byte-identical parameters.
    virtual SnapshotToken snapshot() = 0;
    virtual void restore(SnapshotToken token) = 0;
    virtual void apply_delta_inplace(const ParamDelta& delta) = 0;
};

using BackendPtr = std::shared_ptr<Backend>;

} // namespace faithmate
