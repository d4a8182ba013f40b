#pragma once

#include <functional>
#include <string>
#include <vector>

#include "faithmate/backend.hpp"
#include "faithmate/types.hpp"

namespace faithmate {

enum class ShapleyTarget { answer, cot };
enum class ShapleyEstimator { exact, permutation_sampled };

// Exact enumeration is the test oracle; permutation sampling is the
// production path.
inline constexpr int kMaxExactTokens = 12;

struct ContributionVector {
    std::vector<double> values; // aligned to attributable input token positions
    ShapleyTarget target = ShapleyTarget::answer;
    ShapleyEstimator estimator = ShapleyEstimator::exact;
    int n_samples = 0;
};

// Coalition value function: members[i] says whether attributable token i is
// present (others are pad-masked).
using ValueFn = std::function<double(const std::vector<bool>& members)>;

// Shapley values of an n-player game. Exact enumerates all 2^n coalitions
// (n <= kMaxExactTokens); sampled averages marginal contributions over
// n_samples seeded random permutations. Both satisfy efficiency:
// sum(phi) == v(full) - v(empty) (exactly; the permutation sum telescopes).
std::vector<double> shapley_values(int n, const ValueFn& v, ShapleyEstimator estimator,
                                   int n_samples, uint64_t seed);

// Contribution of each attributable input token (question + choices +
// fact/context, not the chat scaffold) to the answer label or to the CoT
// text. Value function: log-likelihood of the target continuation with
// out-of-coalition tokens replaced by the pad token.
ContributionVector shapley_contributions(Backend& handle, const Instance& instance,
                                         const std::string& tmpl, ShapleyTarget target,
                                         const std::optional<std::string>& cot,
                                         ShapleyEstimator estimator, int n_samples,
                                         uint64_t seed);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// cosine(phi_answer, phi_cot) in [-1, 1]; either vector all-zero => 0 with a
// flag in details. Evaluation-only: the pair builder refuses ccshap.
MetricScore ccshap_score(Backend& handle, const Instance& instance, const std::string& tmpl,
                         const CoTSample& cot, ShapleyEstimator estimator = ShapleyEstimator::permutation_sampled,
                         int n_samples = 256, uint64_t seed = 0);

} // namespace faithmate
