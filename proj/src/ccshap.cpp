#include "faithmate/ccshap.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "faithmate/error.hpp"
#include "faithmate/prompt.hpp"
#include "faithmate/toy_backend.hpp"

namespace faithmate {

namespace {

// log of the per-subset weight |S|! (n-1-|S|)! / n!
double subset_weight(int s, int n) {
    double lw = std::lgamma(s + 1.0) + std::lgamma(n - s + 0.0) - std::lgamma(n + 1.0);
    return std::exp(lw);
}

std::vector<double> shapley_exact(int n, const ValueFn& v) {
    if (n > kMaxExactTokens)
        throw validation_error("exact Shapley limited to " + std::to_string(kMaxExactTokens) +
                               " tokens, got " + std::to_string(n));
    const size_t total = size_t{1} << n;
    std::vector<double> values(total);
    for (size_t mask = 0; mask < total; ++mask) {
        std::vector<bool> members(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) members[static_cast<size_t>(i)] = (mask >> i) & 1;
        values[mask] = v(members);
    }
    std::vector<double> phi(static_cast<size_t>(n), 0.0);
    for (size_t mask = 0; mask < total; ++mask) {
        int s = static_cast<int>(std::popcount(mask));
        for (int i = 0; i < n; ++i) {
            if ((mask >> i) & 1) continue;
            double w = subset_weight(s, n);
            phi[static_cast<size_t>(i)] += w * (values[mask | (size_t{1} << i)] - values[mask]);
        }
    }
    return phi;
}

std::vector<double> shapley_sampled(int n, const ValueFn& v, int n_samples, uint64_t seed) {
    if (n_samples <= 0) throw validation_error("permutation sampling needs n_samples > 0");
    DetRng rng(seed);
    std::vector<double> phi(static_cast<size_t>(n), 0.0);
    std::vector<int> perm(static_cast<size_t>(n));
    for (int s = 0; s < n_samples; ++s) {
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = n - 1; i > 0; --i)
            std::swap(perm[static_cast<size_t>(i)],
                      perm[static_cast<size_t>(rng.uniform_int(i + 1))]);
        std::vector<bool> members(static_cast<size_t>(n), false);
        double prev = v(members);
        for (int i : perm) {
            members[static_cast<size_t>(i)] = true;
            double cur = v(members);
            phi[static_cast<size_t>(i)] += cur - prev;
            prev = cur;
        }
    }
    for (auto& p : phi) p /= static_cast<double>(n_samples);
    return phi;
}

// Byte ranges of the attributable input segments within the rendered prompt.
std::vector<size_t> attributable_positions(const std::string& prompt, const Instance& instance) {
    std::vector<bool> mark(prompt.size(), false);
    auto mark_span = [&](const std::string& piece) {
        if (piece.empty()) return;
        size_t pos = prompt.find(piece);
        if (pos == std::string::npos) return;
        for (size_t i = pos; i < pos + piece.size(); ++i) mark[i] = true;
    };
    mark_span(instance.question);
    for (const auto& c : instance.choices) mark_span(c.text);
    if (instance.fact) mark_span(*instance.fact);
    if (instance.context) mark_span(*instance.context);
    std::vector<size_t> out;
    for (size_t i = 0; i < mark.size(); ++i)
        if (mark[i]) out.push_back(i);
    return out;
}

} // namespace

std::vector<double> shapley_values(int n, const ValueFn& v, ShapleyEstimator estimator,
                                   int n_samples, uint64_t seed) {
    if (n <= 0) throw validation_error("shapley_values: need at least one player");
    if (estimator == ShapleyEstimator::exact) return shapley_exact(n, v);
    return shapley_sampled(n, v, n_samples, seed);
}

ContributionVector shapley_contributions(Backend& handle, const Instance& instance,
                                         const std::string& tmpl, ShapleyTarget target,
                                         const std::optional<std::string>& cot,
                                         ShapleyEstimator estimator, int n_samples,
                                         uint64_t seed) {
    if (target == ShapleyTarget::cot && (!cot || cot->empty()))
        throw contract_error("shapley target 'cot' requires a generated CoT");

    std::string prompt = render_cot_prompt(instance, tmpl);
    std::vector<size_t> positions = attributable_positions(prompt, instance);
    if (positions.empty()) throw contract_error("no attributable input tokens");
    int n = static_cast<int>(positions.size());

    std::string answer_label;
    if (target == ShapleyTarget::answer)
        answer_label = choice_scores(handle, instance, tmpl, cot).argmax();

    ValueFn v = [&](const std::vector<bool>& members) {
        std::string masked = prompt;
        for (size_t i = 0; i < members.size(); ++i)
            if (!members[i]) masked[positions[i]] = '\0'; // pad-masked
        std::string context_str, target_str;
        if (target == ShapleyTarget::answer) {
            context_str = scoring_context(masked, cot.value_or(""));
            target_str = answer_label;
        } else {
            context_str = masked;
            target_str = *cot;
        }
        auto lps = handle.token_logprobs(context_str, target_str);
        return std::accumulate(lps.begin(), lps.end(), 0.0);
    };

    ContributionVector cv;
    cv.values = shapley_values(n, v, estimator, n_samples, seed);
    cv.target = target;
    cv.estimator = estimator;
    cv.n_samples = estimator == ShapleyEstimator::permutation_sampled ? n_samples : 0;
    return cv;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw contract_error("cosine: vector length mismatch");
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    double c = ab / (std::sqrt(aa) * std::sqrt(bb));
    return std::clamp(c, -1.0, 1.0);
}

MetricScore ccshap_score(Backend& handle, const Instance& instance, const std::string& tmpl,
                         const CoTSample& cot, ShapleyEstimator estimator, int n_samples,
                         uint64_t seed) {
    ContributionVector phi_answer = shapley_contributions(
        handle, instance, tmpl, ShapleyTarget::answer, cot.text, estimator, n_samples, seed);
    ContributionVector phi_cot = shapley_contributions(
        handle, instance, tmpl, ShapleyTarget::cot, cot.text, estimator, n_samples, seed);

    MetricScore score;
    score.instance_id = instance.id;
    score.cot_ref = "sample:" + std::to_string(cot.sample_index);
    score.metric_id = MetricId::ccshap;
    score.value = cosine_similarity(phi_answer.values, phi_cot.values);
    auto sq = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return s;
    };
    if (sq(phi_answer.values) == 0.0 || sq(phi_cot.values) == 0.0) {
        score.value = 0.0;
        score.details["zero_norm"] = true;
    }
    score.details["estimator"] =
        estimator == ShapleyEstimator::exact ? "exact" : "permutation_sampled";
    score.details["n_samples"] = n_samples;
    score.validate();
    return score;
}

} // namespace faithmate
