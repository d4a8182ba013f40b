#include <cmath>

#include "doctest.h"
#include "faithmate/ccshap.hpp"
#include "faithmate/error.hpp"
#include "faithmate/prompt.hpp"
#include "faithmate/toy_backend.hpp"

using namespace faithmate;

namespace {

Instance tiny_instance() {
    // Short question/choice texts keep the attributable token count small.
    Instance x;
    x.id = "q1";
    x.question = "ab";
    x.choices = {{"A", "c"}, {"B", "d"}};
    x.answer_key = "A";
    return x;
}

} // namespace

TEST_CASE("two-player shapley oracle") {
    auto v = [](const std::vector<bool>& m) {
        if (m[0] && m[1]) return 4.0;
        if (m[0]) return 1.0;
        if (m[1]) return 2.0;
        return 0.0;
    };
    auto phi = shapley_values(2, v, ShapleyEstimator::exact, 0, 0);
    REQUIRE(phi.size() == 2);
    CHECK(phi[0] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(phi[1] == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("additive games attribute exactly their weights") {
    std::vector<double> w = {0.5, -1.0, 2.0, 0.25};
    auto v = [&](const std::vector<bool>& m) {
        double s = 0.0;
        for (size_t i = 0; i < m.size(); ++i)
            if (m[i]) s += w[i];
        return s;
    };
    auto exact = shapley_values(4, v, ShapleyEstimator::exact, 0, 0);
    auto sampled = shapley_values(4, v, ShapleyEstimator::permutation_sampled, 200, 3);
    for (int i = 0; i < 4; ++i) {
        CHECK(exact[i] == doctest::Approx(w[i]).epsilon(1e-10));
        // additive games have permutation-independent marginals
        CHECK(sampled[i] == doctest::Approx(w[i]).epsilon(1e-10));
    }
}

TEST_CASE("both estimators satisfy efficiency") {
    DetRng rng(77);
    const int n = 6;
    std::vector<double> w(n);
    for (auto& x : w) x = rng.gaussian();
    auto v = [&](const std::vector<bool>& m) {
        double s = 0.0;
        int count = 0;
        for (int i = 0; i < n; ++i)
            if (m[i]) {
                s += w[i];
                ++count;
            }
        return std::log1p(std::abs(s)) + 0.1 * count * count; // nonlinear on purpose
    };
    std::vector<bool> full(n, true), empty(n, false);
    double span = v(full) - v(empty);

    for (auto est : {ShapleyEstimator::exact, ShapleyEstimator::permutation_sampled}) {
        auto phi = shapley_values(n, v, est, 50, 5);
        double sum = 0.0;
        for (double p : phi) sum += p;
        CHECK(sum == doctest::Approx(span).epsilon(1e-9));
    }
}

TEST_CASE("sampling converges to the exact values") {
    DetRng rng(13);
    const int n = 7;
    std::vector<double> w(n);
    for (auto& x : w) x = rng.gaussian();
    auto v = [&](const std::vector<bool>& m) {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            if (m[i]) s += w[i] * (1.0 + 0.2 * i);
        return std::tanh(s);
    };
    auto exact = shapley_values(n, v, ShapleyEstimator::exact, 0, 0);
    auto sampled = shapley_values(n, v, ShapleyEstimator::permutation_sampled, 3000, 99);

    double lo = exact[0], hi = exact[0];
    for (double p : exact) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    double range = std::max(1e-9, hi - lo);
    for (int i = 0; i < n; ++i) CHECK(std::abs(sampled[i] - exact[i]) <= 0.05 * range);
}

TEST_CASE("exact enumeration refuses large games") {
    auto v = [](const std::vector<bool>&) { return 0.0; };
    CHECK_THROWS_AS(shapley_values(kMaxExactTokens + 1, v, ShapleyEstimator::exact, 0, 0), Error);
    CHECK_THROWS_AS(shapley_values(0, v, ShapleyEstimator::exact, 0, 0), Error);
}

TEST_CASE("cosine similarity basics") {
    std::vector<double> a = {1, 2, 3};
    std::vector<double> b = {2, 4, 6};
    std::vector<double> c = {-1, -2, -3};
    std::vector<double> z = {0, 0, 0};
    CHECK(cosine_similarity(a, b) == doctest::Approx(1.0));
    CHECK(cosine_similarity(a, c) == doctest::Approx(-1.0));
    CHECK(cosine_similarity(a, z) == 0.0);
    CHECK_THROWS_AS(cosine_similarity(a, std::vector<double>{1.0}), Error);
}

TEST_CASE("model contributions: sampled tracks exact") {
    ToyConfig tc;
    tc.init_seed = 41;
    ToyBackend model(tc);
    Instance x = tiny_instance();

    ContributionVector exact = shapley_contributions(
        model, x, kDefaultCotTemplate, ShapleyTarget::answer, std::nullopt,
        ShapleyEstimator::exact, 0, 0);
    REQUIRE(exact.values.size() >= 2); // "ab" + "c" + "d" attributable chars
    REQUIRE(exact.values.size() <= 8);

    ContributionVector sampled = shapley_contributions(
        model, x, kDefaultCotTemplate, ShapleyTarget::answer, std::nullopt,
        ShapleyEstimator::permutation_sampled, 2000, 11);
    REQUIRE(sampled.values.size() == exact.values.size());

    double lo = exact.values[0], hi = exact.values[0];
    for (double p : exact.values) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    double range = std::max(1e-9, hi - lo);
    for (size_t i = 0; i < exact.values.size(); ++i)
        CHECK(std::abs(sampled.values[i] - exact.values[i]) <= 0.05 * range);
}

TEST_CASE("ccshap score is a bounded similarity") {
    ToyConfig tc;
    tc.init_seed = 43;
    ToyBackend model(tc);
    Instance x = tiny_instance();

    CoTSample cot;
    cot.instance_id = "q1";
    cot.text = "c is right";
    cot.steps = {"c is right"};
    cot.separators = {""};
    cot.predicted_label = "A";
    cot.sample_index = 0;

    MetricScore s = ccshap_score(model, x, kDefaultCotTemplate, cot,
                                 ShapleyEstimator::exact, 0, 7);
    CHECK(s.metric_id == MetricId::ccshap);
    CHECK(s.value >= -1.0);
    CHECK(s.value <= 1.0);
    CHECK_NOTHROW(s.validate());
    CHECK(s.details.contains("estimator"));

    MetricScore s2 = ccshap_score(model, x, kDefaultCotTemplate, cot,
                                  ShapleyEstimator::exact, 0, 7);
    CHECK(s.value == s2.value); // deterministic
}
