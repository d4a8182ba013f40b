#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "faithmate/contextual.hpp"
#include "faithmate/error.hpp"
#include "faithmate/prompt.hpp"
#include "faithmate/text.hpp"
#include "faithmate/toy_backend.hpp"

using namespace faithmate;

namespace {

// Scripted helper so corruption control flow is testable without a real model.
class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {}

    std::string fingerprint() const override { return "scripted:0"; }
    std::set<Capability> capabilities() const override { return {Capability::generate}; }
    GenerateResult generate(const std::string&, const DecodingConfig&, uint64_t) override {
        std::string out = replies_.empty() ? "" : replies_[std::min(call_, replies_.size() - 1)];
        ++call_;
        return {out};
    }
    ChoiceDistribution choice_scores(const std::string&,
                                     const std::vector<std::string>& labels) override {
        ChoiceDistribution d;
        for (const auto& l : labels) d.probs[l] = 1.0 / labels.size();
        return d;
    }
    std::vector<double> token_logprobs(const std::string&, const std::string&) override {
        throw backend_error("scripted backend has no logprobs");
    }
    std::shared_ptr<Backend> apply_delta(const ParamDelta&) override {
        throw backend_error("scripted backend is frozen");
    }
    SnapshotToken snapshot() override { return 0; }
    void restore(SnapshotToken) override {}
    void apply_delta_inplace(const ParamDelta&) override {
        throw backend_error("scripted backend is frozen");
    }
    size_t calls() const { return call_; }

private:
    std::vector<std::string> replies_;
    size_t call_ = 0;
};

CoTSample cot_of(const std::vector<std::string>& steps, const std::string& sep = "\n") {
    CoTSample c;
    c.instance_id = "q1";
    c.steps = steps;
    for (size_t i = 0; i < steps.size(); ++i)
        c.separators.push_back(i + 1 < steps.size() ? sep : "");
    c.text = c.joined();
    c.predicted_label = "A";
    return c;
}

Instance wet_instance() {
    Instance x;
    x.id = "q1";
    x.question = "which one is wet";
    x.choices = {{"A", "water"}, {"B", "stone"}, {"C", "fire"}};
    x.answer_key = "A";
    return x;
}

} // namespace

TEST_CASE("early answering keeps the first two thirds of the steps") {
    CHECK(corrupt_early_answering(cot_of({"a1", "a2", "a3"})).text == "a1\na2");
    CHECK(corrupt_early_answering(cot_of({"a", "b", "c", "d", "e", "f"})).text == "a\nb\nc\nd");
    CHECK(corrupt_early_answering(cot_of({"a", "b"})).text == "a");

    CorruptionResult single = corrupt_early_answering(cot_of({"only"}));
    CHECK(single.degenerate);
    CHECK(single.text.empty());
}

TEST_CASE("filler replaces the cot with dot groups") {
    CoTSample c = cot_of({"twelve chars"}); // 12 chars -> 4 groups of "..."
    CorruptionResult r = corrupt_filler(c);
    CHECK(r.text == std::string(12, '.'));

    CoTSample c2 = cot_of({"abcd"}); // 4 chars -> ceil(4/3) = 2 groups
    CHECK(corrupt_filler(c2).text == "......");
    for (char ch : corrupt_filler(c2).text) CHECK(ch == '.');
}

TEST_CASE("helper templates carry the placeholder") {
    CHECK(adding_mistake_template().user.find("{cot}") != std::string::npos);
    CHECK(paraphrasing_template().user.find("{cot}") != std::string::npos);

    namespace fs = std::filesystem;
    std::string path = (fs::temp_directory_path() / "fm_tmpl_test.json").string();
    save_helper_template(adding_mistake_template(), path);
    HelperTemplate t = load_helper_template(path);
    CHECK(t.user == adding_mistake_template().user);
    CHECK(t.assistant_prefix == adding_mistake_template().assistant_prefix);

    HelperTemplate bad;
    bad.user = "no placeholder here";
    bad.assistant_prefix = "x";
    save_helper_template(bad, path);
    CHECK_THROWS_AS(load_helper_template(path), Error);
    std::remove(path.c_str());
}

TEST_CASE("shipped template files match the built-in defaults") {
    std::string dir = std::string(FAITHMATE_SOURCE_DIR) + "/templates/";
    HelperTemplate am = load_helper_template(dir + "adding_mistake.json");
    CHECK(am.user == adding_mistake_template().user);
    CHECK(am.assistant_prefix == adding_mistake_template().assistant_prefix);
    HelperTemplate pp = load_helper_template(dir + "paraphrasing.json");
    CHECK(pp.user == paraphrasing_template().user);
    CHECK(pp.assistant_prefix == paraphrasing_template().assistant_prefix);
}

TEST_CASE("helper corruption uses the edit and regenerates the remainder") {
    CoTSample c = cot_of({"water is wet", "so the answer is water"});
    ScriptedBackend helper({"water is dry"});
    ScriptedBackend subject({"and that settles it"});

    CorruptionResult r = corrupt_with_helper(c, helper, subject, adding_mistake_template(),
                                             "prompt\n", 64, 1);
    CHECK(!r.failed);
    CHECK(r.text == "water is dry\nand that settles it");
}

TEST_CASE("helper corruption retries once then fails") {
    CoTSample c = cot_of({"water is wet", "so water"});

    ScriptedBackend empty_helper({"", ""});
    ScriptedBackend subject({"tail"});
    CorruptionResult r1 = corrupt_with_helper(c, empty_helper, subject,
                                              adding_mistake_template(), "p\n", 64, 1);
    CHECK(r1.failed);
    CHECK(empty_helper.calls() == 2);

    // first reply echoes the prefix, second succeeds
    ScriptedBackend echo_then_ok({"water is wet", "water is icy"});
    ScriptedBackend subject2({"tail"});
    CorruptionResult r2 = corrupt_with_helper(c, echo_then_ok, subject2,
                                              adding_mistake_template(), "p\n", 64, 1);
    CHECK(!r2.failed);
    CHECK(r2.text.rfind("water is icy", 0) == 0);
}

TEST_CASE("corruption identical to the original is a failure") {
    // helper keeps the first word, subject regenerates the rest verbatim
    CoTSample c = cot_of({"water is wet"});
    ScriptedBackend helper({"water"});
    ScriptedBackend subject({"is wet"});
    CorruptionResult r = corrupt_with_helper(c, helper, subject, paraphrasing_template(),
                                             "p\n", 64, 1);
    CHECK(r.failed);
    CHECK(r.reason.find("identical") != std::string::npos);
}

TEST_CASE("corruption scores obey the sign convention on the toy model") {
    ToyConfig tc;
    tc.init_seed = 31;
    auto subject = std::make_shared<ToyBackend>(tc);
    Instance inst = wet_instance();

    CoTSample c = cot_of({"water is the wet one", "so i pick water"});
    for (MetricId id : {MetricId::early_answering, MetricId::filler_token,
                        MetricId::adding_mistake, MetricId::paraphrasing}) {
        auto s = score_corruption(id, inst, c, *subject, subject.get(), kDefaultCotTemplate, 5);
        if (!s) continue; // helper corruption may legitimately fail
        REQUIRE(s->z_before.has_value());
        REQUIRE(s->z_after.has_value());
        double margin = *s->z_before - *s->z_after;
        double expect = id == MetricId::paraphrasing ? -margin : margin;
        CHECK(s->value == doctest::Approx(expect).epsilon(1e-12));
        CHECK(s->value >= -1.0);
        CHECK(s->value <= 1.0);
        CHECK_NOTHROW(s->validate());
    }

    CoTSample flagged = c;
    flagged.predicted_label.reset();
    CHECK_THROWS_AS(score_corruption(MetricId::filler_token, inst, flagged, *subject, nullptr,
                                     kDefaultCotTemplate, 0),
                    Error);
    CHECK_THROWS_AS(score_corruption(MetricId::ccshap, inst, c, *subject, nullptr,
                                     kDefaultCotTemplate, 0),
                    Error);
}
