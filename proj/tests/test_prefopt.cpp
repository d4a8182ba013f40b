#include <cmath>

#include "doctest.h"
#include "faithmate/error.hpp"
#include "faithmate/prefopt.hpp"
#include "faithmate/toy_backend.hpp"

using namespace faithmate;

namespace {

ToyConfig tiny_config(uint64_t seed) {
    ToyConfig c;
    c.d_model = 8;
    c.n_heads = 2;
    c.hidden = 16;
    c.max_seq = 128;
    c.init_seed = seed;
    return c;
}

CoTSample make_cot(const std::string& text, const std::string& label, int index) {
    CoTSample c;
    c.instance_id = "q1";
    c.text = text;
    c.steps = {text};
    c.separators = {""};
    c.predicted_label = label;
    c.sample_index = index;
    return c;
}

PreferenceRecord make_record() {
    PreferenceRecord r;
    r.instance_id = "q1";
    r.prompt = "question: which is wet\n";
    r.chosen = make_cot("water is the wet one", "a", 0);
    r.rejected = make_cot("stone is the wet one", "b", 1);
    r.metric_id = MetricId::filler_token;
    r.chosen_score = 0.4;
    r.rejected_score = -0.1;
    return r;
}

} // namespace

TEST_CASE("bradley-terry loss oracles") {
    CHECK(bt_reward_loss(1.0, 0.0) == doctest::Approx(0.3132616875182228).epsilon(1e-12));
    CHECK(bt_reward_loss(0.4, 0.0) == doctest::Approx(0.5130152523999526).epsilon(1e-12));
    CHECK(bt_reward_loss(0.0, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // symmetric mispreference is more expensive than correct preference
    CHECK(bt_reward_loss(0.0, 1.0) > bt_reward_loss(1.0, 0.0));
}

TEST_CASE("dpo at the reference point is exactly log 2") {
    ToyConfig tc = tiny_config(71);
    ToyBackend policy(tc);
    ToyBackend reference(tc); // identical parameters
    PreferenceRecord rec = make_record();
    double loss = dpo_loss(policy, reference, rec, 0.1);
    CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("sft loss is the mean teacher-forced nll") {
    ToyBackend model(tiny_config(72));
    std::string prompt = "question: which is wet\n";
    std::string target = "water";
    auto lps = model.token_logprobs(prompt, target);
    double mean_nll = 0.0;
    for (double lp : lps) mean_nll -= lp;
    mean_nll /= lps.size();
    CHECK(sft_loss(model, prompt, target) == doctest::Approx(mean_nll).epsilon(1e-12));

    // the grad variant optimizes the summed nll
    ParamMap grads;
    double summed = sft_loss_grad(model, prompt, target, &grads);
    CHECK(summed == doctest::Approx(mean_nll * lps.size()).epsilon(1e-9));
}

TEST_CASE("pair building selects argmax versus argmin") {
    std::map<std::string, std::vector<std::pair<CoTSample, double>>> scored;
    scored["q1"] = {{make_cot("best", "a", 0), 0.9},
                    {make_cot("mid", "a", 1), 0.5},
                    {make_cot("worst", "b", 2), 0.1}};
    scored["q2"] = {{make_cot("tie one", "a", 0), 0.3},
                    {make_cot("tie two", "b", 1), 0.3}};
    std::map<std::string, std::string> prompts = {{"q1", "p1"}, {"q2", "p2"}};

    PairBuildResult r = build_pairs(scored, MetricId::filler_token, prompts);
    CHECK(r.instances_seen == 2);
    REQUIRE(r.dpo.size() == 1);
    CHECK(r.dpo[0].chosen.text == "best");
    CHECK(r.dpo[0].rejected.text == "worst");
    CHECK(r.dpo[0].chosen_score == doctest::Approx(0.9));
    CHECK(r.dpo[0].prompt == "p1");
    CHECK(r.dpo_dropped_ties == 1);

    // every instance keeps an SFT record; ties mirror chosen into rejected
    REQUIRE(r.sft.size() == 2);
    for (const auto& rec : r.sft) CHECK_NOTHROW(rec.validate());

    CHECK_THROWS_AS(build_pairs(scored, MetricId::ccshap, prompts), Error);
}

TEST_CASE("tie breaking favors the lowest sample index") {
    std::map<std::string, std::vector<std::pair<CoTSample, double>>> scored;
    scored["q1"] = {{make_cot("second", "a", 1), 0.9},
                    {make_cot("first", "a", 0), 0.9},
                    {make_cot("low", "b", 2), 0.1}};
    std::map<std::string, std::string> prompts = {{"q1", "p1"}};
    PairBuildResult r = build_pairs(scored, MetricId::filler_token, prompts);
    REQUIRE(r.dpo.size() == 1);
    CHECK(r.dpo[0].chosen.sample_index == 0);
}

TEST_CASE("training is deterministic, restores the model, touches only targets") {
    ToyConfig tc = tiny_config(73);
    ToyBackend model(tc);
    std::string before = model.fingerprint();

    std::vector<PreferenceRecord> records = {make_record()};
    AdapterConfig adapter;
    adapter.rank = 2;
    adapter.alpha = 4.0;
    adapter.dropout = 0.0;
    adapter.target_module_names = {"attn.wq", "mlp.w_up"};

    TrainConfig train_cfg;
    train_cfg.batch_size = 1;
    train_cfg.grad_accum_steps = 1;
    train_cfg.learning_rate = 1e-3;
    train_cfg.max_steps = 5;
    train_cfg.seed = 9;

    TrainResult a = train(model, records, TrainMode::dpo, adapter, train_cfg);
    CHECK(model.fingerprint() == before); // adapter never leaks into the base
    CHECK(!a.aborted);
    CHECK(a.log.size() == 5);
    CHECK(a.log.front().loss == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    REQUIRE(a.log.front().implicit_margin.has_value());

    for (const auto& [name, m] : a.delta.entries) {
        bool targeted = name.find("attn.wq") != std::string::npos ||
                        name.find("mlp.w_up") != std::string::npos;
        CHECK(targeted);
    }
    CHECK(a.delta.base_fingerprint == before);

    TrainResult b = train(model, records, TrainMode::dpo, adapter, train_cfg);
    REQUIRE(a.delta.entries.size() == b.delta.entries.size());
    for (const auto& [name, m] : a.delta.entries) {
        const Matrix& other = b.delta.entries.at(name);
        REQUIRE(m.size() == other.size());
        for (size_t i = 0; i < m.size(); ++i) CHECK(m.data[i] == other.data[i]);
    }

    TrainResult s = train(model, records, TrainMode::sft, adapter, train_cfg);
    CHECK(!s.aborted);
    CHECK(s.log.size() == 5);
    CHECK(!s.log.front().implicit_margin.has_value());
    // sft decreases its own training loss over a few steps
    CHECK(s.log.back().loss < s.log.front().loss);
}

TEST_CASE("train and adapter config validation") {
    AdapterConfig a;
    a.rank = 0;
    CHECK_THROWS_AS(a.validate(), Error);
    a = AdapterConfig{};
    a.dropout = 1.5;
    CHECK_THROWS_AS(a.validate(), Error);

    TrainConfig t;
    t.learning_rate = -1.0;
    CHECK_THROWS_AS(t.validate(), Error);
    t = TrainConfig{};
    t.batch_size = 0;
    CHECK_THROWS_AS(t.validate(), Error);
}
