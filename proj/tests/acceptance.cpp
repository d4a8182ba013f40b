// End-to-end acceptance checks. Each criterion prints one pass/fail line;
// the process exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <vector>

#include "faithmate/ccshap.hpp"
#include "faithmate/config.hpp"
#include "faithmate/contextual.hpp"
#include "faithmate/delta_io.hpp"
#include "faithmate/error.hpp"
#include "faithmate/parametric.hpp"
#include "faithmate/pipeline.hpp"
#include "faithmate/prefopt.hpp"
#include "faithmate/prompt.hpp"
#include "faithmate/store.hpp"
#include "faithmate/text.hpp"
#include "faithmate/toy_backend.hpp"
#include "faithmate/transfer.hpp"

using namespace faithmate;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

ToyConfig tiny_config(uint64_t seed) {
    ToyConfig c;
    c.d_model = 8;
    c.n_heads = 2;
    c.hidden = 16;
    c.max_seq = 128;
    c.init_seed = seed;
    return c;
}

CoTSample make_cot(const std::string& id, const std::string& text, const std::string& label,
                   int index = 0) {
    CoTSample c;
    c.instance_id = id;
    c.text = text;
    Segmentation seg = segment_steps(text, 1);
    c.steps = seg.steps;
    c.separators = seg.separators;
    c.predicted_label = label;
    c.sample_index = index;
    return c;
}

std::vector<Instance> synthetic_instances(int n, int n_choices, uint64_t seed) {
    static const char* kNouns[] = {"river", "stone", "cloud", "flame", "glass", "plant",
                                   "metal", "sound", "shadow", "spark", "frost", "sand"};
    static const char* kProps[] = {"wet", "hard", "soft", "bright", "cold", "loud"};
    DetRng rng(seed);
    std::vector<Instance> out;
    for (int i = 0; i < n; ++i) {
        Instance x;
        x.id = "syn" + std::to_string(i);
        x.question = std::string("which item is ") + kProps[rng.uniform_int(6)] + " " +
                     kNouns[rng.uniform_int(12)];
        for (int c = 0; c < n_choices; ++c) {
            std::string label(1, static_cast<char>('A' + c));
            x.choices.push_back({label, kNouns[rng.uniform_int(12)] + std::string(" ") +
                                            std::to_string(i * n_choices + c)});
        }
        x.answer_key = std::string(1, static_cast<char>('A' + rng.uniform_int(n_choices)));
        out.push_back(std::move(x));
    }
    return out;
}

// Shared finite-difference probe used by criterion 2.
int gradcheck_failures(ToyBackend& model, const ParamMap& analytic,
                       const std::function<double()>& loss_fn, int probes, uint64_t seed) {
    DetRng rng(seed);
    std::vector<std::string> names;
    for (const auto& [name, g] : analytic) names.push_back(name);
    const double h = 1e-5;
    int bad = 0;
    for (int p = 0; p < probes; ++p) {
        const std::string& name = names[rng.uniform_int(static_cast<int>(names.size()))];
        const Matrix& g = analytic.at(name);
        size_t idx = static_cast<size_t>(rng.uniform_int(static_cast<int>(g.size())));

        Matrix original = model.params().at(name);
        Matrix bumped = original;
        bumped.data[idx] = original.data[idx] + h;
        model.set_param(name, bumped);
        double up = loss_fn();
        bumped.data[idx] = original.data[idx] - h;
        model.set_param(name, bumped);
        double down = loss_fn();
        model.set_param(name, original);

        double numeric = (up - down) / (2.0 * h);
        double denom = std::max(1e-6, std::abs(numeric) + std::abs(g.data[idx]));
        if (std::abs(numeric - g.data[idx]) / denom > 1e-4) ++bad;
    }
    return bad;
}

void criterion1_dpo_identity() {
    ToyConfig tc = tiny_config(301);
    ToyBackend policy(tc);
    ToyBackend reference(tc);

    PreferenceRecord rec;
    rec.instance_id = "q1";
    rec.prompt = "question: which item is wet\n";
    rec.chosen = make_cot("q1", "the river is the wet one", "a");
    rec.rejected = make_cot("q1", "the stone is the wet one", "b", 1);
    rec.metric_id = MetricId::filler_token;
    rec.chosen_score = 1.0;

    double loss = dpo_loss(policy, reference, rec, 0.1);
    double err = std::abs(loss - std::log(2.0));
    char detail[128];
    std::snprintf(detail, sizeof(detail), "loss %.9f, |loss - log 2| = %.3e", loss, err);
    report(1, "dpo at init equals log 2 within 1e-6", err <= 1e-6, detail);
}

void criterion2_gradchecks() {
    int total_bad = 0;
    {
        ToyBackend model(tiny_config(311));
        std::string prompt = "question: which item is wet\n";
        std::string target = "the river because water flows\nAnswer: a";
        ParamMap grads;
        sft_loss_grad(model, prompt, target, &grads);
        total_bad += gradcheck_failures(
            model, grads, [&] { return sft_loss_grad(model, prompt, target, nullptr); }, 24, 41);
    }
    {
        ToyBackend policy(tiny_config(312));
        ToyBackend reference(tiny_config(313));
        PreferenceRecord rec;
        rec.instance_id = "q1";
        rec.prompt = "question: which item is wet\n";
        rec.chosen = make_cot("q1", "the river is wet", "a");
        rec.rejected = make_cot("q1", "the stone is wet", "b", 1);
        rec.metric_id = MetricId::filler_token;
        rec.chosen_score = 1.0;
        ParamMap grads;
        dpo_loss_grad(policy, reference, rec, 0.2, &grads);
        total_bad += gradcheck_failures(
            policy, grads, [&] { return dpo_loss_grad(policy, reference, rec, 0.2, nullptr); },
            24, 42);
    }
    {
        ToyBackend model(tiny_config(314));
        ToyBackend reference(tiny_config(315));
        UnlearnConfig cfg;
        cfg.min_content_tokens = 1;
        std::string context = "question: which item is wet\n";
        std::string step = "water makes the river wet";
        std::vector<std::string> retain = {"stones are dry and hard", "flames are hot"};
        ParamMap grads;
        npo_kl_loss(model, reference, context, step, retain, cfg, &grads);
        total_bad += gradcheck_failures(
            model, grads,
            [&] { return npo_kl_loss(model, reference, context, step, retain, cfg, nullptr); },
            24, 43);
    }
    char detail[128];
    std::snprintf(detail, sizeof(detail), "72 probes across sft/dpo/npo+kl, %d over tolerance",
                  total_bad);
    report(2, "analytic gradients match finite differences (rel err <= 1e-4)", total_bad == 0,
           detail);
}

void criterion3_corruption_contract() {
    auto instances = synthetic_instances(50, 3, 901);
    auto subject = make_pretrained_toy(902, 150);

    DecodingConfig dec;
    dec.temperature = 1.2;
    dec.top_k = 50;
    dec.top_p = 0.95;
    dec.max_new_tokens = 40;

    std::vector<CoTSample> cots;
    for (size_t i = 0; i < instances.size(); ++i)
        cots.push_back(generate_cot(*subject, instances[i], kDefaultCotTemplate, dec, 0,
                                    7000 + i, true, 1));

    int violations = 0, scored = 0, skipped = 0;
    for (MetricId id : {MetricId::early_answering, MetricId::adding_mistake,
                        MetricId::filler_token, MetricId::paraphrasing}) {
        for (size_t i = 0; i < instances.size(); ++i) {
            auto s = score_corruption(id, instances[i], cots[i], *subject, subject.get(),
                                      kDefaultCotTemplate, 500 + i);
            if (!s) {
                ++skipped;
                continue;
            }
            ++scored;
            try {
                s->validate();
            } catch (const Error&) {
                ++violations;
                continue;
            }
            if (!s->z_before || !s->z_after) {
                ++violations;
                continue;
            }
            double margin = *s->z_before - *s->z_after;
            double expect = id == MetricId::paraphrasing ? -margin : margin;
            if (std::abs(s->value - expect) > 1e-9 || s->value < -1.0 || s->value > 1.0)
                ++violations;
        }
    }
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "50 instances x 4 metrics: %d scored, %d skipped, %d contract violations",
                  scored, skipped, violations);
    report(3, "corruption metrics obey the margin contract", violations == 0 && scored >= 150,
           detail);
}

void criterion4_parametric() {
    ToyBackend model(tiny_config(921));
    std::string fp_before = model.fingerprint();
    auto instances = synthetic_instances(6, 3, 922);

    std::vector<CoTSample> pool;
    static const char* kTexts[] = {
        "the river flows with water. so it must be wet",
        "stones are hard things. they sink in water",
        "flames give off heat. fire is the bright one",
        "plants grow in soil. green leaves need light",
        "glass can shatter fast. it is smooth and clear",
        "metal rings when struck. it is cold and heavy",
    };
    for (int i = 0; i < 6; ++i)
        pool.push_back(make_cot(instances[i].id, kTexts[i], "A", 0));

    UnlearnConfig cfg;
    cfg.epochs = 3;
    cfg.retain_set_size = 4;
    cfg.min_content_tokens = 1;
    cfg.learning_rate = 1e-3;

    int indicator_bad = 0, restore_bad = 0;
    int steps_total = 0, steps_down = 0;
    for (int i = 0; i < 6; ++i) {
        FfResult r = ff_scores(model, instances[i], pool[i], pool, cfg, kDefaultCotTemplate);
        if (model.fingerprint() != fp_before) ++restore_bad;
        if (r.ff_hard != (r.ff_cont > 0.0 ? 1 : 0)) ++indicator_bad;

        // re-run the per-step unlearning to inspect the forget logprobs
        auto retain = build_retain_set(pool, pool[i], cfg.retain_set_size,
                                       cfg.seed + static_cast<uint64_t>(i));
        for (int s = 0; s < static_cast<int>(pool[i].steps.size()); ++s) {
            UnlearnResult u =
                unlearn_step(model, instances[i], pool[i], s, retain, cfg, kDefaultCotTemplate);
            if (u.skipped || u.diverged) continue;
            ++steps_total;
            if (u.final_forget_logprob < u.initial_forget_logprob) ++steps_down;
        }
        if (model.fingerprint() != fp_before) ++restore_bad;
    }
    double down_frac = steps_total ? static_cast<double>(steps_down) / steps_total : 0.0;
    char detail[192];
    std::snprintf(detail, sizeof(detail),
                  "indicator mismatches %d, restore mismatches %d, forget logprob down on "
                  "%d/%d steps (%.0f%%)",
                  indicator_bad, restore_bad, steps_down, steps_total, 100.0 * down_frac);
    report(4,
           "ff_hard is the indicator of ff_cont, restores are byte-identical, unlearning "
           "suppresses forget tokens",
           indicator_bad == 0 && restore_bad == 0 && steps_total >= 10 && down_frac >= 0.9,
           detail);
}

void criterion5_shapley() {
    ToyConfig tc;
    tc.init_seed = 931;
    ToyBackend model(tc);
    Instance x;
    x.id = "q1";
    x.question = "ab"; // 2 + 1 + 1 attributable characters, well under 8
    x.choices = {{"A", "c"}, {"B", "d"}};
    x.answer_key = "A";

    ContributionVector exact =
        shapley_contributions(model, x, kDefaultCotTemplate, ShapleyTarget::answer, std::nullopt,
                              ShapleyEstimator::exact, 0, 0);
    ContributionVector sampled =
        shapley_contributions(model, x, kDefaultCotTemplate, ShapleyTarget::answer, std::nullopt,
                              ShapleyEstimator::permutation_sampled, 2000, 77);

    bool ok = exact.values.size() == sampled.values.size() && exact.values.size() <= 8;
    double lo = exact.values[0], hi = exact.values[0];
    for (double v : exact.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double range = std::max(1e-9, hi - lo);
    double worst = 0.0;
    for (size_t i = 0; i < exact.values.size() && ok; ++i)
        worst = std::max(worst, std::abs(sampled.values[i] - exact.values[i]));
    ok = ok && worst <= 0.05 * range;
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "%zu tokens, 2000 permutations, worst |sampled - exact| = %.3e (5%% of range "
                  "= %.3e)",
                  exact.values.size(), worst, 0.05 * range);
    report(5, "sampled shapley values track exact enumeration", ok, detail);
}

void criterion6_fixture_regression() {
    std::string path = std::string(FAITHMATE_SOURCE_DIR) + "/fixtures/published_tables.json";
    std::ifstream in(path);
    if (!in) {
        report(6, "published aggregation regression", false, "fixture missing: " + path);
        return;
    }
    json fixture;
    in >> fixture;

    auto cells = aggregate_fixture(fixture, "openbookqa");
    const json& expected = fixture.at("table6_expected").at("openbookqa");
    int cells_checked = 0, mismatches = 0;
    for (const auto& [source, row] : expected.items()) {
        for (const auto& [eval, cell] : row.items()) {
            ++cells_checked;
            if (eval == "cont_avg") {
                auto it = cells.find(source + "->cont_avg");
                if (it == cells.end() ||
                    std::abs(it->second.mean_delta - cell.get<double>()) > 1e-4)
                    ++mismatches;
                continue;
            }
            auto it = cells.find(source + "->" + eval);
            if (it == cells.end() || it->second.positive != cell.at(0).get<int>() ||
                it->second.total != 6 ||
                std::abs(it->second.mean_delta - cell.at(1).get<double>()) > 1e-4)
                ++mismatches;
        }
    }
    char detail[128];
    std::snprintf(detail, sizeof(detail), "%d cells checked, %d mismatches (counts exact, means "
                  "within 1e-4)", cells_checked, mismatches);
    report(6, "aggregation reproduces the published transfer table", mismatches == 0, detail);
}

void criterion7_merge_and_pca() {
    ToyBackend base(tiny_config(941));
    std::string fp = base.fingerprint();
    DetRng rng(942);

    auto random_tau = [&]() {
        TaskVector tau;
        tau.base_fingerprint = fp;
        for (const auto& [name, w] : base.params()) {
            if (name.find("attn.wq") == std::string::npos &&
                name.find("mlp.w_up") == std::string::npos)
                continue;
            Matrix m(w.rows, w.cols);
            for (auto& v : m.data) v = 0.01 * rng.gaussian();
            tau.entries[name] = std::move(m);
        }
        return tau;
    };
    TaskVector t1 = random_tau();
    TaskVector t2 = random_tau();

    int bad = 0;
    // identity: lambda 1, single unit-weight component
    MergeSpec single;
    single.components = {{t1, 1.0}};
    TaskVector same = combine(single);
    for (const auto& [name, m] : t1.entries)
        for (size_t i = 0; i < m.size(); ++i)
            if (std::abs(same.entries.at(name).data[i] - m.data[i]) > 1e-12) ++bad;

    // cancellation: tau + (-tau) == 0
    MergeSpec cancel;
    cancel.components = {{t1, 1.0}, {t1.negated(), 1.0}};
    for (const auto& [name, m] : combine(cancel).entries)
        for (double v : m.data)
            if (std::abs(v) > 1e-12) ++bad;

    // scaling: lambda 0.5 of weight 2 is the identity
    MergeSpec scaled;
    scaled.components = {{t1, 2.0}};
    scaled.lambda = 0.5;
    TaskVector back = combine(scaled);
    for (const auto& [name, m] : t1.entries)
        for (size_t i = 0; i < m.size(); ++i)
            if (std::abs(back.entries.at(name).data[i] - m.data[i]) > 1e-12) ++bad;

    // coplanar family: every vector is a combination of t1 and t2
    auto blend = [&](double a, double b) {
        MergeSpec s;
        s.components = {{t1, a}, {t2, b}};
        return combine(s);
    };
    std::vector<TaskVector> family = {t1, t2, blend(1.5, -0.5), blend(-2.0, 1.0),
                                      blend(0.3, 0.7)};
    PcaResult pca = pca_project(family, 3);
    double total = pca.residual_variance;
    for (double v : pca.component_variance) total += v;
    bool planar = pca.component_variance.size() == 3 &&
                  pca.component_variance[2] <= 1e-8 * total &&
                  pca.residual_variance <= 1e-8 * total;

    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "%d identity violations, third principal variance %.3e of total %.3e", bad,
                  pca.component_variance.size() == 3 ? pca.component_variance[2] : -1.0, total);
    report(7, "merge identities hold and coplanar vectors project onto a plane",
           bad == 0 && planar, detail);
}

void criterion8_end_to_end() {
    auto t0 = std::chrono::steady_clock::now();
    fs::path out_dir = fs::path(FAITHMATE_BINARY_DIR) / "acceptance_e2e";
    fs::remove_all(out_dir);
    fs::create_directories(out_dir);
    fs::path ds_path = out_dir / "dataset.jsonl";
    store_instances(synthetic_instances(30, 3, 801), ds_path.string());

    Config cfg;
    cfg.dataset_path = ds_path.string();
    cfg.out_dir = out_dir.string();
    cfg.subject_backend = "toy:pretrained:17:150";
    cfg.samples_per_instance = 8;
    cfg.decoding.max_new_tokens = 32;
    cfg.eval_max_new_tokens = 32;
    cfg.seed = 3;
    cfg.train.max_steps = 100;
    cfg.train.batch_size = 2;
    cfg.train.grad_accum_steps = 1;
    cfg.train.learning_rate = 1e-4;
    cfg.train.seed = 3;
    cfg.adapter.rank = 4;
    cfg.adapter.alpha = 8.0;
    cfg.adapter.dropout = 0.0;

    bool ok = true;
    std::string detail;
    try {
        cmd_sample(cfg);
        cmd_score(cfg, "filler_token");
        cmd_pairs(cfg, "filler_token");
        cmd_train(cfg, "dpo", "filler_token");
        std::string adapter = (out_dir / "adapter.dpo.filler_token.fmpd").string();
        std::string opt_scores = (out_dir / "scores.opt.jsonl").string();
        cmd_score(cfg, "filler_token", "", opt_scores, adapter);
        std::string base_scores = (out_dir / "scores.filler_token.jsonl").string();
        cmd_transfer(cfg, base_scores, opt_scores, (out_dir / "transfer.json").string());

        // recompute the delta by hand and compare against the artifact
        auto base = load_scores(base_scores);
        auto opt = load_scores(opt_scores);
        std::set<std::string> base_ids, opt_ids, common;
        for (const auto& s : base) base_ids.insert(s.instance_id);
        for (const auto& s : opt) opt_ids.insert(s.instance_id);
        for (const auto& id : base_ids)
            if (opt_ids.count(id)) common.insert(id);
        auto mean_over = [&](const std::vector<MetricScore>& scores) {
            double sum = 0.0;
            int n = 0;
            for (const auto& s : scores)
                if (common.count(s.instance_id)) {
                    sum += s.value;
                    ++n;
                }
            return sum / n;
        };
        double by_hand = mean_over(opt) - mean_over(base);

        std::ifstream tf((out_dir / "transfer.json").string());
        json t;
        tf >> t;
        double reported = t.at("delta").get<double>();
        double err = std::abs(reported - by_hand);
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ok = err <= 1e-9 && secs < 600.0;
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "delta %.6f vs recomputed %.6f (|diff| %.2e), %.1fs elapsed", reported,
                      by_hand, err, secs);
        detail = buf;
    } catch (const std::exception& e) {
        ok = false;
        detail = std::string("exception: ") + e.what();
    }
    report(8, "sample->score->pairs->train->score->transfer round trip", ok, detail);
}

void criterion9_directional_sanity() {
    int positive_seeds = 0;
    std::string detail;
    for (uint64_t seed : {101ull, 202ull, 303ull}) {
        auto model = make_pretrained_toy(seed, 150);
        auto instances = synthetic_instances(12, 3, seed + 7);

        // chosen CoTs state the model's own answer; rejected CoTs state a
        // different letter, making them answer-inconsistent by construction
        std::vector<PreferenceRecord> records;
        std::vector<CoTSample> eval_cots;
        std::vector<const Instance*> eval_insts;
        for (const auto& inst : instances) {
            std::string top = choice_scores(*model, inst, kDefaultCotTemplate, std::nullopt)
                                  .argmax();
            std::string low_top = to_lower(top);
            PreferenceRecord r;
            r.instance_id = inst.id;
            r.prompt = render_cot_prompt(inst, kDefaultCotTemplate);
            r.chosen = make_cot(inst.id, "i think the answer is " + low_top, top, 0);
            // rejected reasoning never commits to a letter, so preferring chosen
            // rewards answers that actually depend on the stated reasoning
            r.rejected = make_cot(inst.id, "hmm let me think about this for a moment", top, 1);
            r.metric_id = MetricId::filler_token;
            r.chosen_score = 1.0;
            records.push_back(r);
            eval_cots.push_back(records.back().chosen);
            eval_insts.push_back(&inst);
        }

        auto mean_filler = [&](Backend& handle) {
            double sum = 0.0;
            int n = 0;
            for (size_t i = 0; i < eval_cots.size(); ++i) {
                auto s = score_corruption(MetricId::filler_token, *eval_insts[i], eval_cots[i],
                                          handle, nullptr, kDefaultCotTemplate, 0);
                if (s) {
                    sum += s->value;
                    ++n;
                }
            }
            return sum / n;
        };
        double before = mean_filler(*model);

        AdapterConfig adapter;
        adapter.rank = 4;
        adapter.alpha = 8.0;
        adapter.dropout = 0.0;
        adapter.target_module_names = toy_default_target_modules();
        TrainConfig tcfg;
        tcfg.batch_size = 2;
        tcfg.grad_accum_steps = 1;
        tcfg.learning_rate = 1e-3;
        tcfg.max_steps = 20;
        tcfg.seed = seed;

        TrainResult tr = train(*model, records, TrainMode::dpo, adapter, tcfg);
        auto tuned = model->apply_delta(tr.delta);
        double after = mean_filler(*tuned);

        char buf[96];
        std::snprintf(buf, sizeof(buf), "seed %llu: %+0.4f -> %+0.4f; ",
                      static_cast<unsigned long long>(seed), before, after);
        detail += buf;
        if (after > before) ++positive_seeds;
    }
    report(9, "dpo on answer-consistency raises the filler margin on every seed",
           positive_seeds == 3, detail);
}

} // namespace

int main() {
    criterion1_dpo_identity();
    criterion2_gradchecks();
    criterion3_corruption_contract();
    criterion4_parametric();
    criterion5_shapley();
    criterion6_fixture_regression();
    criterion7_merge_and_pca();
    criterion8_end_to_end();
    criterion9_directional_sanity();
    if (g_failures) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all 9 criteria passed\n");
    return 0;
}
