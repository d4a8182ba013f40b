#include "faithmate/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "faithmate/ccshap.hpp"
#include "faithmate/contextual.hpp"
#include "faithmate/dataset.hpp"
#include "faithmate/delta_io.hpp"
#include "faithmate/error.hpp"
#include "faithmate/manifest.hpp"
#include "faithmate/parametric.hpp"
#include "faithmate/prompt.hpp"
#include "faithmate/store.hpp"
#include "faithmate/toy_backend.hpp"

namespace fs = std::filesystem;

namespace faithmate {

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

void ensure_out_dir(const Config& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw parse_error("cannot create " + cfg.out_dir + ": " + ec.message());
}

void apply_jobs(const Config& cfg) {
#ifdef _OPENMP
    if (cfg.jobs > 0) omp_set_num_threads(cfg.jobs);
#else
    (void)cfg;
#endif
}

std::string resolve_template(const Config& cfg) {
    if (cfg.prompt_template.empty()) return kDefaultCotTemplate;
    std::ifstream in(cfg.prompt_template);
    if (in) {
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return text;
    }
    return cfg.prompt_template; // inline template string
}

std::vector<Instance> load_instances(const Config& cfg) {
    if (cfg.dataset_path.empty()) throw validation_error("config: dataset.path is required");
    return load_dataset(cfg.dataset_path, dataset_format_from_name(cfg.dataset_format));
}

// A ".fmpd" override applies a saved delta on top of the configured subject;
// anything else is a backend spec of its own.
BackendPtr resolve_backend(const Config& cfg, const std::string& override_spec) {
    if (override_spec.empty()) return make_backend(cfg.subject_backend);
    if (override_spec.size() > 5 &&
        override_spec.compare(override_spec.size() - 5, 5, ".fmpd") == 0) {
        ParamDelta delta = load_param_delta(override_spec);
        BackendPtr base = make_backend(cfg.subject_backend);
        return base->apply_delta(delta);
    }
    return make_backend(override_spec);
}

void write_header(const std::string& path, const Manifest& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw parse_error("cannot open for writing: " + path);
    out << artifact_header(m).dump() << "\n";
}

std::string scores_path_for(const Config& cfg, const std::string& metric) {
    return (fs::path(cfg.out_dir) / ("scores." + metric + ".jsonl")).string();
}

int sample_index_of(const std::string& cot_ref) {
    if (cot_ref.rfind("sample:", 0) != 0)
        throw validation_error("unsupported cot_ref: " + cot_ref);
    return std::stoi(cot_ref.substr(7));
}

AdapterConfig effective_adapter(const Config& cfg) {
    AdapterConfig a = cfg.adapter;
    if (a.target_module_names.empty()) a.target_module_names = toy_default_target_modules();
    return a;
}

json transfer_to_json(const TransferDelta& d) {
    return json{{"source_metric", d.source_metric}, {"eval_metric", d.eval_metric},
                {"model_tag", d.model_tag},         {"paradigm", d.paradigm},
                {"dataset_tag", d.dataset_tag},     {"delta", d.delta},
                {"coverage", d.coverage},           {"coverage_warning", d.coverage_warning}};
}

} // namespace

int cmd_sample(const Config& cfg) {
    ensure_out_dir(cfg);
    apply_jobs(cfg);
    std::vector<Instance> instances = load_instances(cfg);
    BackendPtr subject = make_backend(cfg.subject_backend);
    std::string tmpl = resolve_template(cfg);

    Manifest m = make_manifest("sample", config_to_json(cfg), {cfg.dataset_path}, cfg.seed);
    write_manifest(m, cfg.out_dir);

    std::vector<CoTSample> cots;
    int flagged = 0;
    for (size_t i = 0; i < instances.size(); ++i) {
        for (int k = 0; k < cfg.samples_per_instance; ++k) {
            uint64_t seed = (cfg.seed + 1) * 0x9e3779b97f4a7c15ULL +
                            fnv1a(instances[i].id) * 1000003ULL + static_cast<uint64_t>(k);
            CoTSample cot = generate_cot(*subject, instances[i], tmpl, cfg.decoding, k, seed,
                                         true, cfg.min_content_tokens);
            if (!cot.predicted_label) ++flagged;
            cots.push_back(std::move(cot));
        }
    }

    std::string path = (fs::path(cfg.out_dir) / "cots.jsonl").string();
    write_header(path, m);
    store_cots(cots, path, /*append=*/true);
    std::cout << "sample: " << cots.size() << " cots over " << instances.size()
              << " instances (" << flagged << " flagged) -> " << path << "\n";
    return 0;
}

int cmd_score(const Config& cfg, const std::string& metric, const std::string& cots_path,
              const std::string& out_path, const std::string& backend_override) {
    ensure_out_dir(cfg);
    apply_jobs(cfg);
    MetricId id = metric_from_name(metric);
    std::vector<Instance> instances = load_instances(cfg);
    std::string tmpl = resolve_template(cfg);

    std::string in_path =
        cots_path.empty() ? (fs::path(cfg.out_dir) / "cots.jsonl").string() : cots_path;
    std::string dst = out_path.empty() ? scores_path_for(cfg, metric) : out_path;
    std::vector<CoTSample> cots = load_cots(in_path);

    BackendPtr subject = resolve_backend(cfg, backend_override);
    BackendPtr helper =
        cfg.helper_backend.empty() ? subject : make_backend(cfg.helper_backend);

    Manifest m = make_manifest("score", config_to_json(cfg), {cfg.dataset_path, in_path},
                               cfg.seed);
    write_manifest(m, cfg.out_dir);

    std::map<std::string, const Instance*> by_id;
    for (const auto& inst : instances) by_id[inst.id] = &inst;

    std::shared_ptr<ToyBackend> toy;
    if (id == MetricId::ff_hard || id == MetricId::ff_cont) {
        toy = std::dynamic_pointer_cast<ToyBackend>(subject);
        if (!toy)
            throw backend_error("parametric scoring needs an in-process trainable model");
    }

    std::vector<MetricScore> scores;
    int skipped = 0;
    for (const auto& cot : cots) {
        auto it = by_id.find(cot.instance_id);
        if (it == by_id.end())
            throw validation_error("cot references unknown instance " + cot.instance_id);
        if (!cot.predicted_label) {
            ++skipped;
            continue;
        }
        const Instance& inst = *it->second;
        uint64_t seed = cfg.seed * 0x9e3779b97f4a7c15ULL + fnv1a(cot.instance_id) +
                        static_cast<uint64_t>(cot.sample_index);
        std::string ref = "sample:" + std::to_string(cot.sample_index);

        if (is_corruption_metric(id)) {
            auto s = score_corruption(id, inst, cot, *subject, helper.get(), tmpl, seed);
            if (!s) {
                ++skipped;
                continue;
            }
            s->cot_ref = ref;
            scores.push_back(std::move(*s));
        } else if (id == MetricId::ccshap) {
            MetricScore s = ccshap_score(*subject, inst, tmpl, cot,
                                         ShapleyEstimator::permutation_sampled,
                                         cfg.ccshap_n_samples, seed);
            s.cot_ref = ref;
            scores.push_back(std::move(s));
        } else {
            FfResult r = ff_scores(*toy, inst, cot, cots, cfg.unlearn, tmpl);
            if (r.undefined) {
                ++skipped;
                continue;
            }
            scores.push_back(ff_metric_score(r, id, inst.id, ref));
        }
    }

    write_header(dst, m);
    store_scores(scores, dst, /*append=*/true);
    std::cout << "score[" << metric << "]: " << scores.size() << " scores (" << skipped
              << " skipped) -> " << dst << "\n";
    return 0;
}

int cmd_pairs(const Config& cfg, const std::string& metric) {
    ensure_out_dir(cfg);
    MetricId id = metric_from_name(metric);
    if (!is_training_metric(id))
        throw contract_error("pairs: " + metric + " is evaluation-only");
    std::vector<Instance> instances = load_instances(cfg);
    std::string tmpl = resolve_template(cfg);

    std::string cots_path = (fs::path(cfg.out_dir) / "cots.jsonl").string();
    std::string scores_path = scores_path_for(cfg, metric);
    std::vector<CoTSample> cots = load_cots(cots_path);
    std::vector<MetricScore> scores = load_scores(scores_path);

    Manifest m = make_manifest("pairs", config_to_json(cfg),
                               {cfg.dataset_path, cots_path, scores_path}, cfg.seed);
    write_manifest(m, cfg.out_dir);

    std::map<std::pair<std::string, int>, const CoTSample*> cot_index;
    for (const auto& c : cots) cot_index[{c.instance_id, c.sample_index}] = &c;

    std::map<std::string, std::vector<std::pair<CoTSample, double>>> scored_sets;
    for (const auto& s : scores) {
        auto it = cot_index.find({s.instance_id, sample_index_of(s.cot_ref)});
        if (it == cot_index.end())
            throw validation_error("score references missing cot " + s.instance_id + "/" +
                                   s.cot_ref);
        scored_sets[s.instance_id].emplace_back(*it->second, s.value);
    }

    std::map<std::string, std::string> prompts;
    for (const auto& inst : instances) prompts[inst.id] = render_cot_prompt(inst, tmpl);

    PairBuildResult result = build_pairs(scored_sets, id, prompts);

    std::string sft_path = (fs::path(cfg.out_dir) / ("pairs." + metric + ".sft.jsonl")).string();
    std::string dpo_path = (fs::path(cfg.out_dir) / ("pairs." + metric + ".dpo.jsonl")).string();
    write_header(sft_path, m);
    store_preferences(result.sft, sft_path, /*append=*/true);
    write_header(dpo_path, m);
    store_preferences(result.dpo, dpo_path, /*append=*/true);
    std::cout << "pairs[" << metric << "]: " << result.sft.size() << " sft / "
              << result.dpo.size() << " dpo over " << result.instances_seen << " instances ("
              << result.dpo_dropped_ties << " ties dropped, " << result.skipped_unscored
              << " unscored) -> " << cfg.out_dir << "\n";
    return 0;
}

int cmd_train(const Config& cfg, const std::string& mode, const std::string& metric) {
    ensure_out_dir(cfg);
    apply_jobs(cfg);
    if (mode != "sft" && mode != "dpo") throw validation_error("train: mode must be sft or dpo");
    TrainMode tm = mode == "sft" ? TrainMode::sft : TrainMode::dpo;

    std::string pairs_path =
        (fs::path(cfg.out_dir) / ("pairs." + metric + "." + mode + ".jsonl")).string();
    std::vector<PreferenceRecord> records = load_preferences(pairs_path);
    if (records.empty()) throw contract_error("train: no preference records in " + pairs_path);

    BackendPtr subject = make_backend(cfg.subject_backend);
    auto toy = std::dynamic_pointer_cast<ToyBackend>(subject);
    if (!toy) throw backend_error("training needs an in-process trainable model");

    Manifest m = make_manifest("train", config_to_json(cfg), {pairs_path}, cfg.train.seed);
    write_manifest(m, cfg.out_dir);

    TrainResult result = train(*toy, records, tm, effective_adapter(cfg), cfg.train);

    std::string delta_path =
        (fs::path(cfg.out_dir) / ("adapter." + mode + "." + metric + ".fmpd")).string();
    save_param_delta(result.delta, delta_path);

    std::string log_path =
        (fs::path(cfg.out_dir) / ("trainlog." + mode + "." + metric + ".jsonl")).string();
    write_header(log_path, m);
    {
        std::ofstream out(log_path, std::ios::app);
        for (const auto& entry : result.log) {
            json j{{"step", entry.step},
                   {"loss", entry.loss},
                   {"lr", entry.lr},
                   {"grad_norm", entry.grad_norm},
                   {"schema_version", kSchemaVersion}};
            if (entry.implicit_margin) j["implicit_margin"] = *entry.implicit_margin;
            out << j.dump() << "\n";
        }
    }
    std::cout << "train[" << mode << "/" << metric << "]: " << result.log.size() << " steps"
              << (result.aborted ? " (aborted on non-finite loss)" : "") << " -> " << delta_path
              << "\n";
    return result.aborted ? 1 : 0;
}

int cmd_transfer(const Config& cfg, const std::string& base_scores, const std::string& opt_scores,
                 const std::string& out_path) {
    ensure_out_dir(cfg);
    std::vector<MetricScore> base = load_scores(base_scores);
    std::vector<MetricScore> opt = load_scores(opt_scores);

    Manifest m =
        make_manifest("transfer", config_to_json(cfg), {base_scores, opt_scores}, cfg.seed);
    write_manifest(m, cfg.out_dir);

    TransferDelta d = transfer_delta(base, opt);
    d.model_tag = cfg.model_tag;
    d.dataset_tag = cfg.dataset_tag;

    std::string dst =
        out_path.empty() ? (fs::path(cfg.out_dir) / "transfer.json").string() : out_path;
    json j = transfer_to_json(d);
    j["schema_version"] = kSchemaVersion;
    j["manifest"] = m.id;
    std::ofstream out(dst);
    if (!out) throw parse_error("cannot write " + dst);
    out << j.dump(2) << "\n";
    std::cout << "transfer[" << d.eval_metric << "]: delta " << d.delta << " over "
              << d.coverage << " instances -> " << dst << "\n";
    return 0;
}

int cmd_merge(const Config& cfg, const std::vector<std::string>& delta_paths,
              const std::vector<double>& weights, double lambda, const std::string& out_path) {
    ensure_out_dir(cfg);
    if (delta_paths.empty()) throw contract_error("merge: no delta files");
    if (!weights.empty() && weights.size() != delta_paths.size())
        throw validation_error("merge: weight count does not match delta count");

    MergeSpec spec;
    spec.lambda = lambda;
    for (size_t i = 0; i < delta_paths.size(); ++i) {
        MergeComponent c;
        c.vector = load_param_delta(delta_paths[i]);
        c.weight = weights.empty() ? 1.0 : weights[i];
        spec.components.push_back(std::move(c));
    }
    spec.validate();

    Manifest m = make_manifest("merge", config_to_json(cfg), delta_paths, cfg.seed);
    write_manifest(m, cfg.out_dir);

    TaskVector merged = combine(spec);
    std::string dst =
        out_path.empty() ? (fs::path(cfg.out_dir) / "merged.fmpd").string() : out_path;
    save_param_delta(merged, dst);
    std::cout << "merge: " << delta_paths.size() << " vectors, lambda " << lambda << " -> "
              << dst << "\n";
    return 0;
}

int cmd_analyze(const Config& cfg, const std::vector<std::string>& delta_paths,
                const std::string& out_path) {
    ensure_out_dir(cfg);
    if (delta_paths.size() < 2) throw contract_error("analyze: need at least two delta files");

    std::vector<TaskVector> vectors;
    for (const auto& p : delta_paths) vectors.push_back(load_param_delta(p));

    Manifest m = make_manifest("analyze", config_to_json(cfg), delta_paths, cfg.seed);
    write_manifest(m, cfg.out_dir);

    SimilarityMatrix sim = similarity_matrix(vectors);
    PcaResult pca = pca_project(vectors, std::min<int>(3, static_cast<int>(vectors.size())));

    json j;
    j["schema_version"] = kSchemaVersion;
    j["manifest"] = m.id;
    j["inputs"] = delta_paths;
    j["similarity"] = sim.values;
    j["undefined"] = sim.undefined;
    j["pca"] = {{"coordinates", pca.coordinates},
                {"component_variance", pca.component_variance},
                {"residual_variance", pca.residual_variance}};

    std::string dst =
        out_path.empty() ? (fs::path(cfg.out_dir) / "analysis.json").string() : out_path;
    std::ofstream out(dst);
    if (!out) throw parse_error("cannot write " + dst);
    out << j.dump(2) << "\n";
    std::cout << "analyze: " << vectors.size() << " vectors -> " << dst << "\n";
    return 0;
}

int cmd_accuracy(const Config& cfg, const std::string& backend_override) {
    ensure_out_dir(cfg);
    apply_jobs(cfg);
    std::vector<Instance> instances = load_instances(cfg);
    BackendPtr subject = resolve_backend(cfg, backend_override);
    std::string tmpl = resolve_template(cfg);

    Manifest m = make_manifest("accuracy", config_to_json(cfg), {cfg.dataset_path}, cfg.seed);
    write_manifest(m, cfg.out_dir);

    int correct = 0;
    for (const auto& inst : instances) {
        ChoiceDistribution dist = choice_scores(*subject, inst, tmpl, std::nullopt);
        if (dist.argmax() == inst.answer_key) ++correct;
    }
    double pct = instances.empty() ? 0.0 : 100.0 * correct / instances.size();

    json j{{"schema_version", kSchemaVersion},
           {"manifest", m.id},
           {"correct", correct},
           {"total", instances.size()},
           {"accuracy_percent", pct}};
    std::string dst = (fs::path(cfg.out_dir) / "accuracy.json").string();
    std::ofstream out(dst);
    out << j.dump(2) << "\n";
    std::cout << "accuracy: " << correct << "/" << instances.size() << " (" << pct << "%)\n";
    return 0;
}

std::map<std::string, TransferCell> aggregate_fixture(const json& fixture,
                                                      const std::string& dataset) {
    if (!fixture.contains("table3") || !fixture["table3"].contains(dataset))
        throw validation_error("fixture has no table3 entry for dataset " + dataset);
    const json& ds = fixture["table3"][dataset];

    std::vector<TransferDelta> deltas;
    for (const auto& [model, body] : ds.items()) {
        if (!body.contains("deltas")) continue;
        for (const auto& [source, paradigms] : body["deltas"].items()) {
            for (const auto& [paradigm, evals] : paradigms.items()) {
                for (const auto& [eval, value] : evals.items()) {
                    TransferDelta d;
                    d.source_metric = source;
                    d.eval_metric = eval;
                    d.model_tag = model;
                    d.paradigm = paradigm;
                    d.dataset_tag = dataset;
                    d.delta = value.get<double>();
                    d.coverage = 1;
                    deltas.push_back(std::move(d));
                }
            }
        }
    }

    std::map<std::string, TransferCell> cells;
    for (auto& [key, cell] :
         aggregate_transfer(deltas, {"source_metric", "eval_metric"})) {
        std::string remapped = key;
        auto bar = remapped.find('|');
        remapped.replace(bar, 1, "->");
        cells[remapped] = cell;
    }

    // Contextual average: pooled over the four corruption metrics, minus the
    // source itself when the source is one of them.
    static const std::vector<std::string> kContextual = {"early_answering", "adding_mistake",
                                                         "filler_token", "paraphrasing"};
    std::map<std::string, TransferCell> avg;
    for (const auto& d : deltas) {
        bool contextual = false;
        for (const auto& c : kContextual) contextual = contextual || d.eval_metric == c;
        if (!contextual || d.eval_metric == d.source_metric) continue;
        TransferCell& cell = avg[d.source_metric + "->cont_avg"];
        cell.total += 1;
        if (d.delta > 0.0) cell.positive += 1;
        cell.mean_delta += d.delta;
    }
    for (auto& [key, cell] : avg) {
        cell.mean_delta /= cell.total;
        cells[key] = cell;
    }
    return cells;
}

int cmd_report(const Config& cfg, const std::string& fixture_path) {
    ensure_out_dir(cfg);
    std::ifstream in(fixture_path);
    if (!in) throw parse_error("cannot open fixture: " + fixture_path);
    json fixture;
    try {
        in >> fixture;
    } catch (const json::parse_error& e) {
        throw parse_error(fixture_path + ": " + e.what());
    }

    Manifest m = make_manifest("report", config_to_json(cfg), {fixture_path}, cfg.seed);
    write_manifest(m, cfg.out_dir);

    static const std::vector<std::string> kSources = {"early_answering", "adding_mistake",
                                                      "filler_token", "paraphrasing",
                                                      "parametric"};
    std::vector<std::string> evals =
        fixture.value("eval_metrics", std::vector<std::string>{"ccshap", "early_answering",
                                                               "adding_mistake", "filler_token",
                                                               "paraphrasing", "parametric"});

    std::string md_path = (fs::path(cfg.out_dir) / "report.md").string();
    std::string csv_path = (fs::path(cfg.out_dir) / "report.csv").string();
    std::ofstream md(md_path);
    std::ofstream csv(csv_path);
    if (!md || !csv) throw parse_error("cannot write report files");

    md << "# Transfer aggregation\n\nManifest: " << m.id << "\n";
    csv << "dataset,source";
    for (const auto& e : evals) csv << "," << e;
    csv << ",cont_avg\n";

    for (const auto& [dataset, body] : fixture["table3"].items()) {
        auto cells = aggregate_fixture(fixture, dataset);
        md << "\n## " << dataset << "\n\n| source |";
        for (const auto& e : evals) md << " " << e << " |";
        md << " cont. avg |\n|---|";
        for (size_t i = 0; i <= evals.size(); ++i) md << "---|";
        md << "\n";
        for (const auto& src : kSources) {
            if (!cells.count(src + "->" + evals.front()) &&
                !cells.count(src + "->" + evals.back()))
                continue;
            md << "| " << src << " |";
            csv << dataset << "," << src;
            for (const auto& e : evals) {
                auto it = cells.find(src + "->" + e);
                if (it == cells.end()) {
                    md << " - |";
                    csv << ",";
                } else {
                    md << " " << format_cell(it->second) << " |";
                    csv << ",\"" << format_cell(it->second) << "\"";
                }
            }
            auto av = cells.find(src + "->cont_avg");
            if (av == cells.end()) {
                md << " - |\n";
                csv << ",\n";
            } else {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%+.4f", av->second.mean_delta);
                md << " " << buf << " |\n";
                csv << "," << buf << "\n";
            }
        }
    }
    std::cout << "report -> " << md_path << ", " << csv_path << "\n";
    return 0;
}

} // namespace faithmate
