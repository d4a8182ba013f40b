#include "faithmate/prefopt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "faithmate/error.hpp"
#include "faithmate/prompt.hpp"

namespace faithmate {

void AdapterConfig::validate() const {
    if (rank <= 0) throw validation_error("adapter: rank must be positive");
    if (alpha <= 0.0) throw validation_error("adapter: alpha must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw validation_error("adapter: dropout out of [0,1)");
    if (bias_mode != "none") throw validation_error("adapter: unsupported bias_mode " + bias_mode);
}

void TrainConfig::validate() const {
    if (batch_size <= 0 || grad_accum_steps <= 0)
        throw validation_error("train: batch_size and grad_accum_steps must be positive");
    if (learning_rate <= 0.0) throw validation_error("train: learning_rate must be positive");
    if (epochs <= 0) throw validation_error("train: epochs must be positive");
    if (schedule != "cosine") throw validation_error("train: unsupported schedule " + schedule);
    if (warmup_ratio < 0.0 || warmup_ratio >= 1.0)
        throw validation_error("train: warmup_ratio out of [0,1)");
    if (max_grad_norm <= 0.0) throw validation_error("train: max_grad_norm must be positive");
    if (dpo_beta < 0.0) throw validation_error("train: dpo_beta must be non-negative");
    if (max_steps && *max_steps <= 0) throw validation_error("train: max_steps must be positive");
}

namespace {

// Training target: the CoT text plus its answer declaration when present.
std::string pair_target(const CoTSample& cot) {
    std::string t = cot.text;
    if (cot.predicted_label) t += std::string(kAnswerScaffold) + *cot.predicted_label;
    return t;
}

double softplus(double z) {
    // log(1 + exp(z)), stable for large |z|
    if (z > 30.0) return z;
    return std::log1p(std::exp(z));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Summed target log-probability plus, optionally, grads of that sum.
double sequence_logprob_grad(ToyBackend& model, const std::string& prompt,
                             const std::string& target, double upstream, ParamMap* grads_out) {
    if (target.empty()) throw contract_error("empty training target");
    std::string ctx = prompt.empty() ? std::string(1, '\0') : prompt;
    std::vector<int> seq = model.encode(ctx + target);
    const int V = model.config().vocab_size;
    auto cache = model.forward_cached(seq);
    Matrix lg;
    matmul(cache->h_final, model.params().at("unembed"), lg);

    Matrix dlg(lg.rows, lg.cols);
    double sum = 0.0;
    for (size_t pos = ctx.size(); pos < seq.size(); ++pos) {
        const double* row = lg.row(pos - 1);
        double m = row[0];
        for (int j = 1; j < V; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (int j = 0; j < V; ++j) z += std::exp(row[j] - m);
        double lz = m + std::log(z);
        int tok = seq[pos];
        sum += row[tok] - lz;
        if (grads_out) {
            double* drow = dlg.row(pos - 1);
            for (int j = 0; j < V; ++j) {
                double p = std::exp(row[j] - lz);
                drow[j] = upstream * ((j == tok ? 1.0 : 0.0) - p);
            }
        }
    }
    if (grads_out) {
        ParamMap g = model.backward(*cache, dlg);
        for (auto& [name, m2] : g) {
            auto it = grads_out->find(name);
            if (it == grads_out->end()) (*grads_out)[name] = std::move(m2);
            else axpy(1.0, m2, it->second);
        }
    }
    return sum;
}

double sequence_logprob(const ToyBackend& model, const std::string& prompt,
                        const std::string& target) {
    auto lps = const_cast<ToyBackend&>(model).token_logprobs(prompt, target);
    return std::accumulate(lps.begin(), lps.end(), 0.0);
}

} // namespace

PairBuildResult build_pairs(
    const std::map<std::string, std::vector<std::pair<CoTSample, double>>>& scored_sets,
    MetricId metric, const std::map<std::string, std::string>& prompts) {
    if (!is_training_metric(metric))
        throw validation_error(std::string(metric_name(metric)) +
                               " is evaluation-only and cannot rank training pairs");
    PairBuildResult result;
    for (const auto& [instance_id, scored] : scored_sets) {
        ++result.instances_seen;
        if (scored.empty()) {
            ++result.skipped_unscored;
            continue;
        }
        auto prompt_it = prompts.find(instance_id);
        if (prompt_it == prompts.end())
            throw contract_error("no prompt recorded for instance " + instance_id);

        size_t best = 0, worst = 0;
        for (size_t i = 1; i < scored.size(); ++i) {
            auto better = [&](size_t a, size_t b) {
                if (scored[a].second != scored[b].second)
                    return scored[a].second > scored[b].second;
                return scored[a].first.sample_index < scored[b].first.sample_index;
            };
            auto worse = [&](size_t a, size_t b) {
                if (scored[a].second != scored[b].second)
                    return scored[a].second < scored[b].second;
                return scored[a].first.sample_index < scored[b].first.sample_index;
            };
            if (better(i, best)) best = i;
            if (worse(i, worst)) worst = i;
        }

        PreferenceRecord sft;
        sft.instance_id = instance_id;
        sft.prompt = prompt_it->second;
        sft.chosen = scored[best].first;
        sft.rejected = scored[best].first;
        sft.metric_id = metric;
        sft.chosen_score = scored[best].second;
        sft.rejected_score = scored[best].second;
        result.sft.push_back(sft);

        if (scored.size() >= 2 && scored[best].second > scored[worst].second) {
            PreferenceRecord dpo = sft;
            dpo.rejected = scored[worst].first;
            dpo.rejected_score = scored[worst].second;
            dpo.validate();
            result.dpo.push_back(std::move(dpo));
        } else if (scored.size() >= 2) {
            ++result.dpo_dropped_ties;
        }
    }
    return result;
}

double sft_loss(Backend& handle, const std::string& prompt, const std::string& target) {
    if (target.empty()) throw contract_error("sft_loss: empty target");
    auto lps = handle.token_logprobs(prompt, target);
    double sum = std::accumulate(lps.begin(), lps.end(), 0.0);
    return -sum / static_cast<double>(lps.size());
}

double bt_reward_loss(double reward_chosen, double reward_rejected) {
    if (!std::isfinite(reward_chosen) || !std::isfinite(reward_rejected))
        throw contract_error("bt_reward_loss: non-finite rewards");
    return softplus(-(reward_chosen - reward_rejected));
}

double dpo_loss(Backend& policy, Backend& reference, const PreferenceRecord& record,
                double beta) {
    std::string yw = pair_target(record.chosen);
    std::string yl = pair_target(record.rejected);
    auto seq_lp = [&](Backend& b, const std::string& y) {
        auto lps = b.token_logprobs(record.prompt, y);
        return std::accumulate(lps.begin(), lps.end(), 0.0);
    };
    double h = beta * ((seq_lp(policy, yw) - seq_lp(reference, yw)) -
                       (seq_lp(policy, yl) - seq_lp(reference, yl)));
    return softplus(-h);
}

double sft_loss_grad(ToyBackend& model, const std::string& prompt, const std::string& target,
                     ParamMap* grads_out) {
    // minimizing -sum log p(target); upstream of the logprob sum is -1
    double sum = sequence_logprob_grad(model, prompt, target, -1.0, grads_out);
    return -sum;
}

double dpo_loss_grad(ToyBackend& policy, const ToyBackend& reference,
                     const PreferenceRecord& record, double beta, ParamMap* grads_out) {
    std::string yw = pair_target(record.chosen);
    std::string yl = pair_target(record.rejected);
    double lp_w = sequence_logprob(policy, record.prompt, yw);
    double lp_l = sequence_logprob(policy, record.prompt, yl);
    double ref_w = sequence_logprob(reference, record.prompt, yw);
    double ref_l = sequence_logprob(reference, record.prompt, yl);
    double h = beta * ((lp_w - ref_w) - (lp_l - ref_l));
    double loss = softplus(-h);
    if (grads_out) {
        // dloss/dh = -sigmoid(-h); dh/dlp_w = beta, dh/dlp_l = -beta
        double s = sigmoid(-h);
        sequence_logprob_grad(policy, record.prompt, yw, -s * beta, grads_out);
        sequence_logprob_grad(policy, record.prompt, yl, s * beta, grads_out);
    }
    return loss;
}

TrainResult train(ToyBackend& model, const std::vector<PreferenceRecord>& records, TrainMode mode,
                  const AdapterConfig& adapter_in, const TrainConfig& config) {
    AdapterConfig adapter = adapter_in;
    if (adapter.target_module_names.empty())
        adapter.target_module_names = toy_default_target_modules();
    adapter.validate();
    config.validate();
    if (records.empty()) throw contract_error("train: no records");

    const ParamMap base = model.params();
    const std::string base_fingerprint = model.fingerprint();
    const ToyBackend reference(model.config(), base);

    // adapter factors per targeted parameter
    std::vector<std::string> targets;
    for (const auto& [name, m] : base) {
        for (const auto& suffix : adapter.target_module_names) {
            if (name.size() >= suffix.size() &&
                name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
                if (static_cast<size_t>(adapter.rank) > std::min(m.rows, m.cols))
                    throw validation_error("adapter rank " + std::to_string(adapter.rank) +
                                           " exceeds min dimension of " + name);
                targets.push_back(name);
                break;
            }
        }
    }
    if (targets.empty()) throw validation_error("train: no parameters match the adapter targets");

    const double scaling = adapter.alpha / static_cast<double>(adapter.rank);
    const size_t r = static_cast<size_t>(adapter.rank);
    DetRng rng(config.seed);
    std::map<std::string, Matrix> A, B; // W <- W + scaling * B * A
    for (const auto& name : targets) {
        const Matrix& w = base.at(name);
        Matrix a(r, w.cols);
        for (auto& v : a.data) v = rng.gaussian() * 0.01;
        A[name] = std::move(a);
        B[name] = Matrix(w.rows, r); // zero init keeps the initial delta zero
    }

    auto materialize = [&]() {
        ParamMap p = base;
        for (const auto& name : targets) {
            Matrix ba;
            matmul(B[name], A[name], ba);
            axpy(scaling, ba, p.at(name));
        }
        model.set_params(std::move(p));
    };
    materialize();

    int steps_per_epoch = std::max(
        1, static_cast<int>((records.size() + static_cast<size_t>(config.batch_size) *
                                                  static_cast<size_t>(config.grad_accum_steps) -
                             1) /
                            (static_cast<size_t>(config.batch_size) *
                             static_cast<size_t>(config.grad_accum_steps))));
    int total_steps =
        config.max_steps ? *config.max_steps : steps_per_epoch * config.epochs;
    int warmup_steps = static_cast<int>(config.warmup_ratio * total_steps);
    auto lr_at = [&](int step) { // 1-based
        if (warmup_steps > 0 && step <= warmup_steps)
            return config.learning_rate * static_cast<double>(step) /
                   static_cast<double>(warmup_steps);
        double progress =
            total_steps == warmup_steps
                ? 1.0
                : static_cast<double>(step - warmup_steps) /
                      static_cast<double>(total_steps - warmup_steps);
        return config.learning_rate * 0.5 * (1.0 + std::cos(M_PI * progress));
    };

    // epoch-shuffled record order, consumed cyclically
    std::vector<size_t> order;
    auto extend_order = [&](uint64_t epoch) {
        std::vector<size_t> idx(records.size());
        std::iota(idx.begin(), idx.end(), 0);
        DetRng erng(config.seed * 0x9e3779b9ull + epoch + 1);
        for (size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[static_cast<size_t>(erng.uniform_int(static_cast<int>(i)))]);
        order.insert(order.end(), idx.begin(), idx.end());
    };

    TrainResult result;
    result.delta.base_fingerprint = base_fingerprint;
    std::map<std::string, Matrix> mA, vA, mB, vB;
    for (const auto& name : targets) {
        mA[name] = Matrix(A[name].rows, A[name].cols);
        vA[name] = Matrix(A[name].rows, A[name].cols);
        mB[name] = Matrix(B[name].rows, B[name].cols);
        vB[name] = Matrix(B[name].rows, B[name].cols);
    }
    size_t cursor = 0;
    uint64_t epoch = 0;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const int per_step = config.batch_size * config.grad_accum_steps;

    for (int step = 1; step <= total_steps; ++step) {
        ParamMap full_grads;
        double loss_sum = 0.0;
        double margin_sum = 0.0;
        for (int k = 0; k < per_step; ++k) {
            if (cursor >= order.size()) extend_order(epoch++);
            const PreferenceRecord& rec = records[order[cursor++]];
            if (mode == TrainMode::sft) {
                loss_sum += sft_loss_grad(model, rec.prompt, pair_target(rec.chosen), &full_grads);
            } else {
                double loss =
                    dpo_loss_grad(model, reference, rec, config.dpo_beta, &full_grads);
                loss_sum += loss;
                // recover h from loss = log(1 + exp(-h))
                double eh = std::expm1(loss);
                margin_sum += eh > 0.0 ? -std::log(eh) : 0.0;
            }
        }
        double mean_loss = loss_sum / per_step;
        if (!std::isfinite(mean_loss)) {
            // the current factors predate this failed step and are the last
            // good checkpoint
            result.aborted = true;
            break;
        }

        // project full-parameter grads onto the adapter factors
        std::map<std::string, Matrix> gA, gB;
        double norm_sq = 0.0;
        for (const auto& name : targets) {
            auto it = full_grads.find(name);
            Matrix dW = it != full_grads.end() ? it->second
                                               : Matrix(base.at(name).rows, base.at(name).cols);
            scale(dW, 1.0 / per_step);
            Matrix ga, gb;
            matmul_at(B[name], dW, ga); // dA = scaling * B^T dW
            scale(ga, scaling);
            matmul_bt(dW, A[name], gb); // dB = scaling * dW A^T
            scale(gb, scaling);
            norm_sq += dot(ga, ga) + dot(gb, gb);
            gA[name] = std::move(ga);
            gB[name] = std::move(gb);
        }
        double gnorm = std::sqrt(norm_sq);
        double clip = gnorm > config.max_grad_norm ? config.max_grad_norm / gnorm : 1.0;

        double lr = lr_at(step);
        double bc1 = 1.0 - std::pow(b1, step);
        double bc2 = 1.0 - std::pow(b2, step);
        auto adam = [&](Matrix& p, Matrix& m, Matrix& v, const Matrix& g) {
            for (size_t i = 0; i < p.size(); ++i) {
                double gi = g.data[i] * clip;
                m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
                v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
                p.data[i] -= lr * (m.data[i] / bc1) / (std::sqrt(v.data[i] / bc2) + eps);
            }
        };
        for (const auto& name : targets) {
            adam(A[name], mA[name], vA[name], gA[name]);
            adam(B[name], mB[name], vB[name], gB[name]);
        }
        materialize();

        TrainStepLog log;
        log.step = step;
        log.loss = mean_loss;
        log.lr = lr;
        log.grad_norm = gnorm;
        if (mode == TrainMode::dpo) log.implicit_margin = margin_sum / per_step;
        result.log.push_back(log);
    }

    for (const auto& name : targets) {
        Matrix ba;
        matmul(B[name], A[name], ba);
        scale(ba, scaling);
        result.delta.entries[name] = std::move(ba);
    }
    model.set_params(base); // trainer leaves the handle untouched
    return result;
}

} // namespace faithmate
