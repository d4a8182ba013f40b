#include "faithmate/parametric.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "faithmate/error.hpp"
#include "faithmate/prompt.hpp"
#include "faithmate/text.hpp"

namespace faithmate {

void UnlearnConfig::validate() const {
    if (beta <= 0.0) throw validation_error("unlearn: beta must be positive");
    if (npo_coeff < 0.0 || kl_coeff < 0.0)
        throw validation_error("unlearn: coefficients must be non-negative");
    if (epochs <= 0) throw validation_error("unlearn: epochs must be positive");
    if (retain_set_size <= 0) throw validation_error("unlearn: retain_set_size must be positive");
    if (ref_policy != "fine_tuned")
        throw validation_error("unlearn: unknown ref_policy " + ref_policy);
}

namespace {

// Char offsets (within step_text) belonging to content-bearing words.
std::vector<size_t> forget_offsets(const std::string& step_text) {
    std::vector<size_t> out;
    size_t i = 0;
    while (i < step_text.size()) {
        while (i < step_text.size() &&
               std::isspace(static_cast<unsigned char>(step_text[i])))
            ++i;
        size_t start = i;
        while (i < step_text.size() &&
               !std::isspace(static_cast<unsigned char>(step_text[i])))
            ++i;
        if (i == start) continue;
        std::string word = step_text.substr(start, i - start);
        if (content_tokens(word).empty()) continue;
        for (size_t j = start; j < i; ++j)
            if (std::isalnum(static_cast<unsigned char>(step_text[j])))
                out.push_back(j);
    }
    return out;
}

std::vector<double> log_softmax_row(const double* row, int V) {
    double m = row[0];
    for (int j = 1; j < V; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (int j = 0; j < V; ++j) z += std::exp(row[j] - m);
    double lz = m + std::log(z);
    std::vector<double> out(static_cast<size_t>(V));
    for (int j = 0; j < V; ++j) out[static_cast<size_t>(j)] = row[j] - lz;
    return out;
}

void accumulate(ParamMap& into, const ParamMap& from, double scale) {
    for (const auto& [name, m] : from) {
        auto it = into.find(name);
        if (it == into.end()) {
            Matrix copy = m;
            faithmate::scale(copy, scale);
            into[name] = std::move(copy);
        } else {
            axpy(scale, m, it->second);
        }
    }
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Text of the CoT up to (excluding) steps[step_index].
std::string cot_prefix(const CoTSample& cot, int step_index) {
    std::string out;
    for (int i = 0; i < step_index; ++i) {
        out += cot.steps[static_cast<size_t>(i)];
        out += cot.separators[static_cast<size_t>(i)];
    }
    return out;
}

} // namespace

std::vector<std::string> build_retain_set(const std::vector<CoTSample>& dataset_cots,
                                          const CoTSample& exclude, int size, uint64_t seed) {
    std::vector<std::string> pool;
    for (const auto& c : dataset_cots) {
        if (c.instance_id == exclude.instance_id) continue;
        for (const auto& s : c.steps)
            if (!trim(s).empty()) pool.push_back(s);
    }
    if (static_cast<int>(pool.size()) < size)
        throw contract_error("retain pool has " + std::to_string(pool.size()) +
                             " steps, need " + std::to_string(size));
    DetRng rng(seed);
    // partial Fisher-Yates: first `size` entries are a uniform sample
    for (int i = 0; i < size; ++i) {
        int j = i + rng.uniform_int(static_cast<int>(pool.size()) - i);
        std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    pool.resize(static_cast<size_t>(size));
    return pool;
}

double forget_token_logprob(ToyBackend& model, const std::string& context,
                            const std::string& step_text, int min_content_tokens) {
    (void)min_content_tokens;
    std::vector<size_t> offsets = forget_offsets(step_text);
    if (offsets.empty()) throw contract_error("step has no content-bearing tokens");
    std::string ctx = context.empty() ? std::string(1, '\0') : context;
    std::vector<int> seq = model.encode(ctx + step_text);
    Matrix lg = model.logits(seq);
    // logits clamp to the context window by dropping leading tokens
    size_t dropped = seq.size() - lg.rows;
    if (dropped >= ctx.size())
        throw contract_error("forget step too long for the context window");
    size_t base = ctx.size() - dropped;
    double sum = 0.0;
    for (size_t off : offsets) {
        size_t pos = base + off;
        auto lsm = log_softmax_row(lg.row(pos - 1), model.config().vocab_size);
        sum += lsm[static_cast<size_t>(seq[dropped + pos])];
    }
    return sum / static_cast<double>(offsets.size());
}

double npo_kl_loss(ToyBackend& model, const ToyBackend& reference, const std::string& context,
                   const std::string& step_text, const std::vector<std::string>& retain_texts,
                   const UnlearnConfig& config, ParamMap* grads_out) {
    config.validate();
    const int V = model.config().vocab_size;
    double loss = 0.0;

    // forget term
    std::vector<size_t> offsets = forget_offsets(step_text);
    if (offsets.empty()) throw contract_error("step has no content-bearing tokens");
    std::string ctx = context.empty() ? std::string(1, '\0') : context;
    std::vector<int> seq = model.encode(ctx + step_text);
    auto cache = model.forward_cached(seq);
    Matrix lg;
    matmul(cache->h_final, model.params().at("unembed"), lg);
    // over-length sequences lose leading context tokens, never step tokens
    size_t dropped = seq.size() - cache->tokens.size();
    if (dropped >= ctx.size())
        throw contract_error("forget step too long for the context window");
    std::vector<int> kept(seq.begin() + static_cast<long>(dropped), seq.end());
    Matrix lg_ref = reference.logits(kept);
    size_t base = ctx.size() - dropped;
    const double M = static_cast<double>(offsets.size());

    Matrix dlg(lg.rows, lg.cols);
    double l_forget = 0.0;
    for (size_t off : offsets) {
        size_t pos = base + off;
        int tok = kept[pos];
        auto lsm = log_softmax_row(lg.row(pos - 1), V);
        auto lsm_ref = log_softmax_row(lg_ref.row(pos - 1), V);
        double diff = lsm[static_cast<size_t>(tok)] - lsm_ref[static_cast<size_t>(tok)];
        l_forget += std::log1p(std::exp(config.beta * diff));
        if (grads_out) {
            // d/dlp of (2/beta)*mean log(1+exp(beta*(lp-lpref))) is
            // (2/M)*sigma(beta*diff); chain through log-softmax
            double coeff = config.npo_coeff * (2.0 / M) * sigmoid(config.beta * diff);
            double* drow = dlg.row(pos - 1);
            for (int j = 0; j < V; ++j)
                drow[j] += coeff * ((j == tok ? 1.0 : 0.0) -
                                    std::exp(lsm[static_cast<size_t>(j)]));
        }
    }
    l_forget = (2.0 / config.beta) * (l_forget / M);
    loss += config.npo_coeff * l_forget;

    ParamMap grads;
    if (grads_out) accumulate(grads, model.backward(*cache, dlg), 1.0);

    // retain term: token-wise KL(ref || theta), averaged over all positions
    if (config.kl_coeff > 0.0 && !retain_texts.empty()) {
        size_t total_positions = 0;
        for (const auto& r : retain_texts) total_positions += r.size();
        if (total_positions > 0) {
            double l_retain = 0.0;
            for (const auto& r : retain_texts) {
                if (r.empty()) continue;
                std::vector<int> rseq = model.encode(std::string(1, '\0') + r);
                auto rcache = model.forward_cached(rseq);
                Matrix rlg;
                matmul(rcache->h_final, model.params().at("unembed"), rlg);
                Matrix rlg_ref = reference.logits(rseq);
                Matrix drlg(rlg.rows, rlg.cols);
                for (size_t i = 0; i + 1 < rcache->tokens.size(); ++i) {
                    auto lsm = log_softmax_row(rlg.row(i), V);
                    auto lsm_ref = log_softmax_row(rlg_ref.row(i), V);
                    double kl = 0.0;
                    for (int j = 0; j < V; ++j) {
                        double pref = std::exp(lsm_ref[static_cast<size_t>(j)]);
                        kl += pref * (lsm_ref[static_cast<size_t>(j)] -
                                      lsm[static_cast<size_t>(j)]);
                    }
                    l_retain += kl;
                    if (grads_out) {
                        double coeff = config.kl_coeff / static_cast<double>(total_positions);
                        double* drow = drlg.row(i);
                        for (int j = 0; j < V; ++j)
                            drow[j] = coeff * (std::exp(lsm[static_cast<size_t>(j)]) -
                                               std::exp(lsm_ref[static_cast<size_t>(j)]));
                    }
                }
                if (grads_out) accumulate(grads, model.backward(*rcache, drlg), 1.0);
            }
            loss += config.kl_coeff * (l_retain / static_cast<double>(total_positions));
        }
    }

    if (grads_out) *grads_out = std::move(grads);
    return loss;
}

UnlearnResult unlearn_step(ToyBackend& model, const Instance& instance, const CoTSample& cot,
                           int step_index, const std::vector<std::string>& retain,
                           const UnlearnConfig& config, const std::string& tmpl) {
    config.validate();
    UnlearnResult result;
    result.delta.base_fingerprint = model.fingerprint();
    if (step_index < 0 || step_index >= static_cast<int>(cot.steps.size()))
        throw contract_error("unlearn_step: step index out of range");
    const std::string& step = cot.steps[static_cast<size_t>(step_index)];
    if (count_content_tokens(step) < config.min_content_tokens) {
        result.skipped = true;
        return result;
    }

    std::string context = render_cot_prompt(instance, tmpl) + cot_prefix(cot, step_index);
    ParamMap initial = model.params();
    ToyBackend reference(model.config(), initial);
    result.initial_forget_logprob =
        forget_token_logprob(model, context, step, config.min_content_tokens);

    // Adam over the full parameter set
    ParamMap m_state, v_state;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int t = 1; t <= config.epochs; ++t) {
        ParamMap grads;
        double loss = npo_kl_loss(model, reference, context, step, retain, config, &grads);
        if (!std::isfinite(loss)) {
            result.diverged = true;
            break;
        }
        ParamMap updated = model.params();
        for (auto& [name, g] : grads) {
            Matrix& m = m_state.try_emplace(name, g.rows, g.cols).first->second;
            Matrix& v = v_state.try_emplace(name, g.rows, g.cols).first->second;
            Matrix& p = updated.at(name);
            double bc1 = 1.0 - std::pow(b1, t);
            double bc2 = 1.0 - std::pow(b2, t);
            for (size_t i = 0; i < g.size(); ++i) {
                m.data[i] = b1 * m.data[i] + (1.0 - b1) * g.data[i];
                v.data[i] = b2 * v.data[i] + (1.0 - b2) * g.data[i] * g.data[i];
                double mhat = m.data[i] / bc1;
                double vhat = v.data[i] / bc2;
                p.data[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + eps);
            }
        }
        model.set_params(std::move(updated));
    }

    result.final_forget_logprob =
        forget_token_logprob(model, context, step, config.min_content_tokens);
    for (const auto& [name, p] : model.params()) {
        Matrix d = p;
        axpy(-1.0, initial.at(name), d);
        result.delta.entries[name] = std::move(d);
    }
    model.set_params(std::move(initial));
    return result;
}

FfResult ff_scores(ToyBackend& model, const Instance& instance, const CoTSample& cot,
                   const std::vector<CoTSample>& dataset_cots, const UnlearnConfig& config,
                   const std::string& tmpl) {
    FfResult result;
    std::string baseline = choice_scores(model, instance, tmpl, cot.text).argmax();
    SnapshotToken snap = model.snapshot();

    int flips = 0, evaluated = 0;
    for (int i = 0; i < static_cast<int>(cot.steps.size()); ++i) {
        StepFlipRecord rec;
        rec.step_index = i;
        rec.original_label = baseline;
        if (count_content_tokens(cot.steps[static_cast<size_t>(i)]) <
            config.min_content_tokens) {
            rec.skipped = true;
            ++result.skipped_count;
            result.steps.push_back(rec);
            continue;
        }
        std::vector<std::string> retain = build_retain_set(
            dataset_cots, cot, config.retain_set_size, config.seed + static_cast<uint64_t>(i));
        UnlearnResult ur = unlearn_step(model, instance, cot, i, retain, config, tmpl);
        if (ur.skipped || ur.diverged) {
            rec.skipped = true;
            ++result.skipped_count;
            result.steps.push_back(rec);
            continue;
        }
        model.apply_delta_inplace(ur.delta);
        rec.post_unlearn_label = choice_scores(model, instance, tmpl, cot.text).argmax();
        model.restore(snap);
        rec.flipped = rec.post_unlearn_label != baseline;
        if (rec.flipped) ++flips;
        ++evaluated;
        result.steps.push_back(rec);
    }
    if (evaluated == 0) {
        result.undefined = true;
        return result;
    }
    result.ff_cont = static_cast<double>(flips) / static_cast<double>(evaluated);
    result.ff_hard = result.ff_cont > 0.0 ? 1 : 0;
    return result;
}

MetricScore ff_metric_score(const FfResult& r, MetricId which, const std::string& instance_id,
                            const std::string& cot_ref) {
    if (which != MetricId::ff_hard && which != MetricId::ff_cont)
        throw contract_error("ff_metric_score: not a parametric metric");
    MetricScore s;
    s.instance_id = instance_id;
    s.cot_ref = cot_ref;
    s.metric_id = which;
    s.value = which == MetricId::ff_hard ? static_cast<double>(r.ff_hard) : r.ff_cont;
    s.details["skipped_steps"] = r.skipped_count;
    if (r.undefined) s.details["undefined"] = true;
    json steps = json::array();
    for (const auto& rec : r.steps) {
        steps.push_back(json{{"step_index", rec.step_index},
                             {"original_label", rec.original_label},
                             {"post_unlearn_label", rec.post_unlearn_label},
                             {"flipped", rec.flipped},
                             {"skipped", rec.skipped}});
    }
    s.details["steps"] = steps;
    s.validate();
    return s;
}

} // namespace faithmate
