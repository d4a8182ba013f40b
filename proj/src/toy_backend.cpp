#include "faithmate/toy_backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "faithmate/error.hpp"

namespace faithmate {

namespace {

constexpr double kNormEps = 1e-6;

double silu(double z) { return z / (1.0 + std::exp(-z)); }

double silu_grad(double z) {
    double s = 1.0 / (1.0 + std::exp(-z));
    return s * (1.0 + z * (1.0 - s));
}

// y_ij = x_ij / r_i * g_j with r_i = sqrt(mean_j x_ij^2 + eps)
void rmsnorm_fwd(const Matrix& x, const Matrix& g, Matrix& y, std::vector<double>& r) {
    y = Matrix(x.rows, x.cols);
    r.resize(x.rows);
    for (size_t i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        double ss = 0.0;
        for (size_t j = 0; j < x.cols; ++j) ss += xi[j] * xi[j];
        double ri = std::sqrt(ss / static_cast<double>(x.cols) + kNormEps);
        r[i] = ri;
        double* yi = y.row(i);
        for (size_t j = 0; j < x.cols; ++j) yi[j] = xi[j] / ri * g.data[j];
    }
}

Matrix rmsnorm_bwd(const Matrix& x, const std::vector<double>& r, const Matrix& g,
                   const Matrix& dy, Matrix& dg) {
    Matrix dx(x.rows, x.cols);
    if (dg.size() != g.size()) dg = Matrix(g.rows, g.cols);
    const double n = static_cast<double>(x.cols);
    for (size_t i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        const double* dyi = dy.row(i);
        double* dxi = dx.row(i);
        double ri = r[i];
        double dotv = 0.0;
        for (size_t j = 0; j < x.cols; ++j) dotv += xi[j] * g.data[j] * dyi[j];
        for (size_t j = 0; j < x.cols; ++j) {
            dxi[j] = g.data[j] * dyi[j] / ri - xi[j] * dotv / (n * ri * ri * ri);
            dg.data[j] += dyi[j] * xi[j] / ri;
        }
    }
    return dx;
}

void softmax_row(double* v, size_t n) {
    double m = v[0];
    for (size_t j = 1; j < n; ++j) m = std::max(m, v[j]);
    double s = 0.0;
    for (size_t j = 0; j < n; ++j) {
        v[j] = std::exp(v[j] - m);
        s += v[j];
    }
    for (size_t j = 0; j < n; ++j) v[j] /= s;
}

std::string layer_prefix(int l) { return "l" + std::to_string(l) + "."; }

uint64_t fnv1a_mix(uint64_t h, const void* bytes, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace

uint64_t DetRng::next_u64() {
    state_ += 0x9E3779B97f4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double DetRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double DetRng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return mag * std::cos(2.0 * M_PI * u2);
}

int DetRng::uniform_int(int n) {
    if (n <= 0) throw contract_error("uniform_int: n must be positive");
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
}

ParamMap toy_init_params(const ToyConfig& c) {
    DetRng rng(c.init_seed);
    ParamMap p;
    auto gauss = [&](size_t r, size_t cc) {
        Matrix m(r, cc);
        for (auto& v : m.data) v = rng.gaussian() * c.init_std;
        return m;
    };
    size_t d = static_cast<size_t>(c.d_model);
    p["tok_emb"] = gauss(static_cast<size_t>(c.vocab_size), d);
    p["pos_emb"] = gauss(static_cast<size_t>(c.max_seq), d);
    for (int l = 0; l < c.n_layers; ++l) {
        std::string pre = layer_prefix(l);
        p[pre + "attn.norm"] = Matrix(1, d, 1.0);
        p[pre + "attn.wq"] = gauss(d, d);
        p[pre + "attn.wk"] = gauss(d, d);
        p[pre + "attn.wv"] = gauss(d, d);
        p[pre + "attn.wo"] = gauss(d, d);
        p[pre + "mlp.norm"] = Matrix(1, d, 1.0);
        p[pre + "mlp.w_gate"] = gauss(d, static_cast<size_t>(c.hidden));
        p[pre + "mlp.w_up"] = gauss(d, static_cast<size_t>(c.hidden));
        p[pre + "mlp.w_down"] = gauss(static_cast<size_t>(c.hidden), d);
    }
    p["final.norm"] = Matrix(1, d, 1.0);
    p["unembed"] = gauss(d, static_cast<size_t>(c.vocab_size));
    return p;
}

std::vector<std::string> toy_default_target_modules() {
    return {"attn.wq", "attn.wk", "attn.wv", "attn.wo", "mlp.w_gate", "mlp.w_up", "mlp.w_down"};
}

ToyBackend::ToyBackend(const ToyConfig& config)
    : config_(config), params_(toy_init_params(config)) {
    if (config.d_model % config.n_heads != 0)
        throw contract_error("toy backend: d_model must be divisible by n_heads");
}

ToyBackend::ToyBackend(const ToyConfig& config, ParamMap params)
    : config_(config), params_(std::move(params)) {
    if (config.d_model % config.n_heads != 0)
        throw contract_error("toy backend: d_model must be divisible by n_heads");
}

void ToyBackend::set_param(const std::string& name, const Matrix& value) {
    auto it = params_.find(name);
    if (it == params_.end()) throw contract_error("unknown parameter: " + name);
    if (!it->second.same_shape(value))
        throw contract_error("parameter shape mismatch for " + name);
    it->second = value;
}

std::string ToyBackend::fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ull;
    int cfg[6] = {config_.vocab_size, config_.d_model, config_.n_layers,
                  config_.n_heads,    config_.hidden,  config_.max_seq};
    h = fnv1a_mix(h, cfg, sizeof(cfg));
    for (const auto& [name, m] : params_) {
        h = fnv1a_mix(h, name.data(), name.size());
        h = fnv1a_mix(h, m.data.data(), m.data.size() * sizeof(double));
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "toy:%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::set<Capability> ToyBackend::capabilities() const {
    return {Capability::generate, Capability::choice_scores, Capability::token_logprobs,
            Capability::apply_delta, Capability::trainable};
}

std::vector<int> ToyBackend::clamp_tokens(std::vector<int> tokens) const {
    size_t cap = static_cast<size_t>(config_.max_seq);
    if (tokens.size() > cap)
        tokens.erase(tokens.begin(), tokens.end() - static_cast<long>(cap));
    return tokens;
}

std::unique_ptr<ToyForwardCache> ToyBackend::forward_cached(const std::vector<int>& raw) const {
    auto cache = std::make_unique<ToyForwardCache>();
    cache->tokens = clamp_tokens(raw);
    const auto& tokens = cache->tokens;
    const size_t T = tokens.size();
    const size_t d = static_cast<size_t>(config_.d_model);
    const size_t H = static_cast<size_t>(config_.n_heads);
    const size_t dh = d / H;
    if (T == 0) throw contract_error("toy backend: empty token sequence");

    const Matrix& tok_emb = params_.at("tok_emb");
    const Matrix& pos_emb = params_.at("pos_emb");
    Matrix x(T, d);
    for (size_t i = 0; i < T; ++i) {
        int t = tokens[i];
        if (t < 0 || t >= config_.vocab_size)
            throw contract_error("toy backend: token out of vocabulary");
        for (size_t j = 0; j < d; ++j)
            x.at(i, j) = tok_emb.at(static_cast<size_t>(t), j) + pos_emb.at(i, j);
    }

    cache->layers.resize(static_cast<size_t>(config_.n_layers));
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int l = 0; l < config_.n_layers; ++l) {
        LayerCache& lc = cache->layers[static_cast<size_t>(l)];
        std::string pre = layer_prefix(l);
        lc.x_in = x;
        rmsnorm_fwd(x, params_.at(pre + "attn.norm"), lc.h_attn, lc.r_attn);
        matmul(lc.h_attn, params_.at(pre + "attn.wq"), lc.q);
        matmul(lc.h_attn, params_.at(pre + "attn.wk"), lc.k);
        matmul(lc.h_attn, params_.at(pre + "attn.wv"), lc.v);

        lc.attn_concat = Matrix(T, d);
        lc.probs.assign(H, Matrix());
        for (size_t h = 0; h < H; ++h) {
            size_t off = h * dh;
            Matrix& P = lc.probs[h];
            P = Matrix(T, T);
            for (size_t i = 0; i < T; ++i) {
                double* prow = P.row(i);
                for (size_t j = 0; j <= i; ++j) {
                    double s = 0.0;
                    for (size_t c = 0; c < dh; ++c)
                        s += lc.q.at(i, off + c) * lc.k.at(j, off + c);
                    prow[j] = s * scale;
                }
                softmax_row(prow, i + 1);
                for (size_t c = 0; c < dh; ++c) {
                    double o = 0.0;
                    for (size_t j = 0; j <= i; ++j) o += prow[j] * lc.v.at(j, off + c);
                    lc.attn_concat.at(i, off + c) = o;
                }
            }
        }
        Matrix attn_out;
        matmul(lc.attn_concat, params_.at(pre + "attn.wo"), attn_out);
        for (size_t i = 0; i < x.size(); ++i) x.data[i] += attn_out.data[i];
        lc.x_mid = x;

        rmsnorm_fwd(x, params_.at(pre + "mlp.norm"), lc.h_mlp, lc.r_mlp);
        matmul(lc.h_mlp, params_.at(pre + "mlp.w_gate"), lc.gate_pre);
        matmul(lc.h_mlp, params_.at(pre + "mlp.w_up"), lc.up);
        lc.act = Matrix(lc.up.rows, lc.up.cols);
        for (size_t i = 0; i < lc.act.size(); ++i)
            lc.act.data[i] = silu(lc.gate_pre.data[i]) * lc.up.data[i];
        Matrix mlp_out;
        matmul(lc.act, params_.at(pre + "mlp.w_down"), mlp_out);
        for (size_t i = 0; i < x.size(); ++i) x.data[i] += mlp_out.data[i];
    }

    cache->x_final = x;
    rmsnorm_fwd(x, params_.at("final.norm"), cache->h_final, cache->r_final);
    return cache;
}

Matrix ToyBackend::logits(const std::vector<int>& tokens) const {
    auto cache = forward_cached(tokens);
    Matrix out;
    matmul(cache->h_final, params_.at("unembed"), out);
    return out;
}

ParamMap ToyBackend::backward(const ToyForwardCache& cache, const Matrix& dlogits) const {
    const size_t T = cache.tokens.size();
    const size_t d = static_cast<size_t>(config_.d_model);
    const size_t H = static_cast<size_t>(config_.n_heads);
    const size_t dh = d / H;
    if (dlogits.rows != T || dlogits.cols != static_cast<size_t>(config_.vocab_size))
        throw contract_error("backward: dlogits shape mismatch");

    ParamMap g;
    matmul_at(cache.h_final, dlogits, g["unembed"]);
    Matrix dh_final;
    matmul_bt(dlogits, params_.at("unembed"), dh_final);
    Matrix dx = rmsnorm_bwd(cache.x_final, cache.r_final, params_.at("final.norm"), dh_final,
                            g["final.norm"]);

    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int l = config_.n_layers - 1; l >= 0; --l) {
        const LayerCache& lc = cache.layers[static_cast<size_t>(l)];
        std::string pre = layer_prefix(l);

        // MLP block: x = x_mid + w_down(silu(w_gate h) * w_up h), h = norm(x_mid)
        Matrix dact;
        matmul_bt(dx, params_.at(pre + "mlp.w_down"), dact);
        matmul_at(lc.act, dx, g[pre + "mlp.w_down"]);
        Matrix dup(lc.up.rows, lc.up.cols);
        Matrix dgate(lc.up.rows, lc.up.cols);
        for (size_t i = 0; i < dup.size(); ++i) {
            dup.data[i] = dact.data[i] * silu(lc.gate_pre.data[i]);
            dgate.data[i] = dact.data[i] * lc.up.data[i] * silu_grad(lc.gate_pre.data[i]);
        }
        matmul_at(lc.h_mlp, dup, g[pre + "mlp.w_up"]);
        matmul_at(lc.h_mlp, dgate, g[pre + "mlp.w_gate"]);
        Matrix dh2, tmp;
        matmul_bt(dup, params_.at(pre + "mlp.w_up"), dh2);
        matmul_bt(dgate, params_.at(pre + "mlp.w_gate"), tmp);
        for (size_t i = 0; i < dh2.size(); ++i) dh2.data[i] += tmp.data[i];
        Matrix dmid = rmsnorm_bwd(lc.x_mid, lc.r_mlp, params_.at(pre + "mlp.norm"), dh2,
                                  g[pre + "mlp.norm"]);
        for (size_t i = 0; i < dx.size(); ++i) dx.data[i] += dmid.data[i];

        // attention block
        Matrix dconcat;
        matmul_bt(dx, params_.at(pre + "attn.wo"), dconcat);
        matmul_at(lc.attn_concat, dx, g[pre + "attn.wo"]);
        Matrix dq(T, d), dk(T, d), dv(T, d);
        for (size_t h = 0; h < H; ++h) {
            size_t off = h * dh;
            const Matrix& P = lc.probs[h];
            for (size_t i = 0; i < T; ++i) {
                const double* prow = P.row(i);
                // dP and causal-masked softmax backward on row i
                std::vector<double> dp(i + 1, 0.0);
                for (size_t j = 0; j <= i; ++j) {
                    double s = 0.0;
                    for (size_t c = 0; c < dh; ++c)
                        s += dconcat.at(i, off + c) * lc.v.at(j, off + c);
                    dp[j] = s;
                }
                double rowdot = 0.0;
                for (size_t j = 0; j <= i; ++j) rowdot += prow[j] * dp[j];
                for (size_t j = 0; j <= i; ++j) {
                    double ds = prow[j] * (dp[j] - rowdot) * scale;
                    for (size_t c = 0; c < dh; ++c) {
                        dq.at(i, off + c) += ds * lc.k.at(j, off + c);
                        dk.at(j, off + c) += ds * lc.q.at(i, off + c);
                        dv.at(j, off + c) += prow[j] * dconcat.at(i, off + c);
                    }
                }
            }
        }
        matmul_at(lc.h_attn, dq, g[pre + "attn.wq"]);
        matmul_at(lc.h_attn, dk, g[pre + "attn.wk"]);
        matmul_at(lc.h_attn, dv, g[pre + "attn.wv"]);
        Matrix dhn, t2;
        matmul_bt(dq, params_.at(pre + "attn.wq"), dhn);
        matmul_bt(dk, params_.at(pre + "attn.wk"), t2);
        for (size_t i = 0; i < dhn.size(); ++i) dhn.data[i] += t2.data[i];
        matmul_bt(dv, params_.at(pre + "attn.wv"), t2);
        for (size_t i = 0; i < dhn.size(); ++i) dhn.data[i] += t2.data[i];
        Matrix din = rmsnorm_bwd(lc.x_in, lc.r_attn, params_.at(pre + "attn.norm"), dhn,
                                 g[pre + "attn.norm"]);
        for (size_t i = 0; i < dx.size(); ++i) dx.data[i] += din.data[i];
    }

    const Matrix& tok_emb = params_.at("tok_emb");
    const Matrix& pos_emb = params_.at("pos_emb");
    Matrix dtok(tok_emb.rows, tok_emb.cols);
    Matrix dpos(pos_emb.rows, pos_emb.cols);
    for (size_t i = 0; i < T; ++i) {
        int t = cache.tokens[i];
        for (size_t j = 0; j < d; ++j) {
            dtok.at(static_cast<size_t>(t), j) += dx.at(i, j);
            dpos.at(i, j) += dx.at(i, j);
        }
    }
    g["tok_emb"] = std::move(dtok);
    g["pos_emb"] = std::move(dpos);
    return g;
}

GenerateResult ToyBackend::generate(const std::string& prompt, const DecodingConfig& decoding,
                                    uint64_t seed) {
    decoding.validate();
    DetRng rng(seed);
    std::vector<int> tokens = CharTokenizer::encode(prompt);
    if (tokens.empty()) tokens.push_back(CharTokenizer::kPadToken);
    tokens = clamp_tokens(tokens);

    std::string out;
    const int V = config_.vocab_size;
    for (int step = 0; step < decoding.max_new_tokens; ++step) {
        if (tokens.size() >= static_cast<size_t>(config_.max_seq)) break;
        Matrix lg = logits(tokens);
        std::vector<double> row(lg.row(lg.rows - 1), lg.row(lg.rows - 1) + V);
        row[CharTokenizer::kPadToken] = -1e30; // never emit pad

        int next;
        if (decoding.greedy || decoding.temperature == 0.0) {
            next = 0;
            for (int t = 1; t < V; ++t)
                if (row[static_cast<size_t>(t)] > row[static_cast<size_t>(next)]) next = t;
        } else {
            for (auto& v : row) v /= decoding.temperature;
            std::vector<int> order(static_cast<size_t>(V));
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                return row[static_cast<size_t>(a)] > row[static_cast<size_t>(b)];
            });
            size_t keep = order.size();
            if (decoding.top_k)
                keep = std::min(keep, static_cast<size_t>(*decoding.top_k));
            std::vector<double> probs(keep);
            double m = row[static_cast<size_t>(order[0])], z = 0.0;
            for (size_t i = 0; i < keep; ++i) {
                probs[i] = std::exp(row[static_cast<size_t>(order[i])] - m);
                z += probs[i];
            }
            for (auto& p : probs) p /= z;
            if (decoding.top_p && *decoding.top_p < 1.0) {
                double cum = 0.0;
                size_t cut = keep;
                for (size_t i = 0; i < keep; ++i) {
                    cum += probs[i];
                    if (cum >= *decoding.top_p) {
                        cut = i + 1;
                        break;
                    }
                }
                keep = cut;
                double z2 = 0.0;
                for (size_t i = 0; i < keep; ++i) z2 += probs[i];
                for (size_t i = 0; i < keep; ++i) probs[i] /= z2;
            }
            double u = rng.uniform();
            double cum = 0.0;
            size_t pick = keep - 1;
            for (size_t i = 0; i < keep; ++i) {
                cum += probs[i];
                if (u < cum) {
                    pick = i;
                    break;
                }
            }
            next = order[pick];
        }
        tokens.push_back(next);
        out.push_back(CharTokenizer::decode_token(next));
    }
    return GenerateResult{out};
}

ChoiceDistribution ToyBackend::choice_scores(const std::string& prompt,
                                             const std::vector<std::string>& labels) {
    if (labels.empty()) throw contract_error("choice_scores: no labels");
    std::vector<double> mean_lp(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        auto lps = token_logprobs(prompt, labels[i]);
        double s = std::accumulate(lps.begin(), lps.end(), 0.0);
        mean_lp[i] = s / static_cast<double>(lps.size());
    }
    double m = *std::max_element(mean_lp.begin(), mean_lp.end());
    double z = 0.0;
    ChoiceDistribution dist;
    std::vector<double> e(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        e[i] = std::exp(mean_lp[i] - m);
        z += e[i];
    }
    for (size_t i = 0; i < labels.size(); ++i) dist.probs[labels[i]] = e[i] / z;
    dist.validate();
    return dist;
}

std::vector<double> ToyBackend::token_logprobs(const std::string& prompt,
                                               const std::string& target) {
    if (target.empty()) throw contract_error("token_logprobs: empty target");
    std::vector<int> ctx = CharTokenizer::encode(prompt);
    if (ctx.empty()) ctx.push_back(CharTokenizer::kPadToken);
    std::vector<int> tgt = CharTokenizer::encode(target);
    std::vector<int> seq = ctx;
    seq.insert(seq.end(), tgt.begin(), tgt.end());
    size_t dropped = 0;
    if (seq.size() > static_cast<size_t>(config_.max_seq))
        dropped = seq.size() - static_cast<size_t>(config_.max_seq);
    if (dropped >= ctx.size())
        throw contract_error("token_logprobs: target too long for context window");
    Matrix lg = logits(seq);
    size_t first_tgt = ctx.size() - dropped;

    std::vector<double> out;
    out.reserve(tgt.size());
    for (size_t i = 0; i < tgt.size(); ++i) {
        const double* row = lg.row(first_tgt + i - 1);
        double m = row[0];
        for (int j = 1; j < config_.vocab_size; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (int j = 0; j < config_.vocab_size; ++j) z += std::exp(row[j] - m);
        out.push_back(row[tgt[i]] - m - std::log(z));
    }
    return out;
}

void ToyBackend::check_delta(const ParamDelta& delta) const {
    if (delta.base_fingerprint != fingerprint())
        throw contract_error("delta base fingerprint " + delta.base_fingerprint +
                             " does not match backend " + fingerprint());
    for (const auto& [name, m] : delta.entries) {
        auto it = params_.find(name);
        if (it == params_.end()) throw contract_error("delta names unknown parameter: " + name);
        if (!it->second.same_shape(m))
            throw contract_error("delta shape mismatch for parameter: " + name);
    }
}

std::shared_ptr<Backend> ToyBackend::apply_delta(const ParamDelta& delta) {
    check_delta(delta);
    ParamMap updated = params_;
    for (const auto& [name, m] : delta.entries) axpy(1.0, m, updated.at(name));
    return std::make_shared<ToyBackend>(config_, std::move(updated));
}

SnapshotToken ToyBackend::snapshot() {
    SnapshotToken token = next_token_++;
    snapshots_[token] = params_;
    return token;
}

void ToyBackend::restore(SnapshotToken token) {
    auto it = snapshots_.find(token);
    if (it == snapshots_.end()) throw contract_error("restore: unknown snapshot token");
    params_ = it->second;
}

void ToyBackend::apply_delta_inplace(const ParamDelta& delta) {
    check_delta(delta);
    for (const auto& [name, m] : delta.entries) axpy(1.0, m, params_.at(name));
}

} // namespace faithmate
