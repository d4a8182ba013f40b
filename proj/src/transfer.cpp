#include "faithmate/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "faithmate/error.hpp"

namespace faithmate {

TransferDelta transfer_delta(const std::vector<MetricScore>& base_scores,
                             const std::vector<MetricScore>& opt_scores) {
    if (base_scores.empty() || opt_scores.empty())
        throw contract_error("transfer_delta: empty score list");
    MetricId metric = base_scores.front().metric_id;
    for (const auto& s : base_scores)
        if (s.metric_id != metric) throw contract_error("transfer_delta: mixed metrics (base)");
    for (const auto& s : opt_scores)
        if (s.metric_id != metric)
            throw contract_error("transfer_delta: eval metric differs between score lists");

    std::set<std::string> base_ids, opt_ids;
    for (const auto& s : base_scores) base_ids.insert(s.instance_id);
    for (const auto& s : opt_scores) opt_ids.insert(s.instance_id);
    std::set<std::string> common;
    std::set_intersection(base_ids.begin(), base_ids.end(), opt_ids.begin(), opt_ids.end(),
                          std::inserter(common, common.begin()));
    if (common.empty()) throw contract_error("transfer_delta: no shared instances");

    auto mean_over = [&](const std::vector<MetricScore>& scores) {
        double sum = 0.0;
        size_t n = 0;
        for (const auto& s : scores) {
            if (!common.count(s.instance_id)) continue;
            sum += s.value;
            ++n;
        }
        return sum / static_cast<double>(n);
    };

    TransferDelta d;
    d.eval_metric = metric_name(metric);
    d.delta = mean_over(opt_scores) - mean_over(base_scores);
    d.coverage = static_cast<int>(common.size());
    d.coverage_warning = common.size() != base_ids.size() || common.size() != opt_ids.size();
    return d;
}

namespace {

std::string field_of(const TransferDelta& d, const std::string& key) {
    if (key == "source_metric") return d.source_metric;
    if (key == "eval_metric") return d.eval_metric;
    if (key == "model_tag") return d.model_tag;
    if (key == "paradigm") return d.paradigm;
    if (key == "dataset_tag") return d.dataset_tag;
    throw validation_error("unknown group_by key: " + key);
}

} // namespace

std::map<std::string, TransferCell> aggregate_transfer(const std::vector<TransferDelta>& deltas,
                                                       const std::vector<std::string>& group_by) {
    if (group_by.empty()) throw validation_error("aggregate_transfer: empty group_by");
    std::map<std::string, TransferCell> table;
    for (const auto& d : deltas) {
        std::string key;
        for (const auto& k : group_by) {
            if (!key.empty()) key += "|";
            key += field_of(d, k);
        }
        TransferCell& cell = table[key];
        cell.total += 1;
        if (d.delta > 0.0) cell.positive += 1;
        cell.mean_delta += d.delta;
    }
    for (auto& [key, cell] : table) cell.mean_delta /= cell.total;
    return table;
}

std::string format_cell(const TransferCell& cell) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%+.4f", cell.mean_delta);
    std::string mean = buf;
    if (mean == "+0.0000" || mean == "-0.0000") mean = "0.0000";
    return std::to_string(cell.positive) + "/" + std::to_string(cell.total) + ", " + mean;
}

double overlap_ratio(const std::set<std::string>& pairs_para,
                     const std::set<std::string>& pairs_cont) {
    if (pairs_cont.empty()) throw contract_error("overlap_ratio: empty denominator set");
    size_t inter = 0;
    for (const auto& id : pairs_para)
        if (pairs_cont.count(id)) ++inter;
    return static_cast<double>(inter) / static_cast<double>(pairs_cont.size());
}

void MergeSpec::validate() const {
    if (components.empty()) throw validation_error("merge: no components");
    if (!std::isfinite(lambda)) throw validation_error("merge: non-finite lambda");
    const std::string& fp = components.front().vector.base_fingerprint;
    for (const auto& c : components) {
        if (!std::isfinite(c.weight)) throw validation_error("merge: non-finite weight");
        if (c.vector.base_fingerprint != fp)
            throw contract_error("merge: components disagree on the base fingerprint");
    }
}

TaskVector make_task_vector(const ParamMap& theta_ft, const ParamMap& theta_base,
                            const std::string& base_fingerprint) {
    if (theta_ft.size() != theta_base.size())
        throw contract_error("task vector: parameter name sets differ");
    TaskVector tau;
    tau.base_fingerprint = base_fingerprint;
    for (const auto& [name, ft] : theta_ft) {
        auto it = theta_base.find(name);
        if (it == theta_base.end())
            throw contract_error("task vector: base lacks parameter " + name);
        if (!ft.same_shape(it->second))
            throw contract_error("task vector: shape mismatch for " + name);
        Matrix d = ft;
        axpy(-1.0, it->second, d);
        tau.entries[name] = std::move(d);
    }
    return tau;
}

TaskVector combine(const MergeSpec& spec) {
    spec.validate();
    TaskVector out;
    out.base_fingerprint = spec.components.front().vector.base_fingerprint;
    for (const auto& c : spec.components) {
        for (const auto& [name, m] : c.vector.entries) {
            auto it = out.entries.find(name);
            if (it == out.entries.end()) {
                Matrix scaled = m;
                scale(scaled, spec.lambda * c.weight);
                out.entries[name] = std::move(scaled);
            } else {
                if (!it->second.same_shape(m))
                    throw contract_error("merge: shape conflict on entry " + name);
                axpy(spec.lambda * c.weight, m, it->second);
            }
        }
    }
    return out;
}

std::vector<std::string> union_name_order(const std::vector<TaskVector>& vectors) {
    std::map<std::string, std::pair<size_t, size_t>> shapes;
    for (const auto& v : vectors) {
        for (const auto& [name, m] : v.entries) {
            auto it = shapes.find(name);
            if (it == shapes.end()) shapes[name] = {m.rows, m.cols};
            else if (it->second != std::make_pair(m.rows, m.cols))
                throw contract_error("flatten: shape conflict on entry " + name);
        }
    }
    std::vector<std::string> order;
    for (const auto& [name, shape] : shapes) order.push_back(name);
    return order;
}

std::vector<double> flatten_task_vector(const TaskVector& v,
                                        const std::vector<std::string>& name_order) {
    std::vector<double> out;
    for (const auto& name : name_order) {
        auto it = v.entries.find(name);
        if (it == v.entries.end())
            throw contract_error("flatten: vector lacks entry " + name);
        out.insert(out.end(), it->second.data.begin(), it->second.data.end());
    }
    return out;
}

SimilarityMatrix similarity_matrix(const std::vector<TaskVector>& vectors) {
    if (vectors.empty()) throw contract_error("similarity_matrix: no vectors");
    const std::string& fp = vectors.front().base_fingerprint;
    for (const auto& v : vectors)
        if (v.base_fingerprint != fp)
            throw contract_error("similarity_matrix: mixed base fingerprints");
    auto order = union_name_order(vectors);
    // flatten against the union: absent entries contribute zero blocks
    std::map<std::string, size_t> sizes;
    for (const auto& v : vectors)
        for (const auto& [name, m] : v.entries) sizes[name] = m.size();
    std::vector<std::vector<double>> flat;
    for (const auto& v : vectors) {
        std::vector<double> row;
        for (const auto& name : order) {
            auto it = v.entries.find(name);
            if (it != v.entries.end())
                row.insert(row.end(), it->second.data.begin(), it->second.data.end());
            else
                row.insert(row.end(), sizes.at(name), 0.0);
        }
        flat.push_back(std::move(row));
    }

    const size_t n = flat.size();
    SimilarityMatrix sim;
    sim.values.assign(n, std::vector<double>(n, 0.0));
    sim.undefined.assign(n, false);
    std::vector<double> norms(n);
    for (size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (double x : flat[i]) s += x * x;
        norms[i] = std::sqrt(s);
        if (norms[i] == 0.0) sim.undefined[i] = true;
    }
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            if (sim.undefined[i] || sim.undefined[j]) continue;
            double d = 0.0;
            for (size_t k = 0; k < flat[i].size(); ++k) d += flat[i][k] * flat[j][k];
            sim.values[i][j] = std::clamp(d / (norms[i] * norms[j]), -1.0, 1.0);
        }
    }
    return sim;
}

namespace {

// cyclic Jacobi eigendecomposition of a symmetric matrix; returns eigenvalues
// in `a`'s diagonal and accumulates rotations into `v`
void jacobi_eigen(std::vector<std::vector<double>>& a, std::vector<std::vector<double>>& v) {
    const size_t n = a.size();
    v.assign(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i) v[i][i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (size_t p = 0; p < n; ++p)
            for (size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-30) break;
        for (size_t p = 0; p < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (size_t k = 0; k < n; ++k) {
                    double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (size_t k = 0; k < n; ++k) {
                    double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (size_t k = 0; k < n; ++k) {
                    double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
}

} // namespace

PcaResult pca_project(const std::vector<TaskVector>& vectors, int k) {
    if (vectors.size() < 2) throw contract_error("pca_project: need at least two vectors");
    if (k <= 0) throw validation_error("pca_project: k must be positive");
    auto order = union_name_order(vectors);
    std::vector<std::vector<double>> flat;
    std::map<std::string, size_t> sizes;
    for (const auto& v : vectors)
        for (const auto& [name, m] : v.entries) sizes[name] = m.size();
    for (const auto& v : vectors) {
        std::vector<double> row;
        for (const auto& name : order) {
            auto it = v.entries.find(name);
            if (it != v.entries.end())
                row.insert(row.end(), it->second.data.begin(), it->second.data.end());
            else
                row.insert(row.end(), sizes.at(name), 0.0);
        }
        flat.push_back(std::move(row));
    }
    const size_t n = flat.size();
    const size_t dim = flat.front().size();
    for (size_t j = 0; j < dim; ++j) {
        double mean = 0.0;
        for (size_t i = 0; i < n; ++i) mean += flat[i][j];
        mean /= static_cast<double>(n);
        for (size_t i = 0; i < n; ++i) flat[i][j] -= mean;
    }

    std::vector<std::vector<double>> gram(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i; j < n; ++j) {
            double s = 0.0;
            for (size_t d = 0; d < dim; ++d) s += flat[i][d] * flat[j][d];
            gram[i][j] = gram[j][i] = s;
        }
    }
    std::vector<std::vector<double>> evecs;
    jacobi_eigen(gram, evecs);
    std::vector<std::pair<double, size_t>> eig;
    for (size_t i = 0; i < n; ++i) eig.push_back({gram[i][i], i});
    std::sort(eig.begin(), eig.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

    PcaResult result;
    result.coordinates.assign(n, std::vector<double>(static_cast<size_t>(k), 0.0));
    for (int c = 0; c < k && c < static_cast<int>(n); ++c) {
        double lambda = std::max(0.0, eig[static_cast<size_t>(c)].first);
        size_t col = eig[static_cast<size_t>(c)].second;
        double sigma = std::sqrt(lambda);
        for (size_t i = 0; i < n; ++i)
            result.coordinates[i][static_cast<size_t>(c)] = evecs[i][col] * sigma;
        result.component_variance.push_back(lambda);
    }
    for (size_t c = static_cast<size_t>(k); c < n; ++c)
        result.residual_variance += std::max(0.0, eig[c].first);
    return result;
}

} // namespace faithmate
