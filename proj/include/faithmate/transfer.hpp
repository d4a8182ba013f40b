#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "faithmate/backend.hpp"
#include "faithmate/types.hpp"

namespace faithmate {

struct TransferDelta {
    std::string source_metric; // f_i, the optimization target
    std::string eval_metric;   // f_j
    std::string model_tag;
    std::string paradigm; // "sft" | "dpo"
    std::string dataset_tag;
    double delta = 0.0; // in [-2, 2]
    int coverage = 0;   // instances in the intersection
    bool coverage_warning = false;
};

// delta = mean(optimized values) - mean(base values), computed over the
// instance intersection (with a warning on coverage mismatch).
TransferDelta transfer_delta(const std::vector<MetricScore>& base_scores,
                             const std::vector<MetricScore>& opt_scores);

struct TransferCell {
    int positive = 0;
    int total = 0;
    double mean_delta = 0.0;
};

// Per-group "#positive/total, mean" aggregation. `group_by` picks the key
// fields (source_metric, eval_metric, dataset_tag, model_tag, paradigm).
std::map<std::string, TransferCell> aggregate_transfer(const std::vector<TransferDelta>& deltas,
                                                       const std::vector<std::string>& group_by);

std::string format_cell(const TransferCell& cell);

// r_cp = |para ∩ cont| / |cont|; proportion of parametric-preferred CoTs
// that the contextual pair set also selected.
double overlap_ratio(const std::set<std::string>& pairs_para,
                     const std::set<std::string>& pairs_cont);

struct MergeComponent {
    TaskVector vector;
    double weight = 1.0;
};

struct MergeSpec {
    std::vector<MergeComponent> components;
    double lambda = 1.0;

    void validate() const; // shared base fingerprint, finite weights
};

// tau = theta_ft - theta_base, elementwise over named entries.
TaskVector make_task_vector(const ParamMap& theta_ft, const ParamMap& theta_base,
                            const std::string& base_fingerprint);

// tau_com = lambda * sum(w_i * tau_i) over the union of entry names; missing
// entries are zero, shape conflicts on shared names are errors.
TaskVector combine(const MergeSpec& spec);

struct SimilarityMatrix {
    std::vector<std::vector<double>> values;
    std::vector<bool> undefined; // per-vector zero-norm flag
};

// Pairwise cosines of flattened task vectors in a fixed name order.
SimilarityMatrix similarity_matrix(const std::vector<TaskVector>& vectors);

struct PcaResult {
    std::vector<std::vector<double>> coordinates; // one k-vector per input
    std::vector<double> component_variance;       // top-k eigenvalues
    double residual_variance = 0.0;
};

// Exact eigendecomposition of the n x n Gram matrix of the mean-centered
// flattened vectors (n is small).
PcaResult pca_project(const std::vector<TaskVector>& vectors, int k = 3);

std::vector<double> flatten_task_vector(const TaskVector& v,
                                        const std::vector<std::string>& name_order);
std::vector<std::string> union_name_order(const std::vector<TaskVector>& vectors);

} // namespace faithmate
