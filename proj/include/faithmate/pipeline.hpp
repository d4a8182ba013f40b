#pragma once

#include <string>
#include <vector>

#include "faithmate/config.hpp"
#include "faithmate/transfer.hpp"

namespace faithmate {

// Subcommand entry points shared by the CLI and the acceptance suite. Each
// writes its artifacts plus a run manifest under cfg.out_dir and returns 0 on
// success.

// instances -> cots.jsonl (m samples per instance; flagged samples counted)
int cmd_sample(const Config& cfg);

// cots + metric -> scores.<metric>.jsonl
int cmd_score(const Config& cfg, const std::string& metric,
              const std::string& cots_path = "", const std::string& out_path = "",
              const std::string& backend_override = "");

// scores -> pairs.sft.jsonl + pairs.dpo.jsonl (refuses ccshap)
int cmd_pairs(const Config& cfg, const std::string& metric);

// pairs -> adapter delta (.fmpd) + adapter manifest + training log
int cmd_train(const Config& cfg, const std::string& mode, const std::string& metric);

// two score files -> transfer delta record
int cmd_transfer(const Config& cfg, const std::string& base_scores,
                 const std::string& opt_scores, const std::string& out_path);

// adapter deltas -> merged task vector
int cmd_merge(const Config& cfg, const std::vector<std::string>& delta_paths,
              const std::vector<double>& weights, double lambda, const std::string& out_path);

// task-vector cosine similarity matrix + PCA projection + pair overlap
int cmd_analyze(const Config& cfg, const std::vector<std::string>& delta_paths,
                const std::string& out_path);

// greedy task accuracy over the dataset
int cmd_accuracy(const Config& cfg, const std::string& backend_override = "");

// published-number fixture -> aggregated transfer table (Markdown + CSV)
int cmd_report(const Config& cfg, const std::string& fixture_path);

// Aggregation used by cmd_report and the fixture regression test: cells keyed
// "<source>-><eval>" over (model x paradigm) deltas per dataset.
std::map<std::string, TransferCell> aggregate_fixture(const json& fixture,
                                                      const std::string& dataset);

} // namespace faithmate
