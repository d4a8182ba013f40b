#pragma once

#include <optional>
#include <string>
#include <vector>

#include "faithmate/backend.hpp"
#include "faithmate/parametric.hpp"
#include "faithmate/prefopt.hpp"
#include "faithmate/types.hpp"

namespace faithmate {

// One declarative config file drives every subcommand. Defaults follow the
// shipped generation / adapter / training / unlearning configurations.
struct Config {
    // data
    std::string dataset_path;
    std::string dataset_format = "generic";
    std::string out_dir = "out";

    // models. Backend specs:
    //   toy:random:<seed>            random-init reference model
    //   toy:pretrained:<seed>:<steps> reference model pretrained on a synthetic
    //                                 answer-copy corpus (seeded, deterministic)
    //   wire:<argv...>               out-of-process backend over the NDJSON protocol
    std::string subject_backend = "toy:random:1234";
    std::string helper_backend;               // empty => reuse subject
    std::string prompt_template;              // empty => built-in default
    std::string helper_template_dir;          // empty => built-in templates

    // sampling (CoT generation configuration)
    DecodingConfig decoding;      // temperature 1.2, top-k 50, top-p 0.95
    int samples_per_instance = 40; // m
    int min_content_tokens = 3;

    // evaluation decoding is always greedy.
    int eval_max_new_tokens = 64;

    // ccshap
    int ccshap_n_samples = 256;
    int ccshap_max_exact_tokens = 12;

    AdapterConfig adapter; // r=64, alpha=128, dropout 0.1
    TrainConfig train;     // batch 2, accum 4, lr 5e-6, 5 epochs, cosine, beta 0.1
    UnlearnConfig unlearn; // beta 0.1, npo 1.0, kl 1.0, 5 epochs

    uint64_t seed = 0;
    int jobs = 0; // 0 => library default

    // merging defaults: uniform weights, lambda 1 (CLI-overridable)
    double merge_lambda = 1.0;

    std::string model_tag = "toy";
    std::string dataset_tag = "synthetic";
};

Config load_config(const std::string& path);
Config config_from_json(const json& j);
json config_to_json(const Config& c);

// key=value dotted-path override, e.g. "train.learning_rate=1e-4".
void apply_override(Config& c, const std::string& keyval);

// Instantiates a backend from a spec string. Toy backends are fully
// deterministic given the spec.
BackendPtr make_backend(const std::string& spec);

// Deterministic SFT pretraining of the toy model on a synthetic corpus that
// teaches the answer-copy pattern ("... answer: x ... Answer: x").
std::shared_ptr<class ToyBackend> make_pretrained_toy(uint64_t seed, int steps);

} // namespace faithmate
