#include "faithmate/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "faithmate/error.hpp"
#include "faithmate/toy_backend.hpp"
#include "faithmate/wire.hpp"

namespace faithmate {

json config_to_json(const Config& c) {
    json j;
    j["dataset"] = {{"path", c.dataset_path}, {"format", c.dataset_format}};
    j["out_dir"] = c.out_dir;
    j["backends"] = {{"subject", c.subject_backend}, {"helper", c.helper_backend}};
    j["prompt_template"] = c.prompt_template;
    j["helper_template_dir"] = c.helper_template_dir;
    j["sampling"] = {{"decoding", to_json(c.decoding)},
                     {"samples_per_instance", c.samples_per_instance},
                     {"min_content_tokens", c.min_content_tokens}};
    j["eval"] = {{"max_new_tokens", c.eval_max_new_tokens}};
    j["ccshap"] = {{"n_samples", c.ccshap_n_samples},
                   {"max_exact_tokens", c.ccshap_max_exact_tokens}};
    j["adapter"] = {{"rank", c.adapter.rank},
                    {"alpha", c.adapter.alpha},
                    {"dropout", c.adapter.dropout},
                    {"target_modules", c.adapter.target_module_names},
                    {"bias", c.adapter.bias_mode}};
    j["train"] = {{"batch_size", c.train.batch_size},
                  {"grad_accum_steps", c.train.grad_accum_steps},
                  {"learning_rate", c.train.learning_rate},
                  {"epochs", c.train.epochs},
                  {"schedule", c.train.schedule},
                  {"warmup_ratio", c.train.warmup_ratio},
                  {"max_grad_norm", c.train.max_grad_norm},
                  {"dpo_beta", c.train.dpo_beta},
                  {"seed", c.train.seed}};
    if (c.train.max_steps) j["train"]["max_steps"] = *c.train.max_steps;
    j["unlearn"] = {{"beta", c.unlearn.beta},
                    {"npo_coeff", c.unlearn.npo_coeff},
                    {"kl_coeff", c.unlearn.kl_coeff},
                    {"ref_policy", c.unlearn.ref_policy},
                    {"epochs", c.unlearn.epochs},
                    {"warmup", c.unlearn.warmup},
                    {"learning_rate", c.unlearn.learning_rate},
                    {"retain_set_size", c.unlearn.retain_set_size},
                    {"min_content_tokens", c.unlearn.min_content_tokens},
                    {"seed", c.unlearn.seed}};
    j["seed"] = c.seed;
    j["jobs"] = c.jobs;
    j["merge_lambda"] = c.merge_lambda;
    j["model_tag"] = c.model_tag;
    j["dataset_tag"] = c.dataset_tag;
    return j;
}

Config config_from_json(const json& j) {
    Config c;
    if (j.contains("dataset")) {
        const json& d = j["dataset"];
        c.dataset_path = d.value("path", c.dataset_path);
        c.dataset_format = d.value("format", c.dataset_format);
    }
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("backends")) {
        const json& b = j["backends"];
        c.subject_backend = b.value("subject", c.subject_backend);
        c.helper_backend = b.value("helper", c.helper_backend);
    }
    c.prompt_template = j.value("prompt_template", c.prompt_template);
    c.helper_template_dir = j.value("helper_template_dir", c.helper_template_dir);
    if (j.contains("sampling")) {
        const json& s = j["sampling"];
        if (s.contains("decoding")) c.decoding = decoding_from_json(s["decoding"]);
        c.samples_per_instance = s.value("samples_per_instance", c.samples_per_instance);
        c.min_content_tokens = s.value("min_content_tokens", c.min_content_tokens);
    }
    if (j.contains("eval")) c.eval_max_new_tokens = j["eval"].value("max_new_tokens", c.eval_max_new_tokens);
    if (j.contains("ccshap")) {
        c.ccshap_n_samples = j["ccshap"].value("n_samples", c.ccshap_n_samples);
        c.ccshap_max_exact_tokens = j["ccshap"].value("max_exact_tokens", c.ccshap_max_exact_tokens);
    }
    if (j.contains("adapter")) {
        const json& a = j["adapter"];
        c.adapter.rank = a.value("rank", c.adapter.rank);
        c.adapter.alpha = a.value("alpha", c.adapter.alpha);
        c.adapter.dropout = a.value("dropout", c.adapter.dropout);
        if (a.contains("target_modules"))
            c.adapter.target_module_names = a["target_modules"].get<std::vector<std::string>>();
        c.adapter.bias_mode = a.value("bias", c.adapter.bias_mode);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
        c.train.grad_accum_steps = t.value("grad_accum_steps", c.train.grad_accum_steps);
        c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
        c.train.epochs = t.value("epochs", c.train.epochs);
        c.train.schedule = t.value("schedule", c.train.schedule);
        c.train.warmup_ratio = t.value("warmup_ratio", c.train.warmup_ratio);
        c.train.max_grad_norm = t.value("max_grad_norm", c.train.max_grad_norm);
        c.train.dpo_beta = t.value("dpo_beta", c.train.dpo_beta);
        c.train.seed = t.value("seed", c.train.seed);
        if (t.contains("max_steps") && !t["max_steps"].is_null())
            c.train.max_steps = t["max_steps"].get<int>();
    }
    if (j.contains("unlearn")) {
        const json& u = j["unlearn"];
        c.unlearn.beta = u.value("beta", c.unlearn.beta);
        c.unlearn.npo_coeff = u.value("npo_coeff", c.unlearn.npo_coeff);
        c.unlearn.kl_coeff = u.value("kl_coeff", c.unlearn.kl_coeff);
        c.unlearn.ref_policy = u.value("ref_policy", c.unlearn.ref_policy);
        c.unlearn.epochs = u.value("epochs", c.unlearn.epochs);
        c.unlearn.warmup = u.value("warmup", c.unlearn.warmup);
        c.unlearn.learning_rate = u.value("learning_rate", c.unlearn.learning_rate);
        c.unlearn.retain_set_size = u.value("retain_set_size", c.unlearn.retain_set_size);
        c.unlearn.min_content_tokens = u.value("min_content_tokens", c.unlearn.min_content_tokens);
        c.unlearn.seed = u.value("seed", c.unlearn.seed);
    }
    c.seed = j.value("seed", c.seed);
    c.jobs = j.value("jobs", c.jobs);
    c.merge_lambda = j.value("merge_lambda", c.merge_lambda);
    c.model_tag = j.value("model_tag", c.model_tag);
    c.dataset_tag = j.value("dataset_tag", c.dataset_tag);
    return c;
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw parse_error(path + ": " + e.what());
    }
    return config_from_json(j);
}

void apply_override(Config& c, const std::string& keyval) {
    auto eq = keyval.find('=');
    if (eq == std::string::npos || eq == 0)
        throw validation_error("override must be key.path=value: " + keyval);
    std::string path = keyval.substr(0, eq);
    std::string raw = keyval.substr(eq + 1);

    std::string ptr_str = "/";
    for (char ch : path) ptr_str += ch == '.' ? '/' : ch;
    json::json_pointer ptr(ptr_str);

    json j = config_to_json(c);
    // Require the parent object to exist so typos fail loudly. Leaf keys may
    // be new (optional fields are omitted from the serialized defaults).
    json::json_pointer parent = ptr.parent_pointer();
    if (!parent.empty() && (!j.contains(parent) || !j[parent].is_object()))
        throw validation_error("unknown config path: " + path);

    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw; // bare strings need no quoting
    }
    j[ptr] = value;
    c = config_from_json(j);
}

std::shared_ptr<ToyBackend> make_pretrained_toy(uint64_t seed, int steps) {
    ToyConfig tc;
    tc.init_seed = seed;
    auto model = std::make_shared<ToyBackend>(tc);

    // Synthetic answer-copy corpus: the stated answer letter reappears after
    // the "Answer:" scaffold, so scoring a CoT rewards consistency with it.
    static const char* kWords[] = {"stone", "river", "light", "cold",  "warm",
                                   "green", "metal", "cloud", "sound", "plant",
                                   "glass", "water", "night", "small", "round"};
    constexpr int kNumWords = 15;
    DetRng rng(seed * 0x9e3779b97f4a7c15ULL + 17);
    auto rand_words = [&](int n) {
        std::string out;
        for (int i = 0; i < n; ++i) {
            if (i) out += ' ';
            out += kWords[rng.uniform_int(kNumWords)];
        }
        return out;
    };

    ParamMap m_state, v_state;
    for (const auto& [name, w] : model->params()) {
        m_state.emplace(name, Matrix(w.rows, w.cols));
        v_state.emplace(name, Matrix(w.rows, w.cols));
    }
    const double lr = 3e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    for (int step = 0; step < steps; ++step) {
        char letter = static_cast<char>('a' + rng.uniform_int(4));
        std::string prompt = "question: " + rand_words(3 + rng.uniform_int(3)) + "\n";
        std::string target = std::string("i think the answer is ") + letter + " because " +
                             rand_words(2 + rng.uniform_int(3)) + "\nAnswer: " + letter;
        ParamMap grads;
        double loss = sft_loss_grad(*model, prompt, target, &grads);
        if (!std::isfinite(loss)) throw numeric_error("toy pretraining diverged");

        double bc1 = 1.0 - std::pow(beta1, step + 1);
        double bc2 = 1.0 - std::pow(beta2, step + 1);
        ParamMap next = model->params();
        for (auto& [name, w] : next) {
            auto git = grads.find(name);
            if (git == grads.end()) continue;
            Matrix& m = m_state[name];
            Matrix& v = v_state[name];
            const Matrix& g = git->second;
            for (size_t i = 0; i < w.data.size(); ++i) {
                m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g.data[i];
                v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g.data[i] * g.data[i];
                w.data[i] -= lr * (m.data[i] / bc1) / (std::sqrt(v.data[i] / bc2) + eps);
            }
        }
        model->set_params(std::move(next));
    }
    return model;
}

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    return out;
}

} // namespace

BackendPtr make_backend(const std::string& spec) {
    if (spec.rfind("toy", 0) == 0) {
        std::vector<std::string> parts = split_on(spec, ':');
        std::string kind = parts.size() > 1 ? parts[1] : "random";
        try {
            if (kind == "random") {
                ToyConfig tc;
                if (parts.size() > 2) tc.init_seed = std::stoull(parts[2]);
                return std::make_shared<ToyBackend>(tc);
            }
            if (kind == "pretrained") {
                uint64_t seed = parts.size() > 2 ? std::stoull(parts[2]) : 1234;
                int steps = parts.size() > 3 ? std::stoi(parts[3]) : 400;
                return make_pretrained_toy(seed, steps);
            }
        } catch (const std::logic_error&) {
            throw validation_error("malformed toy backend spec: " + spec);
        }
        throw validation_error("unknown toy backend kind: " + spec);
    }
    if (spec.rfind("wire:", 0) == 0) {
        std::vector<std::string> argv;
        std::istringstream in(spec.substr(5));
        std::string word;
        while (in >> word) argv.push_back(word);
        if (argv.empty()) throw validation_error("wire backend spec has no command: " + spec);
        return std::make_shared<WireClientBackend>(argv);
    }
    throw validation_error("unknown backend spec: " + spec);
}

} // namespace faithmate
