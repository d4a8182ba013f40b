#include "faithmate/dataset.hpp"

#include <fstream>

#include "faithmate/error.hpp"
#include "faithmate/text.hpp"

namespace faithmate {

namespace {

// OpenbookQA raw lines use question/choices/answerKey/fact1; LogiQA raw lines
// use text/question/options/answer index. The generic hint expects the
// Instance schema directly.
Instance from_openbookqa(const json& j, size_t line_no) {
    Instance x;
    x.id = j.contains("id") ? j["id"].get<std::string>() : "obqa-" + std::to_string(line_no);
    if (j.contains("question") && j["question"].is_object()) {
        x.question = j["question"].at("stem").get<std::string>();
        for (const auto& c : j["question"].at("choices"))
            x.choices.push_back({c.at("label").get<std::string>(), c.at("text").get<std::string>()});
    } else {
        x.question = j.at("question").get<std::string>();
        for (const auto& c : j.at("choices")) x.choices.push_back(choice_from_json(c));
    }
    x.answer_key = j.contains("answerKey") ? j["answerKey"].get<std::string>()
                                           : j.at("answer_key").get<std::string>();
    if (j.contains("fact1")) x.fact = j["fact1"].get<std::string>();
    else if (j.contains("fact") && !j["fact"].is_null()) x.fact = j["fact"].get<std::string>();
    return x;
}

Instance from_logiqa(const json& j, size_t line_no) {
    Instance x;
    x.id = j.contains("id") ? j["id"].get<std::string>() : "logiqa-" + std::to_string(line_no);
    x.question = j.at("question").get<std::string>();
    if (j.contains("text")) x.context = j["text"].get<std::string>();
    else if (j.contains("context") && !j["context"].is_null())
        x.context = j["context"].get<std::string>();
    if (j.contains("options")) {
        const auto& opts = j["options"];
        for (size_t i = 0; i < opts.size(); ++i) {
            std::string label(1, static_cast<char>('A' + i));
            x.choices.push_back({label, opts[i].get<std::string>()});
        }
    } else {
        for (const auto& c : j.at("choices")) x.choices.push_back(choice_from_json(c));
    }
    if (j.contains("answer") && j["answer"].is_number()) {
        int idx = j["answer"].get<int>();
        if (idx < 0 || idx >= static_cast<int>(x.choices.size()))
            throw validation_error("logiqa line " + std::to_string(line_no) +
                                   ": answer index out of range");
        x.answer_key = x.choices[static_cast<size_t>(idx)].label;
    } else {
        x.answer_key = j.contains("answerKey") ? j["answerKey"].get<std::string>()
                                               : j.at("answer_key").get<std::string>();
    }
    return x;
}

} // namespace

DatasetFormat dataset_format_from_name(const std::string& name) {
    if (name == "openbookqa") return DatasetFormat::openbookqa;
    if (name == "logiqa") return DatasetFormat::logiqa;
    if (name == "generic") return DatasetFormat::generic;
    throw validation_error("unknown dataset format: " + name);
}

std::vector<Instance> load_dataset(const std::string& path, DatasetFormat format_hint) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open dataset file: " + path);

    std::vector<Instance> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw parse_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        Instance x;
        try {
            switch (format_hint) {
                case DatasetFormat::openbookqa: x = from_openbookqa(j, line_no); break;
                case DatasetFormat::logiqa: x = from_logiqa(j, line_no); break;
                case DatasetFormat::generic: x = instance_from_json(j); break;
            }
            x.validate();
        } catch (const json::exception& e) {
            throw validation_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw validation_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        out.push_back(std::move(x));
    }
    return out;
}

} // namespace faithmate
