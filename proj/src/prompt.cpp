#include "faithmate/prompt.hpp"

#include <cctype>

#include "faithmate/error.hpp"
#include "faithmate/text.hpp"

namespace faithmate {

const char* kDefaultCotTemplate =
    "{context}{fact}Question: {question}\n{choices}\n"
    "Think step by step, then end with \"Answer: <letter>\".\n";

const char* kAnswerScaffold = "\nAnswer: ";

namespace {

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

bool ieq(const std::string& a, const std::string& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(a[i])) !=
            std::tolower(static_cast<unsigned char>(b[i])))
            return false;
    return true;
}

// Scans for "answer" markers and returns (marker start, matched label) of the
// last one whose trailing word is a known label.
std::optional<std::pair<size_t, std::string>> find_answer_marker(
    const std::string& text, const std::vector<std::string>& labels) {
    std::string low = to_lower(text);
    std::optional<std::pair<size_t, std::string>> best;
    size_t pos = 0;
    while ((pos = low.find("answer", pos)) != std::string::npos) {
        size_t p = pos + 6;
        while (p < low.size() && low[p] == ' ') ++p;
        if (low.compare(p, 2, "is") == 0) {
            p += 2;
            while (p < low.size() && low[p] == ' ') ++p;
        }
        if (p < low.size() && low[p] == ':') {
            ++p;
            while (p < low.size() && low[p] == ' ') ++p;
        }
        size_t end = p;
        while (end < text.size() &&
               std::isalnum(static_cast<unsigned char>(text[end])))
            ++end;
        if (end > p) {
            std::string word = text.substr(p, end - p);
            for (const auto& label : labels)
                if (ieq(word, label)) best = {pos, label};
        }
        pos += 6;
    }
    return best;
}

} // namespace

std::string render_cot_prompt(const Instance& instance, const std::string& tmpl) {
    std::string out = tmpl;
    std::string choices;
    for (const auto& c : instance.choices) {
        if (!choices.empty()) choices += "\n";
        choices += c.label + ". " + c.text;
    }
    replace_all(out, "{question}", instance.question);
    replace_all(out, "{choices}", choices);
    replace_all(out, "{context}",
                instance.context ? "Context: " + *instance.context + "\n" : "");
    replace_all(out, "{fact}", instance.fact ? "Fact: " + *instance.fact + "\n" : "");
    return out;
}

std::string scoring_context(const std::string& cot_prompt, const std::string& cot_text) {
    return cot_prompt + cot_text + kAnswerScaffold;
}

std::optional<std::string> parse_predicted_label(const std::string& completion,
                                                 const std::vector<std::string>& labels) {
    auto marker = find_answer_marker(completion, labels);
    if (!marker) return std::nullopt;
    return marker->second;
}

ParsedCompletion split_completion(const std::string& completion,
                                  const std::vector<std::string>& labels) {
    ParsedCompletion parsed;
    auto marker = find_answer_marker(completion, labels);
    if (!marker) {
        parsed.reasoning = completion;
        return parsed;
    }
    std::string head = completion.substr(0, marker->first);
    while (!head.empty() && (head.back() == ' ' || head.back() == '\n' || head.back() == '\t'))
        head.pop_back();
    parsed.reasoning = head;
    parsed.label = marker->second;
    return parsed;
}

CoTSample generate_cot(Backend& handle, const Instance& instance, const std::string& tmpl,
                       const DecodingConfig& decoding, int sample_index, uint64_t seed,
                       bool force_answer_tail, int min_content_tokens) {
    std::string prompt = render_cot_prompt(instance, tmpl);
    std::string completion = handle.generate(prompt, decoding, seed).text;
    auto labels = instance.labels();
    ParsedCompletion parsed = split_completion(completion, labels);

    CoTSample sample;
    sample.instance_id = instance.id;
    sample.decoding = decoding;
    sample.sample_index = sample_index;
    sample.text = parsed.label ? parsed.reasoning : completion;
    if (trim(sample.text).empty()) sample.text = completion;

    if (parsed.label) {
        sample.predicted_label = parsed.label;
    } else if (force_answer_tail) {
        // constrained answer emission over the instance's labels
        auto dist = choice_scores(handle, instance, tmpl, sample.text);
        sample.predicted_label = dist.argmax();
    }

    if (trim(sample.text).empty()) {
        sample.steps = {sample.text};
        sample.separators = {""};
    } else {
        Segmentation seg = segment_steps(sample.text, min_content_tokens);
        sample.steps = std::move(seg.steps);
        sample.separators = std::move(seg.separators);
    }
    return sample;
}

ChoiceDistribution choice_scores(Backend& handle, const Instance& instance,
                                 const std::string& tmpl,
                                 const std::optional<std::string>& cot) {
    std::string prompt = render_cot_prompt(instance, tmpl);
    std::string ctx = scoring_context(prompt, cot.value_or(""));
    return handle.choice_scores(ctx, instance.labels());
}

} // namespace faithmate
