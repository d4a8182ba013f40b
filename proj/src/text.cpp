#include "faithmate/text.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "faithmate/error.hpp"

namespace faithmate {

namespace {

// Fixed shipped stopword list; "content-bearing" excludes these, punctuation,
// and pure digits.
const std::set<std::string>& stopwords() {
    static const std::set<std::string> kStopwords = {
        "a", "about", "above", "after", "again", "against", "all", "am", "an", "and",
        "any", "are", "as", "at", "be", "because", "been", "before", "being", "below",
        "between", "both", "but", "by", "can", "cannot", "could", "did", "do", "does",
        "doing", "down", "during", "each", "few", "for", "from", "further", "had",
        "has", "have", "having", "he", "her", "here", "hers", "herself", "him",
        "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself",
        "just", "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of",
        "off", "on", "once", "only", "or", "other", "our", "ours", "ourselves", "out",
        "over", "own", "s", "same", "she", "should", "so", "some", "such", "t", "than",
        "that", "the", "their", "theirs", "them", "themselves", "then", "there",
        "these", "they", "this", "those", "through", "to", "too", "under", "until",
        "up", "very", "was", "we", "were", "what", "when", "where", "which", "while",
        "who", "whom", "why", "will", "with", "would", "you", "your", "yours",
        "yourself", "yourselves",
    };
    return kStopwords;
}

bool is_sentence_end(char c) { return c == '.' || c == '!' || c == '?'; }

std::string strip_punct(const std::string& w) {
    size_t b = 0, e = w.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(w[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(w[e - 1]))) --e;
    return w.substr(b, e - b);
}

bool all_digits(const std::string& w) {
    return !w.empty() &&
           std::all_of(w.begin(), w.end(),
                       [](unsigned char c) { return std::isdigit(c); });
}

struct Fragment {
    std::string text;
    std::string sep;
};

std::vector<Fragment> split_fragments(const std::string& text) {
    std::vector<Fragment> frags;
    std::string cur;
    size_t i = 0;
    auto consume_ws = [&](size_t from) {
        size_t j = from;
        while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        return j;
    };
    while (i < text.size()) {
        char c = text[i];
        if (c == '\n') {
            size_t j = consume_ws(i);
            frags.push_back({cur, text.substr(i, j - i)});
            cur.clear();
            i = j;
        } else if (is_sentence_end(c) && i + 1 < text.size() &&
                   std::isspace(static_cast<unsigned char>(text[i + 1]))) {
            cur.push_back(c);
            size_t j = consume_ws(i + 1);
            frags.push_back({cur, text.substr(i + 1, j - i - 1)});
            cur.clear();
            i = j;
        } else {
            cur.push_back(c);
            ++i;
        }
    }
    if (!cur.empty() || frags.empty()) frags.push_back({cur, ""});
    // An empty trailing fragment just extends the previous separator.
    while (frags.size() > 1 && trim(frags.back().text).empty()) {
        Fragment tail = frags.back();
        frags.pop_back();
        frags.back().sep += tail.text + tail.sep;
    }
    return frags;
}

bool frag_short(const Fragment& f, int min_content_tokens) {
    return count_content_tokens(f.text) < min_content_tokens;
}

void merge_at(std::vector<Fragment>& frags, size_t i, bool into_previous) {
    if (into_previous) {
        frags[i - 1].text += frags[i - 1].sep + frags[i].text;
        frags[i - 1].sep = frags[i].sep;
        frags.erase(frags.begin() + static_cast<long>(i));
    } else {
        frags[i].text += frags[i].sep + frags[i + 1].text;
        frags[i].sep = frags[i + 1].sep;
        frags.erase(frags.begin() + static_cast<long>(i + 1));
    }
}

// Merges short fragments into the preceding one (the first merges forward).
void merge_short(std::vector<Fragment>& frags, int min_content_tokens) {
    bool changed = true;
    while (changed && frags.size() > 1) {
        changed = false;
        for (size_t i = 0; i < frags.size(); ++i) {
            if (!frag_short(frags[i], min_content_tokens)) continue;
            if (i == 0) {
                merge_at(frags, 0, false);
            } else {
                merge_at(frags, i, true);
            }
            changed = true;
            break;
        }
    }
}

} // namespace

std::string to_lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> words(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream ss(text);
    std::string w;
    while (ss >> w) out.push_back(w);
    return out;
}

bool is_stopword(const std::string& word) { return stopwords().count(to_lower(word)) > 0; }

std::vector<std::string> content_tokens(const std::string& text) {
    std::vector<std::string> out;
    for (const auto& w : words(text)) {
        std::string core = to_lower(strip_punct(w));
        if (core.empty()) continue;
        if (all_digits(core)) continue;
        if (stopwords().count(core)) continue;
        out.push_back(core);
    }
    return out;
}

int count_content_tokens(const std::string& text) {
    return static_cast<int>(content_tokens(text).size());
}

Segmentation segment_steps(const std::string& cot_text, int min_content_tokens) {
    if (min_content_tokens < 1) throw contract_error("min_content_tokens must be positive");
    if (trim(cot_text).empty()) throw contract_error("segment_steps: degenerate all-whitespace input");

    std::vector<Fragment> frags = split_fragments(cot_text);

    // Pass 1: merge short sentence fragments within each line.
    std::vector<Fragment> merged;
    size_t i = 0;
    while (i < frags.size()) {
        size_t j = i;
        while (j < frags.size() && frags[j].sep.find('\n') == std::string::npos) ++j;
        // [i, j] is one line (j holds the newline separator or the tail).
        std::vector<Fragment> line(frags.begin() + static_cast<long>(i),
                                   frags.begin() + static_cast<long>(std::min(j + 1, frags.size())));
        merge_short(line, min_content_tokens);
        merged.insert(merged.end(), line.begin(), line.end());
        i = j + 1;
    }

    // Pass 2: merge steps that are still short across line boundaries.
    merge_short(merged, min_content_tokens);

    Segmentation seg;
    for (const auto& f : merged) {
        seg.steps.push_back(f.text);
        seg.separators.push_back(f.sep);
    }
    return seg;
}

double jaccard_word_overlap(const std::string& a, const std::string& b) {
    std::set<std::string> wa, wb;
    for (const auto& w : words(a)) wa.insert(to_lower(strip_punct(w)));
    for (const auto& w : words(b)) wb.insert(to_lower(strip_punct(w)));
    wa.erase("");
    wb.erase("");
    if (wa.empty() && wb.empty()) return 1.0;
    size_t inter = 0;
    for (const auto& w : wa) inter += wb.count(w);
    size_t uni = wa.size() + wb.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

int word_edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::string> wa = words(a), wb = words(b);
    size_t n = wa.size(), m = wb.size();
    std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
    for (size_t x = 0; x <= n; ++x) d[x][0] = static_cast<int>(x);
    for (size_t y = 0; y <= m; ++y) d[0][y] = static_cast<int>(y);
    for (size_t x = 1; x <= n; ++x) {
        for (size_t y = 1; y <= m; ++y) {
            int sub = d[x - 1][y - 1] + (wa[x - 1] == wb[y - 1] ? 0 : 1);
            d[x][y] = std::min({sub, d[x - 1][y] + 1, d[x][y - 1] + 1});
        }
    }
    return d[n][m];
}

} // namespace faithmate
