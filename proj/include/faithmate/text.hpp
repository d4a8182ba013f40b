#pragma once

#include <string>
#include <utility>
#include <vector>

namespace faithmate {

struct Segmentation {
    std::vector<std::string> steps;
    std::vector<std::string> separators; // one per step; trailing separator may be ""
};

// Splits a CoT at newlines first, then at sentence-final punctuation (. ! ?)
// followed by whitespace. Fragments with fewer than `min_content_tokens`
// content-bearing tokens are merged into the preceding step (or the following
// step when first). Concatenating steps[i] + separators[i] reproduces the
// input exactly. Throws contract_error on all-whitespace input.
Segmentation segment_steps(const std::string& cot_text, int min_content_tokens = 3);

// Whitespace-delimited words of `text`.
std::vector<std::string> words(const std::string& text);

// Tokens that are not punctuation, not stopwords, and not pure digits.
std::vector<std::string> content_tokens(const std::string& text);
int count_content_tokens(const std::string& text);

bool is_stopword(const std::string& word);

// |A ∩ B| / |A ∪ B| over word sets; 1.0 when both are empty.
double jaccard_word_overlap(const std::string& a, const std::string& b);

// Word-level Levenshtein distance.
int word_edit_distance(const std::string& a, const std::string& b);

std::string to_lower(const std::string& s);
std::string trim(const std::string& s);

} // namespace faithmate
