#pragma once

#include <string>
#include <vector>

namespace faithmate {

// Character-level tokenizer for the in-repo reference backend. Vocab is 64:
// pad, case-folded letters, digits, common punctuation, and a catch-all.
class CharTokenizer {
public:
    static constexpr int kVocabSize = 64;
    static constexpr int kPadToken = 0;

    static int encode_char(char c);
    static std::vector<int> encode(const std::string& text);
    static char decode_token(int token);
    static std::string decode(const std::vector<int>& tokens);
};

} // namespace faithmate
