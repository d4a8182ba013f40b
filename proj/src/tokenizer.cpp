#include "faithmate/tokenizer.hpp"

#include <array>
#include <cctype>

namespace faithmate {

namespace {

// Token layout: 0 pad, 1-26 letters (case folded), 27-36 digits, 37 space,
// 38-62 punctuation, 63 catch-all.
constexpr std::array<char, 25> kPunct = {'.', ',', '?', '!', ':', ';', '\n', '\'', '"', '-',
                                         '(', ')', '[', ']', '{', '}', '/', '\\', '+', '*',
                                         '=', '<', '>', '%', '&'};

} // namespace

int CharTokenizer::encode_char(char c) {
    if (c == '\0') return kPadToken;
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isalpha(u)) return 1 + (std::tolower(u) - 'a');
    if (std::isdigit(u)) return 27 + (u - '0');
    if (c == ' ' || c == '\t') return 37;
    for (size_t i = 0; i < kPunct.size(); ++i)
        if (kPunct[i] == c) return 38 + static_cast<int>(i);
    return kVocabSize - 1;
}

std::vector<int> CharTokenizer::encode(const std::string& text) {
    std::vector<int> out;
    out.reserve(text.size());
    for (char c : text) out.push_back(encode_char(c));
    return out;
}

char CharTokenizer::decode_token(int token) {
    if (token <= 0) return '\0';
    if (token <= 26) return static_cast<char>('a' + token - 1);
    if (token <= 36) return static_cast<char>('0' + token - 27);
    if (token == 37) return ' ';
    if (token <= 62) return kPunct[static_cast<size_t>(token - 38)];
    return '~';
}

std::string CharTokenizer::decode(const std::vector<int>& tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (int t : tokens) {
        char c = decode_token(t);
        if (c != '\0') out.push_back(c);
    }
    return out;
}

} // namespace faithmate
