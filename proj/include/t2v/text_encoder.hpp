#pragma once

#include <string>
#include <vector>

#include "t2v/params.hpp"

namespace t2v {

// Closed synthetic vocabulary. PAD must stay 0.
struct Vocabulary {
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    std::vector<std::string> tokens;  // index == id

    static Vocabulary synthetic();
    int lookup(const std::string& word) const;  // kUnk when absent
    size_t size() const { return tokens.size(); }

    void save(const std::string& path) const;  // UTF-8 "token<TAB>id" lines
    static Vocabulary load(const std::string& path);
};

struct TokenSeq {
    std::vector<int> ids;  // length exactly n_p; BOS first, EOS before padding
};

struct TextEncoderConfig {
    size_t n_p = 16;  // max token length
    size_t n_c = 64;  // embedding dim
    size_t layers = 2;
    size_t heads = 4;

    static TextEncoderConfig paper() { return {77, 768, 2, 8}; }
};

struct TextEncoder {
    TextEncoderConfig cfg;
    Vocabulary vocab;
    ParamMap params;
};

// lowercase whitespace split, truncate to n_p-2, wrap with BOS/EOS, pad
TokenSeq tokenize(const std::string& prompt, const Vocabulary& vocab, size_t n_p);

TextEncoder make_text_encoder(const TextEncoderConfig& cfg, Vocabulary vocab, Rng& rng);

// [B, n_p, n_c] conditioning matrix batch
Tensor encode_text(const TextEncoder& enc, const std::vector<TokenSeq>& batch);
// single-prompt convenience, [n_p, n_c]
Tensor encode_text(const TextEncoder& enc, const TokenSeq& tokens);

// encoding of the empty prompt; the unconditional branch of guidance
Tensor null_embedding(const TextEncoder& enc);

}  // namespace t2v
