#include "t2v/text_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace t2v {

uint64_t fnv1a(const void* data, size_t len, uint64_t h) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t ParamMap::content_hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, t] : tensors) {
        h = fnv1a(name.data(), name.size(), h);
        for (size_t d : t.shape()) h = fnv1a(&d, sizeof(d), h);
        h = fnv1a(t.values().data(), t.numel() * sizeof(float), h);
    }
    return h;
}

Vocabulary Vocabulary::synthetic() {
    Vocabulary v;
    v.tokens = {"<pad>", "<bos>", "<eos>", "<unk>",
                // colors
                "red", "green", "blue", "yellow",
                // shapes
                "square", "circle", "triangle",
                // directions
                "left", "right", "up", "down",
                // function words
                "a", "an", "the", "is", "are", "moving", "to", "toward", "and",
                "of", "on", "in", "with", "shape", "object", "color", "small",
                "large", "slow", "fast", "slowly", "quickly", "dark", "bright",
                "background", "video", "frame", "scene", "still"};
    return v;
}

int Vocabulary::lookup(const std::string& word) const {
    for (size_t i = 0; i < tokens.size(); ++i)
        if (tokens[i] == word) return int(i);
    return kUnk;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("Vocabulary::save: cannot open " + path);
    for (size_t i = 0; i < tokens.size(); ++i) out << tokens[i] << '\t' << i << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("Vocabulary::load: cannot open " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        size_t tab = line.find('\t');
        if (tab == std::string::npos) throw std::runtime_error("Vocabulary::load: malformed line: " + line);
        std::string tok = line.substr(0, tab);
        size_t id = std::stoul(line.substr(tab + 1));
        if (id != v.tokens.size()) throw std::runtime_error("Vocabulary::load: ids must be dense and ordered");
        v.tokens.push_back(tok);
    }
    return v;
}

TokenSeq tokenize(const std::string& prompt, const Vocabulary& vocab, size_t n_p) {
    if (n_p < 2) throw std::invalid_argument("tokenize: n_p must be at least 2");
    std::string lowered = prompt;
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    std::istringstream words(lowered);
    std::string word;
    TokenSeq seq;
    seq.ids.push_back(Vocabulary::kBos);
    while (words >> word && seq.ids.size() < n_p - 1)
        seq.ids.push_back(vocab.lookup(word));
    seq.ids.push_back(Vocabulary::kEos);
    seq.ids.resize(n_p, Vocabulary::kPad);
    return seq;
}

TextEncoder make_text_encoder(const TextEncoderConfig& cfg, Vocabulary vocab, Rng& rng) {
    TextEncoder enc;
    enc.cfg = cfg;
    enc.vocab = std::move(vocab);
    ParamMap& p = enc.params;
    size_t C = cfg.n_c;
    p.add("text.tok.weight", fan_in_normal({enc.vocab.size(), C}, C, rng));
    p.add("text.pos.weight", fan_in_normal({cfg.n_p, C}, C, rng));
    for (size_t l = 0; l < cfg.layers; ++l) {
        std::string pre = "text.layer" + std::to_string(l);
        p.add(pre + ".norm0.gamma", Tensor::ones({C}));
        p.add(pre + ".norm0.beta", Tensor::zeros({C}));
        p.add_attention(pre + ".attn", C, C, cfg.heads, rng);
        p.add(pre + ".norm1.gamma", Tensor::ones({C}));
        p.add(pre + ".norm1.beta", Tensor::zeros({C}));
        p.add(pre + ".mlp.fc0.weight", fan_in_normal({C, 4 * C}, C, rng));
        p.add(pre + ".mlp.fc0.bias", Tensor::zeros({4 * C}));
        p.add(pre + ".mlp.fc1.weight", fan_in_normal({4 * C, C}, 4 * C, rng));
        p.add(pre + ".mlp.fc1.bias", Tensor::zeros({C}));
    }
    p.add("text.norm.gamma", Tensor::ones({C}));
    p.add("text.norm.beta", Tensor::zeros({C}));
    return enc;
}

Tensor encode_text(const TextEncoder& enc, const std::vector<TokenSeq>& batch) {
    if (batch.empty()) throw std::invalid_argument("encode_text: empty batch");
    size_t B = batch.size(), L = enc.cfg.n_p, C = enc.cfg.n_c;
    std::vector<int> flat;
    flat.reserve(B * L);
    for (const auto& seq : batch) {
        if (seq.ids.size() != L)
            throw std::invalid_argument("encode_text: token sequence length != n_p");
        flat.insert(flat.end(), seq.ids.begin(), seq.ids.end());
    }
    const ParamMap& p = enc.params;
    Tensor x = reshape(embedding(p.at("text.tok.weight"), flat), {B, L, C});
    x = add(x, p.at("text.pos.weight"));  // broadcast over batch
    for (size_t l = 0; l < enc.cfg.layers; ++l) {
        std::string pre = "text.layer" + std::to_string(l);
        Tensor h = layer_norm(x, p.at(pre + ".norm0.gamma"), p.at(pre + ".norm0.beta"));
        x = add(x, multi_head_attention(h, h, p.attention(pre + ".attn", enc.cfg.heads)));
        h = layer_norm(x, p.at(pre + ".norm1.gamma"), p.at(pre + ".norm1.beta"));
        h = linear(silu(linear(h, p.at(pre + ".mlp.fc0.weight"), p.at(pre + ".mlp.fc0.bias"))),
                   p.at(pre + ".mlp.fc1.weight"), p.at(pre + ".mlp.fc1.bias"));
        x = add(x, h);
    }
    return layer_norm(x, p.at("text.norm.gamma"), p.at("text.norm.beta"));
}

Tensor encode_text(const TextEncoder& enc, const TokenSeq& tokens) {
    return reshape(encode_text(enc, std::vector<TokenSeq>{tokens}), {enc.cfg.n_p, enc.cfg.n_c});
}

Tensor null_embedding(const TextEncoder& enc) {
    return encode_text(enc, tokenize("", enc.vocab, enc.cfg.n_p));
}

}  // namespace t2v
