#pragma once

#include <map>
#include <string>

#include "t2v/nn.hpp"
#include "t2v/tensor.hpp"

namespace t2v {

// Named tensor map, sorted by name so every walk is canonical.
struct ParamMap {
    std::map<std::string, Tensor> tensors;

    void add(const std::string& name, Tensor t, bool trainable = true) {
        if (tensors.count(name)) throw std::invalid_argument("ParamMap: duplicate name " + name);
        t.set_requires_grad(trainable);
        tensors.emplace(name, std::move(t));
    }

    Tensor& at(const std::string& name) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw std::out_of_range("ParamMap: no tensor named " + name);
        return it->second;
    }
    const Tensor& at(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw std::out_of_range("ParamMap: no tensor named " + name);
        return it->second;
    }
    bool has(const std::string& name) const { return tensors.count(name) != 0; }

    size_t total_elements() const {
        size_t n = 0;
        for (const auto& [_, t] : tensors) n += t.numel();
        return n;
    }

    void set_trainable(bool flag) {
        for (auto& [_, t] : tensors) t.set_requires_grad(flag);
    }

    void zero_grads() {
        for (auto& [_, t] : tensors) t.zero_grad();
    }

    // FNV-1a over names, shapes and raw data bytes
    uint64_t content_hash() const;

    AttentionParams attention(const std::string& prefix, size_t heads) const {
        AttentionParams p;
        p.wq = at(prefix + ".q.weight");
        p.bq = at(prefix + ".q.bias");
        p.wk = at(prefix + ".k.weight");
        p.bk = at(prefix + ".k.bias");
        p.wv = at(prefix + ".v.weight");
        p.bv = at(prefix + ".v.bias");
        p.wo = at(prefix + ".out.weight");
        p.bo = at(prefix + ".out.bias");
        p.heads = heads;
        p.head_dim = p.wq.dim(1) / heads;
        return p;
    }

    void add_attention(const std::string& prefix, size_t model_dim, size_t kv_dim, size_t heads, Rng& rng) {
        AttentionParams p = make_attention(model_dim, kv_dim, heads, rng);
        add(prefix + ".q.weight", p.wq);
        add(prefix + ".q.bias", p.bq);
        add(prefix + ".k.weight", p.wk);
        add(prefix + ".k.bias", p.bk);
        add(prefix + ".v.weight", p.wv);
        add(prefix + ".v.bias", p.bv);
        add(prefix + ".out.weight", p.wo);
        add(prefix + ".out.bias", p.bo);
    }
};

uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull);

}  // namespace t2v
