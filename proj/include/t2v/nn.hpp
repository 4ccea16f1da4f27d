#pragma once

#include "t2v/tensor.hpp"

namespace t2v {

// x [N,Cin,H,W], w [Cout,Cin,kh,kw], b [Cout]; cross-correlation
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride = 1, size_t pad = 1);

// x [B,C,F,h,w], w [Cout,Cin,k], b [Cout]; convolves along F, spatial positions independent
Tensor conv1d_temporal(const Tensor& x, const Tensor& w, const Tensor& b, size_t pad = 1);

// x [N,C,spatial...]; per-(sample, group) normalization, then per-channel affine
Tensor group_norm(const Tensor& x, size_t groups, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);

// normalization over the last dim of x [..., C]
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);

// x [..., in] @ w [in, out] + b [out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

struct AttentionParams {
    Tensor wq, bq;  // [model, inner]
    Tensor wk, bk;  // [kv_dim, inner]
    Tensor wv, bv;  // [kv_dim, inner]
    Tensor wo, bo;  // [inner, model]
    size_t heads = 1;
    size_t head_dim = 1;

    size_t model_dim() const { return heads * head_dim; }
};

AttentionParams make_attention(size_t model_dim, size_t kv_dim, size_t heads, Rng& rng);

// q_in [B,Lq,model]; kv_in [B,Lk,kv_dim]; pass q_in twice for self-attention
Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& p);

// sinusoidal embedding [len(t), dim]: half sin, half cos, log-spaced frequencies (base 10000)
Tensor timestep_embedding(const std::vector<int>& t, size_t dim);

// [N,C,H,W] -> [N,C,2H,2W]
Tensor upsample_nearest2x(const Tensor& x);

// N(0, 1/fan_in) initialization
Tensor fan_in_normal(const Shape& shape, size_t fan_in, Rng& rng);

}  // namespace t2v
