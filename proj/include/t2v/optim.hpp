#pragma once

#include "t2v/params.hpp"

namespace t2v {

struct AdamWConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.0f;
};

// first/second moments keyed by parameter name
struct OptimizerState {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    size_t step = 0;
};

// p <- p - lr*wd*p - lr*m_hat/(sqrt(v_hat)+eps), bias-corrected; step is 1-based
void adamw_step(Tensor& param, const std::vector<float>& grad, Tensor& m, Tensor& v,
                size_t step, const AdamWConfig& cfg);

// Updates every trainable parameter with an accumulated gradient across the
// given maps, in deterministic name order. clip_norm <= 0 disables clipping.
// Returns the pre-clip global gradient norm.
double adamw_update(const std::vector<ParamMap*>& maps, OptimizerState& state,
                    const AdamWConfig& cfg, float clip_norm);

}  // namespace t2v
