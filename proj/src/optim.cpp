#include "t2v/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace t2v {

void adamw_step(Tensor& param, const std::vector<float>& grad, Tensor& m, Tensor& v,
                size_t step, const AdamWConfig& cfg) {
    if (grad.size() != param.numel() || m.numel() != param.numel() || v.numel() != param.numel())
        throw std::invalid_argument("adamw_step: shape mismatch");
    if (step == 0) throw std::invalid_argument("adamw_step: step is 1-based");
    auto& pd = param.impl()->data;
    auto& md = m.impl()->data;
    auto& vd = v.impl()->data;
    double bc1 = 1.0 - std::pow(double(cfg.beta1), double(step));
    double bc2 = 1.0 - std::pow(double(cfg.beta2), double(step));
    for (size_t i = 0; i < pd.size(); ++i) {
        double g = grad[i];
        double mi = double(cfg.beta1) * md[i] + (1.0 - cfg.beta1) * g;
        double vi = double(cfg.beta2) * vd[i] + (1.0 - cfg.beta2) * g * g;
        md[i] = float(mi);
        vd[i] = float(vi);
        double mhat = mi / bc1;
        double vhat = vi / bc2;
        double p = pd[i];
        p -= double(cfg.lr) * cfg.weight_decay * p;                  // decoupled decay
        p -= double(cfg.lr) * mhat / (std::sqrt(vhat) + cfg.eps);
        pd[i] = float(p);
    }
}

double adamw_update(const std::vector<ParamMap*>& maps, OptimizerState& state,
                    const AdamWConfig& cfg, float clip_norm) {
    double sq = 0.0;
    for (ParamMap* pm : maps)
        for (auto& [name, t] : pm->tensors) {
            if (!t.requires_grad() || !t.has_grad()) continue;
            for (float g : t.grad()) sq += double(g) * g;
        }
    double norm = std::sqrt(sq);

    float scale = 1.0f;
    if (clip_norm > 0.0f && norm > double(clip_norm)) scale = float(double(clip_norm) / norm);

    ++state.step;
    for (ParamMap* pm : maps)
        for (auto& [name, t] : pm->tensors) {
            if (!t.requires_grad() || !t.has_grad()) continue;
            auto& m = state.m[name];
            auto& v = state.v[name];
            if (!m.defined()) m = Tensor::zeros(t.shape());
            if (!v.defined()) v = Tensor::zeros(t.shape());
            if (scale == 1.0f) {
                adamw_step(t, t.grad(), m, v, state.step, cfg);
            } else {
                std::vector<float> g = t.grad();
                for (float& x : g) x *= scale;
                adamw_step(t, g, m, v, state.step, cfg);
            }
        }
    return norm;
}

}  // namespace t2v
