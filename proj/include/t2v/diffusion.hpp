#pragma once

#include <functional>

#include "t2v/tensor.hpp"

namespace t2v {

enum class ScheduleKind { linear, scaled_linear };

struct NoiseSchedule {
    size_t T = 0;
    std::vector<double> beta;
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // cumulative product of alpha
};

NoiseSchedule make_schedule(size_t T, ScheduleKind kind, double beta_start, double beta_end);

// desk preset: T=100, linear, beta in [1e-4, 0.05]
NoiseSchedule desk_schedule();
// the convention inherited from the underlying image model: T=1000,
// scaled_linear, beta in [0.00085, 0.012]
NoiseSchedule paper_schedule();

// closed-form forward marginal z_t = sqrt(ab_t) z0 + sqrt(1-ab_t) eps
Tensor q_sample(const Tensor& z0, size_t t, const Tensor& eps, const NoiseSchedule& sched);
// per-item timesteps over the leading batch axis
Tensor q_sample(const Tensor& z0, const std::vector<int>& t, const Tensor& eps, const NoiseSchedule& sched);

// eps_uncond + s * (eps_cond - eps_uncond)
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, float s);

// noise predictor: (z [B,F,4,h,w], context [B,Np,Nc], t per item) -> same shape as z
using DenoiseModel =
    std::function<Tensor(const Tensor& z, const Tensor& context, const std::vector<int>& t)>;

// Epsilon-prediction objective: per item draw t ~ U{0..T-1} and eps ~ N(0,I),
// with probability p_uncond swap the item's context row for null_context, then
// mean over all elements of (eps - model(q_sample, c, t))^2.
// Draw order per item: t, eps, drop coin.
Tensor training_loss(const Tensor& z0, const Tensor& context, const Tensor& null_context,
                     const DenoiseModel& model, const NoiseSchedule& sched, Rng& rng, float p_uncond);

struct SamplerConfig {
    size_t num_steps = 50;
    float guidance_scale = 9.0f;
    float eta = 0.0f;
};

// DDIM over a uniform-stride descending timestep subset, classifier-free
// guidance between context and null_context; returns the final latent
// [F,4,h,w]. Deterministic for eta = 0 under a fixed rng.
Tensor ddim_sample(const DenoiseModel& model, const Tensor& context, const Tensor& null_context,
                   const Shape& latent_shape, const SamplerConfig& cfg, const NoiseSchedule& sched,
                   Rng& rng);

}  // namespace t2v
