#include "t2v/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace t2v {

NoiseSchedule make_schedule(size_t T, ScheduleKind kind, double beta_start, double beta_end) {
    if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    for (size_t t = 0; t < T; ++t) {
        double u = T == 1 ? 0.0 : double(t) / double(T - 1);
        if (kind == ScheduleKind::linear) {
            s.beta[t] = beta_start + u * (beta_end - beta_start);
        } else {  // interpolate in sqrt(beta) space, then square
            double r = std::sqrt(beta_start) + u * (std::sqrt(beta_end) - std::sqrt(beta_start));
            s.beta[t] = r * r;
        }
    }
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    double prod = 1.0;
    for (size_t t = 0; t < T; ++t) {
        s.alpha[t] = 1.0 - s.beta[t];
        prod *= s.alpha[t];
        s.alpha_bar[t] = prod;
    }
    return s;
}

NoiseSchedule desk_schedule() { return make_schedule(100, ScheduleKind::linear, 1e-4, 0.05); }

NoiseSchedule paper_schedule() { return make_schedule(1000, ScheduleKind::scaled_linear, 0.00085, 0.012); }

Tensor q_sample(const Tensor& z0, size_t t, const Tensor& eps, const NoiseSchedule& sched) {
    if (t >= sched.T) throw std::out_of_range("q_sample: t out of range");
    if (z0.shape() != eps.shape()) throw std::invalid_argument("q_sample: eps shape must match z0");
    double ab = sched.alpha_bar[t];
    return add(mul(z0, float(std::sqrt(ab))), mul(eps, float(std::sqrt(1.0 - ab))));
}

Tensor q_sample(const Tensor& z0, const std::vector<int>& t, const Tensor& eps, const NoiseSchedule& sched) {
    if (z0.shape() != eps.shape()) throw std::invalid_argument("q_sample: eps shape must match z0");
    size_t B = z0.dim(0);
    if (t.size() != B) throw std::invalid_argument("q_sample: one timestep per batch item");
    Shape cshape(z0.rank(), 1);
    cshape[0] = B;
    std::vector<float> ca(B), ce(B);
    for (size_t i = 0; i < B; ++i) {
        if (t[i] < 0 || size_t(t[i]) >= sched.T) throw std::out_of_range("q_sample: t out of range");
        double ab = sched.alpha_bar[size_t(t[i])];
        ca[i] = float(std::sqrt(ab));
        ce[i] = float(std::sqrt(1.0 - ab));
    }
    return add(mul(z0, Tensor::from_data(cshape, std::move(ca))),
               mul(eps, Tensor::from_data(cshape, std::move(ce))));
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, float s) {
    if (eps_cond.shape() != eps_uncond.shape()) throw std::invalid_argument("cfg_combine: shape mismatch");
    return add(eps_uncond, mul(sub(eps_cond, eps_uncond), s));
}

Tensor training_loss(const Tensor& z0, const Tensor& context, const Tensor& null_context,
                     const DenoiseModel& model, const NoiseSchedule& sched, Rng& rng, float p_uncond) {
    if (z0.rank() != 5) throw std::invalid_argument("training_loss: z0 must be [B,F,4,h,w]");
    size_t B = z0.dim(0);
    if (context.rank() != 3 || context.dim(0) != B)
        throw std::invalid_argument("training_loss: context must be [B,Np,Nc]");
    if (null_context.rank() != 2)
        throw std::invalid_argument("training_loss: null_context must be [Np,Nc]");

    size_t per_item = z0.numel() / B;
    std::vector<int> t(B);
    std::vector<float> eps_data(z0.numel());
    std::vector<bool> drop(B);
    for (size_t i = 0; i < B; ++i) {
        t[i] = int(rng.next_below(sched.T));
        for (size_t j = 0; j < per_item; ++j) eps_data[i * per_item + j] = rng.next_normal();
        drop[i] = rng.next_uniform() < double(p_uncond);
    }
    Tensor eps = Tensor::from_data(z0.shape(), std::move(eps_data));
    Tensor z_t = q_sample(z0, t, eps, sched);

    Tensor null_row = reshape(null_context, {1, null_context.dim(0), null_context.dim(1)});
    std::vector<Tensor> rows;
    rows.reserve(B);
    bool any_drop = false;
    for (size_t i = 0; i < B; ++i) {
        if (drop[i]) {
            rows.push_back(null_row);
            any_drop = true;
        } else {
            rows.push_back(slice(context, 0, i, 1));
        }
    }
    Tensor c = any_drop || B > 1 ? concat(rows, 0) : context;

    Tensor pred = model(z_t, c, t);
    Tensor d = sub(eps, pred);
    return reduce_mean(mul(d, d));
}

Tensor ddim_sample(const DenoiseModel& model, const Tensor& context, const Tensor& null_context,
                   const Shape& latent_shape, const SamplerConfig& cfg, const NoiseSchedule& sched,
                   Rng& rng) {
    if (cfg.num_steps < 1 || cfg.num_steps > sched.T)
        throw std::invalid_argument("ddim_sample: num_steps must be in [1, T]");
    if (cfg.guidance_scale < 0.0f) throw std::invalid_argument("ddim_sample: guidance scale must be >= 0");
    if (cfg.eta < 0.0f || cfg.eta > 1.0f) throw std::invalid_argument("ddim_sample: eta must be in [0,1]");
    if (latent_shape.size() != 4) throw std::invalid_argument("ddim_sample: latent shape must be [F,4,h,w]");
    if (context.rank() != 2 || null_context.shape() != context.shape())
        throw std::invalid_argument("ddim_sample: contexts must be [Np,Nc] and agree");

    size_t F = latent_shape[0];
    Shape zshape{1, F, latent_shape[1], latent_shape[2], latent_shape[3]};
    Tensor z = Tensor::randn(zshape, rng);  // Z_T, i.i.d. across frames

    Tensor ctx = reshape(context, {1, context.dim(0), context.dim(1)});
    Tensor nctx = reshape(null_context, {1, context.dim(0), context.dim(1)});

    size_t stride = sched.T / cfg.num_steps;
    for (size_t s = cfg.num_steps; s-- > 0;) {
        int t = int(s * stride);
        double ab = sched.alpha_bar[size_t(t)];
        double ab_prev = t >= int(stride) ? sched.alpha_bar[size_t(t) - stride] : 1.0;

        Tensor eps_c = model(z, ctx, {t});
        Tensor eps_u = model(z, nctx, {t});
        Tensor eps_hat = cfg_combine(eps_c, eps_u, cfg.guidance_scale);

        // predicted z0, then the DDIM step toward t' = t - stride
        Tensor x0 = mul(sub(z, mul(eps_hat, float(std::sqrt(1.0 - ab)))), float(1.0 / std::sqrt(ab)));
        double sigma = double(cfg.eta) *
                       std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
        Tensor dir = mul(eps_hat, float(std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma))));
        z = add(mul(x0, float(std::sqrt(ab_prev))), dir);
        if (sigma > 0.0) z = add(z, mul(Tensor::randn(zshape, rng), float(sigma)));
    }
    return reshape(z, latent_shape);
}

}  // namespace t2v
