#include "t2v/unet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace t2v {

namespace instrument {
namespace {
thread_local Counters g_counters;
}
Counters& counters() { return g_counters; }
void reset() { g_counters = Counters{}; }
}  // namespace instrument

std::vector<SubUnit> st_block_plan(const STBlockConfig& cfg, bool with_attention) {
    if (cfg.n_spatial_conv == 0) throw std::invalid_argument("st_block_plan: need at least one spatial conv");
    std::vector<SubUnit> plan;
    // temporal convs distributed evenly after each spatial conv, remainder last
    size_t per = cfg.n_temporal_conv / cfg.n_spatial_conv;
    size_t extra = cfg.n_temporal_conv % cfg.n_spatial_conv;
    for (size_t i = 0; i < cfg.n_spatial_conv; ++i) {
        plan.push_back(SubUnit::spatial_conv);
        size_t reps = per + (i + 1 == cfg.n_spatial_conv ? extra : 0);
        for (size_t r = 0; r < reps; ++r) plan.push_back(SubUnit::temporal_conv);
    }
    if (with_attention && cfg.n_spatial_attn > 0) {
        size_t tper = cfg.n_temporal_attn / cfg.n_spatial_attn;
        size_t textra = cfg.n_temporal_attn % cfg.n_spatial_attn;
        for (size_t i = 0; i < cfg.n_spatial_attn; ++i) {
            plan.push_back(i == 0 ? SubUnit::cross_attn : SubUnit::spatial_attn);
            size_t reps = tper + (i + 1 == cfg.n_spatial_attn ? textra : 0);
            for (size_t r = 0; r < reps; ++r) plan.push_back(SubUnit::temporal_attn);
        }
    }
    return plan;
}

bool is_temporal_param(const std::string& name) {
    return name.find(".temporal.") != std::string::npos;
}

namespace {

size_t norm_groups(size_t channels) { return std::min<size_t>(32, channels); }

void add_norm(ParamMap& p, const std::string& prefix, size_t C) {
    p.add(prefix + ".gamma", Tensor::ones({C}));
    p.add(prefix + ".beta", Tensor::zeros({C}));
}

void add_conv2d(ParamMap& p, const std::string& prefix, size_t ci, size_t co, size_t k, Rng& rng) {
    p.add(prefix + ".weight", fan_in_normal({co, ci, k, k}, ci * k * k, rng));
    p.add(prefix + ".bias", Tensor::zeros({co}));
}

void add_linear(ParamMap& p, const std::string& prefix, size_t in, size_t out, Rng& rng) {
    p.add(prefix + ".weight", fan_in_normal({in, out}, in, rng));
    p.add(prefix + ".bias", Tensor::zeros({out}));
}

// allocates one spatio-temporal block; returns nothing, names carry structure
void add_st_block(ParamMap& p, const std::string& blk, size_t cin, size_t cout,
                  const UNetConfig& cfg, const STBlockConfig& st, bool with_attention, Rng& rng) {
    auto plan = st_block_plan(st, with_attention);
    size_t ch = cin;
    size_t sconv = 0, tconv = 0, sattn = 0, tattn = 0;
    for (SubUnit u : plan) {
        switch (u) {
            case SubUnit::spatial_conv: {
                std::string pre = blk + ".spatial.conv" + std::to_string(sconv++);
                add_norm(p, pre + ".norm0", ch);
                add_conv2d(p, pre + ".conv0", ch, cout, 3, rng);
                add_linear(p, pre + ".emb", cfg.time_dim, 2 * cout, rng);
                add_norm(p, pre + ".norm1", cout);
                add_conv2d(p, pre + ".conv1", cout, cout, 3, rng);
                if (ch != cout) add_conv2d(p, pre + ".skip", ch, cout, 1, rng);
                ch = cout;
                break;
            }
            case SubUnit::temporal_conv: {
                std::string pre = blk + ".temporal.conv" + std::to_string(tconv++);
                add_norm(p, pre + ".norm", ch);
                add_linear(p, pre + ".emb", cfg.time_dim, 2 * ch, rng);
                p.add(pre + ".conv.weight", fan_in_normal({ch, ch, 3}, ch * 3, rng));
                p.add(pre + ".conv.bias", Tensor::zeros({ch}));
                break;
            }
            case SubUnit::cross_attn: {
                std::string pre = blk + ".spatial.attn" + std::to_string(sattn++);
                add_norm(p, pre + ".norm", ch);
                p.add_attention(pre, ch, cfg.text_dim, st.heads, rng);
                break;
            }
            case SubUnit::spatial_attn: {
                std::string pre = blk + ".spatial.attn" + std::to_string(sattn++);
                add_norm(p, pre + ".norm", ch);
                p.add_attention(pre, ch, ch, st.heads, rng);
                break;
            }
            case SubUnit::temporal_attn: {
                std::string pre = blk + ".temporal.attn" + std::to_string(tattn++);
                add_norm(p, pre + ".norm", ch);
                p.add_attention(pre, ch, ch, st.heads, rng);
                break;
            }
        }
    }
}

// ---- forward helpers; x always [B*F, C, h, w] at the block boundary ----

struct ForwardCtx {
    size_t B = 1, F = 1;
    Tensor temb;          // [B, time_dim]
    Tensor temb_frames;   // [B*F, time_dim]
    Tensor context;       // [B*F, Np, Nc]
};

Tensor to_temporal(const Tensor& x, size_t B, size_t F) {  // [B*F,C,h,w] -> [B,C,F,h,w]
    size_t C = x.dim(1), h = x.dim(2), w = x.dim(3);
    return permute(reshape(x, {B, F, C, h, w}), {0, 2, 1, 3, 4});
}

Tensor from_temporal(const Tensor& x) {  // [B,C,F,h,w] -> [B*F,C,h,w]
    size_t B = x.dim(0), C = x.dim(1), F = x.dim(2), h = x.dim(3), w = x.dim(4);
    return reshape(permute(x, {0, 2, 1, 3, 4}), {B * F, C, h, w});
}

// temb projection split into (1+scale, shift), applied after a norm
Tensor film(const Tensor& normed, const Tensor& emb2c) {
    size_t C = normed.dim(1);
    Shape bshape(normed.rank(), 1);
    bshape[0] = normed.dim(0);
    bshape[1] = C;
    Tensor s = reshape(slice(emb2c, 1, 0, C), bshape);
    Tensor t = reshape(slice(emb2c, 1, C, C), bshape);
    return add(mul(normed, add(s, 1.0f)), t);
}

Tensor spatial_conv_unit(const ParamMap& p, const std::string& pre, const Tensor& x, const ForwardCtx& ctx) {
    ++instrument::counters().spatial_conv;
    size_t cin = x.dim(1);
    size_t cout = p.at(pre + ".conv0.weight").dim(0);
    Tensor h = conv2d(silu(group_norm(x, norm_groups(cin), p.at(pre + ".norm0.gamma"), p.at(pre + ".norm0.beta"))),
                      p.at(pre + ".conv0.weight"), p.at(pre + ".conv0.bias"));
    Tensor emb = linear(silu(ctx.temb_frames), p.at(pre + ".emb.weight"), p.at(pre + ".emb.bias"));
    h = film(group_norm(h, norm_groups(cout), p.at(pre + ".norm1.gamma"), p.at(pre + ".norm1.beta")), emb);
    h = conv2d(silu(h), p.at(pre + ".conv1.weight"), p.at(pre + ".conv1.bias"));
    Tensor skip = p.has(pre + ".skip.weight")
                      ? conv2d(x, p.at(pre + ".skip.weight"), p.at(pre + ".skip.bias"), 1, 0)
                      : x;
    return add(skip, h);
}

Tensor temporal_conv_unit(const ParamMap& p, const std::string& pre, const Tensor& x, const ForwardCtx& ctx) {
    ++instrument::counters().temporal_conv;
    size_t C = x.dim(1);
    Tensor xt = to_temporal(x, ctx.B, ctx.F);  // [B,C,F,h,w]
    Tensor h = group_norm(xt, norm_groups(C), p.at(pre + ".norm.gamma"), p.at(pre + ".norm.beta"));
    Tensor emb = linear(silu(ctx.temb), p.at(pre + ".emb.weight"), p.at(pre + ".emb.bias"));  // [B,2C]
    h = film(h, emb);
    h = conv1d_temporal(silu(h), p.at(pre + ".conv.weight"), p.at(pre + ".conv.bias"));
    return add(x, from_temporal(h));
}

Tensor spatial_attn_unit(const ParamMap& p, const std::string& pre, const Tensor& x, const ForwardCtx& ctx,
                         bool cross, size_t heads) {
    if (cross)
        ++instrument::counters().cross_attn;
    else
        ++instrument::counters().spatial_attn;
    size_t BF = x.dim(0), C = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor seq = permute(reshape(x, {BF, C, h * w}), {0, 2, 1});  // [BF, hw, C]
    Tensor normed = layer_norm(seq, p.at(pre + ".norm.gamma"), p.at(pre + ".norm.beta"));
    Tensor attended = multi_head_attention(normed, cross ? ctx.context : normed, p.attention(pre, heads));
    Tensor out = add(seq, attended);
    return reshape(permute(out, {0, 2, 1}), {BF, C, h, w});
}

Tensor temporal_attn_unit(const ParamMap& p, const std::string& pre, const Tensor& x, const ForwardCtx& ctx,
                          size_t heads) {
    ++instrument::counters().temporal_attn;
    size_t C = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor seq = reshape(permute(reshape(x, {ctx.B, ctx.F, C, h, w}), {0, 3, 4, 1, 2}),
                         {ctx.B * h * w, ctx.F, C});  // frames as sequence per position
    Tensor normed = layer_norm(seq, p.at(pre + ".norm.gamma"), p.at(pre + ".norm.beta"));
    Tensor out = add(seq, multi_head_attention(normed, normed, p.attention(pre, heads)));
    return reshape(permute(reshape(out, {ctx.B, h, w, ctx.F, C}), {0, 3, 4, 1, 2}),
                   {ctx.B * ctx.F, C, h, w});
}

Tensor st_block(const UNetParams& P, const std::string& blk, Tensor x, const ForwardCtx& ctx, bool with_attention) {
    ++instrument::counters().st_block;
    auto plan = st_block_plan(P.st, with_attention);
    size_t sconv = 0, tconv = 0, sattn = 0, tattn = 0;
    for (SubUnit u : plan) {
        switch (u) {
            case SubUnit::spatial_conv:
                x = spatial_conv_unit(P.params, blk + ".spatial.conv" + std::to_string(sconv++), x, ctx);
                break;
            case SubUnit::temporal_conv:
                x = temporal_conv_unit(P.params, blk + ".temporal.conv" + std::to_string(tconv++), x, ctx);
                break;
            case SubUnit::cross_attn:
                x = spatial_attn_unit(P.params, blk + ".spatial.attn" + std::to_string(sattn++), x, ctx, true,
                                      P.st.heads);
                break;
            case SubUnit::spatial_attn:
                x = spatial_attn_unit(P.params, blk + ".spatial.attn" + std::to_string(sattn++), x, ctx, false,
                                      P.st.heads);
                break;
            case SubUnit::temporal_attn:
                x = temporal_attn_unit(P.params, blk + ".temporal.attn" + std::to_string(tattn++), x, ctx,
                                       P.st.heads);
                break;
        }
    }
    return x;
}

bool level_has_attention(const UNetConfig& cfg, size_t level) {
    return std::find(cfg.attention_levels.begin(), cfg.attention_levels.end(), level) !=
           cfg.attention_levels.end();
}

}  // namespace

UNetParams build_unet(const UNetConfig& cfg, const STBlockConfig& st, Rng& rng) {
    if (cfg.levels() == 0) throw std::invalid_argument("build_unet: need at least one level");
    if (cfg.time_dim % 2 != 0 || cfg.base_channels % 2 != 0)
        throw std::invalid_argument("build_unet: dims must be even");
    for (size_t lvl : cfg.attention_levels)
        if (lvl >= cfg.levels()) throw std::invalid_argument("build_unet: attention level out of range");

    UNetParams P;
    P.cfg = cfg;
    P.st = st;
    ParamMap& p = P.params;

    add_linear(p, "unet.time.linear0", cfg.base_channels, cfg.time_dim, rng);
    add_linear(p, "unet.time.linear1", cfg.time_dim, cfg.time_dim, rng);
    add_conv2d(p, "unet.init.conv", cfg.in_channels, cfg.base_channels, 3, rng);

    size_t L = cfg.levels();
    size_t ch = cfg.base_channels;
    std::vector<size_t> skip_chans{ch};
    for (size_t i = 0; i < L; ++i) {
        size_t cout = cfg.base_channels * cfg.channel_mults[i];
        for (size_t j = 0; j < cfg.blocks_per_level; ++j) {
            add_st_block(p, "unet.level" + std::to_string(i) + ".block" + std::to_string(j), ch, cout, cfg, st,
                         level_has_attention(cfg, i), rng);
            ch = cout;
            skip_chans.push_back(ch);
        }
        if (i + 1 < L) {
            add_conv2d(p, "unet.level" + std::to_string(i) + ".down.conv", ch, ch, 3, rng);
            skip_chans.push_back(ch);
        }
    }
    add_st_block(p, "unet.mid.block0", ch, ch, cfg, st, level_has_attention(cfg, L - 1), rng);
    for (size_t ii = L; ii-- > 0;) {
        size_t cout = cfg.base_channels * cfg.channel_mults[ii];
        for (size_t j = 0; j <= cfg.blocks_per_level; ++j) {
            size_t ich = skip_chans.back();
            skip_chans.pop_back();
            add_st_block(p, "unet.level" + std::to_string(ii) + ".ublock" + std::to_string(j), ch + ich, cout,
                         cfg, st, level_has_attention(cfg, ii), rng);
            ch = cout;
        }
        if (ii > 0) add_conv2d(p, "unet.level" + std::to_string(ii) + ".up.conv", ch, ch, 3, rng);
    }
    add_norm(p, "unet.final.norm", ch);
    add_conv2d(p, "unet.final.conv", ch, cfg.in_channels, 3, rng);

    temporal_zero_init(P);

    P.total_params = p.total_elements();
    P.temporal_params = 0;
    for (const auto& [name, t] : p.tensors)
        if (is_temporal_param(name)) P.temporal_params += t.numel();
    return P;
}

void temporal_zero_init(UNetParams& P) {
    for (auto& [name, t] : P.params.tensors) {
        if (!is_temporal_param(name)) continue;
        bool conv_out = name.ends_with(".conv.weight") || name.ends_with(".conv.bias");
        bool attn_out = name.ends_with(".out.weight") || name.ends_with(".out.bias");
        if (conv_out || attn_out)
            std::fill(t.impl()->data.begin(), t.impl()->data.end(), 0.0f);
    }
}

Tensor unet_forward(const UNetParams& P, const Tensor& z, const Tensor& context, const std::vector<int>& t) {
    ++instrument::counters().unet_forward;
    const UNetConfig& cfg = P.cfg;
    if (z.rank() != 5 || z.dim(2) != cfg.in_channels)
        throw std::invalid_argument("unet_forward: z must be [B,F," + std::to_string(cfg.in_channels) + ",h,w]");
    size_t B = z.dim(0), F = z.dim(1), h = z.dim(3), w = z.dim(4);
    if (t.size() != B) throw std::invalid_argument("unet_forward: one timestep per batch item");
    if (context.rank() != 3 || context.dim(0) != B || context.dim(2) != cfg.text_dim)
        throw std::invalid_argument("unet_forward: context must be [B,Np," + std::to_string(cfg.text_dim) + "]");
    size_t L = cfg.levels();
    size_t down_factor = size_t(1) << (L - 1);
    if (h % down_factor != 0 || w % down_factor != 0)
        throw std::invalid_argument("unet_forward: latent size must be divisible by " + std::to_string(down_factor));

    const ParamMap& p = P.params;
    ForwardCtx ctx;
    ctx.B = B;
    ctx.F = F;
    Tensor te = timestep_embedding(t, cfg.base_channels);  // [B, base]
    te = linear(te, p.at("unet.time.linear0.weight"), p.at("unet.time.linear0.bias"));
    ctx.temb = linear(silu(te), p.at("unet.time.linear1.weight"), p.at("unet.time.linear1.bias"));
    ctx.temb_frames = reshape(expand(reshape(ctx.temb, {B, 1, cfg.time_dim}), 1, F), {B * F, cfg.time_dim});
    size_t Np = context.dim(1);
    ctx.context = reshape(expand(reshape(context, {B, 1, Np, cfg.text_dim}), 1, F), {B * F, Np, cfg.text_dim});

    Tensor x = reshape(z, {B * F, cfg.in_channels, h, w});
    x = conv2d(x, p.at("unet.init.conv.weight"), p.at("unet.init.conv.bias"));

    std::vector<Tensor> skips{x};
    for (size_t i = 0; i < L; ++i) {
        for (size_t j = 0; j < cfg.blocks_per_level; ++j) {
            x = st_block(P, "unet.level" + std::to_string(i) + ".block" + std::to_string(j), x, ctx,
                         level_has_attention(cfg, i));
            skips.push_back(x);
        }
        if (i + 1 < L) {
            x = conv2d(x, p.at("unet.level" + std::to_string(i) + ".down.conv.weight"),
                       p.at("unet.level" + std::to_string(i) + ".down.conv.bias"), 2, 1);
            skips.push_back(x);
        }
    }

    x = st_block(P, "unet.mid.block0", x, ctx, level_has_attention(cfg, L - 1));

    for (size_t ii = L; ii-- > 0;) {
        for (size_t j = 0; j <= cfg.blocks_per_level; ++j) {
            Tensor skip = skips.back();
            skips.pop_back();
            x = st_block(P, "unet.level" + std::to_string(ii) + ".ublock" + std::to_string(j),
                         concat({x, skip}, 1), ctx, level_has_attention(cfg, ii));
        }
        if (ii > 0) {
            x = upsample_nearest2x(x);
            x = conv2d(x, p.at("unet.level" + std::to_string(ii) + ".up.conv.weight"),
                       p.at("unet.level" + std::to_string(ii) + ".up.conv.bias"));
        }
    }

    size_t ch = x.dim(1);
    x = silu(group_norm(x, norm_groups(ch), p.at("unet.final.norm.gamma"), p.at("unet.final.norm.beta")));
    x = conv2d(x, p.at("unet.final.conv.weight"), p.at("unet.final.conv.bias"));
    return reshape(x, {B, F, cfg.in_channels, h, w});
}

}  // namespace t2v
