#include "t2v/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace t2v {

namespace {

bool tape_wants(std::initializer_list<const Tensor*> ins) {
    if (!GradTape::active()) return false;
    for (const Tensor* t : ins)
        if ((*t).requires_grad()) return true;
    return false;
}

void record_node(std::vector<Tensor> ins, Tensor& out,
                 std::function<void(const std::vector<float>&, const std::vector<std::vector<float>*>&)> fn) {
    out.impl()->requires_grad = true;
    out.impl()->is_leaf = false;
    GradTape::Node node;
    node.output = out.impl();
    for (auto& t : ins) node.inputs.push_back(t.impl());
    node.backward = std::move(fn);
    GradTape::active()->record(std::move(node));
}

// valid output range [lo, hi) so that o*stride + k - pad lands inside [0, len)
void conv_range(size_t len, size_t out_len, size_t stride, size_t pad, size_t k, size_t& lo, size_t& hi) {
    lo = (pad > k) ? (pad - k + stride - 1) / stride : 0;
    long top = long(len) - 1 + long(pad) - long(k);
    hi = top < 0 ? 0 : std::min(out_len, size_t(top / long(stride)) + 1);
    if (lo > hi) lo = hi;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride, size_t pad) {
    if (x.rank() != 4 || w.rank() != 4) throw std::invalid_argument("conv2d: x must be [N,C,H,W], w [Co,Ci,kh,kw]");
    size_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    size_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != Ci) throw std::invalid_argument("conv2d: channel mismatch");
    if (b.numel() != Co) throw std::invalid_argument("conv2d: bias size mismatch");
    if (stride == 0) throw std::invalid_argument("conv2d: zero stride");
    size_t Ho = (H + 2 * pad - kh) / stride + 1;
    size_t Wo = (W + 2 * pad - kw) / stride + 1;

    Tensor out = Tensor::zeros({N, Co, Ho, Wo});
    auto& od = out.impl()->data;
    const auto& xd = x.values();
    const auto& wd = w.values();
    const auto& bd = b.values();

    std::vector<double> plane(Ho * Wo);
    for (size_t n = 0; n < N; ++n)
        for (size_t co = 0; co < Co; ++co) {
            std::fill(plane.begin(), plane.end(), double(bd[co]));
            for (size_t ci = 0; ci < Ci; ++ci) {
                const float* xc = &xd[(n * Ci + ci) * H * W];
                for (size_t dh = 0; dh < kh; ++dh)
                    for (size_t dw = 0; dw < kw; ++dw) {
                        double wv = wd[((co * Ci + ci) * kh + dh) * kw + dw];
                        if (wv == 0.0) continue;
                        size_t h0, h1, w0, w1;
                        conv_range(H, Ho, stride, pad, dh, h0, h1);
                        conv_range(W, Wo, stride, pad, dw, w0, w1);
                        for (size_t ho = h0; ho < h1; ++ho) {
                            const float* xrow = &xc[(ho * stride + dh - pad) * W];
                            double* prow = &plane[ho * Wo];
                            for (size_t wo = w0; wo < w1; ++wo)
                                prow[wo] += wv * xrow[wo * stride + dw - pad];
                        }
                    }
            }
            float* orow = &od[(n * Co + co) * Ho * Wo];
            for (size_t i = 0; i < plane.size(); ++i) orow[i] = float(plane[i]);
        }

    if (tape_wants({&x, &w, &b})) {
        record_node({x, w, b}, out, [x, w, N, Ci, H, W, Co, kh, kw, Ho, Wo, stride, pad](
                                        const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            const auto& xd = x.values();
            const auto& wd = w.values();
            if (gi[2]) {
                for (size_t co = 0; co < Co; ++co) {
                    double acc = 0;
                    for (size_t n = 0; n < N; ++n) {
                        const float* grow = &g[(n * Co + co) * Ho * Wo];
                        for (size_t i = 0; i < Ho * Wo; ++i) acc += grow[i];
                    }
                    (*gi[2])[co] += float(acc);
                }
            }
            for (size_t n = 0; n < N; ++n)
                for (size_t co = 0; co < Co; ++co) {
                    const float* grow = &g[(n * Co + co) * Ho * Wo];
                    for (size_t ci = 0; ci < Ci; ++ci) {
                        const float* xc = &xd[(n * Ci + ci) * H * W];
                        float* gxc = gi[0] ? &(*gi[0])[(n * Ci + ci) * H * W] : nullptr;
                        for (size_t dh = 0; dh < kh; ++dh)
                            for (size_t dw = 0; dw < kw; ++dw) {
                                size_t widx = ((co * Ci + ci) * kh + dh) * kw + dw;
                                double wv = wd[widx];
                                size_t h0, h1, w0, w1;
                                conv_range(H, Ho, stride, pad, dh, h0, h1);
                                conv_range(W, Wo, stride, pad, dw, w0, w1);
                                double wacc = 0;
                                for (size_t ho = h0; ho < h1; ++ho) {
                                    size_t hi = ho * stride + dh - pad;
                                    const float* gr = &grow[ho * Wo];
                                    const float* xr = &xc[hi * W];
                                    float* gxr = gxc ? &gxc[hi * W] : nullptr;
                                    for (size_t wo = w0; wo < w1; ++wo) {
                                        size_t wi = wo * stride + dw - pad;
                                        if (gi[1]) wacc += double(gr[wo]) * xr[wi];
                                        if (gxr) gxr[wi] += float(wv) * gr[wo];
                                    }
                                }
                                if (gi[1]) (*gi[1])[widx] += float(wacc);
                            }
                    }
                }
        });
    }
    return out;
}

Tensor conv1d_temporal(const Tensor& x, const Tensor& w, const Tensor& b, size_t pad) {
    if (x.rank() != 5 || w.rank() != 3) throw std::invalid_argument("conv1d_temporal: x must be [B,C,F,h,w], w [Co,Ci,k]");
    size_t B = x.dim(0), Ci = x.dim(1), F = x.dim(2), P = x.dim(3) * x.dim(4);
    size_t Co = w.dim(0), k = w.dim(2);
    if (w.dim(1) != Ci) throw std::invalid_argument("conv1d_temporal: channel mismatch");
    if (b.numel() != Co) throw std::invalid_argument("conv1d_temporal: bias size mismatch");
    if (F + 2 * pad < k) throw std::invalid_argument("conv1d_temporal: kernel longer than padded sequence");
    size_t Fo = F + 2 * pad - k + 1;

    Shape os = x.shape();
    os[1] = Co;
    os[2] = Fo;
    Tensor out = Tensor::zeros(os);
    auto& od = out.impl()->data;
    const auto& xd = x.values();
    const auto& wd = w.values();
    const auto& bd = b.values();

    std::vector<double> plane(Fo * P);
    for (size_t n = 0; n < B; ++n)
        for (size_t co = 0; co < Co; ++co) {
            std::fill(plane.begin(), plane.end(), double(bd[co]));
            for (size_t ci = 0; ci < Ci; ++ci) {
                const float* xc = &xd[(n * Ci + ci) * F * P];
                for (size_t dt = 0; dt < k; ++dt) {
                    double wv = wd[(co * Ci + ci) * k + dt];
                    if (wv == 0.0) continue;
                    size_t f0, f1;
                    conv_range(F, Fo, 1, pad, dt, f0, f1);
                    for (size_t fo = f0; fo < f1; ++fo) {
                        const float* xr = &xc[(fo + dt - pad) * P];
                        double* pr = &plane[fo * P];
                        for (size_t p = 0; p < P; ++p) pr[p] += wv * xr[p];
                    }
                }
            }
            float* orow = &od[(n * Co + co) * Fo * P];
            for (size_t i = 0; i < plane.size(); ++i) orow[i] = float(plane[i]);
        }

    if (tape_wants({&x, &w, &b})) {
        record_node({x, w, b}, out, [x, w, B, Ci, F, P, Co, k, Fo, pad](
                                        const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            const auto& xd = x.values();
            const auto& wd = w.values();
            if (gi[2]) {
                for (size_t co = 0; co < Co; ++co) {
                    double acc = 0;
                    for (size_t n = 0; n < B; ++n) {
                        const float* gr = &g[(n * Co + co) * Fo * P];
                        for (size_t i = 0; i < Fo * P; ++i) acc += gr[i];
                    }
                    (*gi[2])[co] += float(acc);
                }
            }
            for (size_t n = 0; n < B; ++n)
                for (size_t co = 0; co < Co; ++co) {
                    const float* grow = &g[(n * Co + co) * Fo * P];
                    for (size_t ci = 0; ci < Ci; ++ci) {
                        const float* xc = &xd[(n * Ci + ci) * F * P];
                        float* gxc = gi[0] ? &(*gi[0])[(n * Ci + ci) * F * P] : nullptr;
                        for (size_t dt = 0; dt < k; ++dt) {
                            size_t widx = (co * Ci + ci) * k + dt;
                            double wv = wd[widx];
                            size_t f0, f1;
                            conv_range(F, Fo, 1, pad, dt, f0, f1);
                            double wacc = 0;
                            for (size_t fo = f0; fo < f1; ++fo) {
                                size_t fi = fo + dt - pad;
                                const float* gr = &grow[fo * P];
                                const float* xr = &xc[fi * P];
                                float* gxr = gxc ? &gxc[fi * P] : nullptr;
                                for (size_t p = 0; p < P; ++p) {
                                    if (gi[1]) wacc += double(gr[p]) * xr[p];
                                    if (gxr) gxr[p] += float(wv) * gr[p];
                                }
                            }
                            if (gi[1]) (*gi[1])[widx] += float(wacc);
                        }
                    }
                }
        });
    }
    return out;
}

Tensor group_norm(const Tensor& x, size_t groups, const Tensor& gamma, const Tensor& beta, float eps) {
    if (x.rank() < 2) throw std::invalid_argument("group_norm: x must be [N,C,...]");
    size_t N = x.dim(0), C = x.dim(1);
    if (groups == 0 || C % groups != 0)
        throw std::invalid_argument("group_norm: " + std::to_string(C) + " channels not divisible by " +
                                    std::to_string(groups) + " groups");
    if (gamma.numel() != C || beta.numel() != C) throw std::invalid_argument("group_norm: affine size mismatch");
    size_t S = x.numel() / (N * C);
    size_t cg = C / groups;  // channels per group
    size_t m = cg * S;       // elements per (sample, group)

    Tensor out = Tensor::zeros(x.shape());
    auto& od = out.impl()->data;
    const auto& xd = x.values();
    const auto& gd = gamma.values();
    const auto& bd = beta.values();

    std::vector<double> means(N * groups), invstds(N * groups);
    for (size_t n = 0; n < N; ++n)
        for (size_t gidx = 0; gidx < groups; ++gidx) {
            const float* base = &xd[(n * C + gidx * cg) * S];
            double sum = 0, sq = 0;
            for (size_t i = 0; i < m; ++i) {
                sum += base[i];
                sq += double(base[i]) * base[i];
            }
            double mu = sum / double(m);
            double var = sq / double(m) - mu * mu;
            if (var < 0) var = 0;
            double inv = 1.0 / std::sqrt(var + double(eps));
            means[n * groups + gidx] = mu;
            invstds[n * groups + gidx] = inv;
            float* obase = &od[(n * C + gidx * cg) * S];
            for (size_t c = 0; c < cg; ++c) {
                float ga = gd[gidx * cg + c], be = bd[gidx * cg + c];
                for (size_t s = 0; s < S; ++s) {
                    size_t i = c * S + s;
                    obase[i] = float((double(base[i]) - mu) * inv) * ga + be;
                }
            }
        }

    if (tape_wants({&x, &gamma, &beta})) {
        record_node({x, gamma, beta}, out, [x, gamma, N, C, S, groups, cg, m, means, invstds](
                                               const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            const auto& xd = x.values();
            const auto& gd = gamma.values();
            for (size_t n = 0; n < N; ++n)
                for (size_t gidx = 0; gidx < groups; ++gidx) {
                    size_t off = (n * C + gidx * cg) * S;
                    const float* xb = &xd[off];
                    const float* gb = &g[off];
                    double mu = means[n * groups + gidx];
                    double inv = invstds[n * groups + gidx];
                    double sum_dxh = 0, sum_dxh_xh = 0;
                    for (size_t c = 0; c < cg; ++c) {
                        double ga = gd[gidx * cg + c];
                        for (size_t s = 0; s < S; ++s) {
                            size_t i = c * S + s;
                            double xh = (double(xb[i]) - mu) * inv;
                            double dxh = double(gb[i]) * ga;
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xh;
                        }
                    }
                    double mean_dxh = sum_dxh / double(m);
                    double mean_dxh_xh = sum_dxh_xh / double(m);
                    for (size_t c = 0; c < cg; ++c) {
                        size_t ch = gidx * cg + c;
                        double ga = gd[ch];
                        double dga = 0, dbe = 0;
                        for (size_t s = 0; s < S; ++s) {
                            size_t i = c * S + s;
                            double xh = (double(xb[i]) - mu) * inv;
                            double dxh = double(gb[i]) * ga;
                            if (gi[0]) (*gi[0])[off + i] += float(inv * (dxh - mean_dxh - xh * mean_dxh_xh));
                            dga += double(gb[i]) * xh;
                            dbe += gb[i];
                        }
                        if (gi[1]) (*gi[1])[ch] += float(dga);
                        if (gi[2]) (*gi[2])[ch] += float(dbe);
                    }
                }
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    size_t C = x.dim(x.rank() - 1);
    Tensor flat = reshape(x, {x.numel() / C, C});
    return reshape(group_norm(flat, 1, gamma, beta, eps), x.shape());
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.rank() != 2) throw std::invalid_argument("linear: w must be [in, out]");
    if (x.dim(x.rank() - 1) != w.dim(0)) throw std::invalid_argument("linear: feature dim mismatch");
    return add(matmul(x, w), b);
}

AttentionParams make_attention(size_t model_dim, size_t kv_dim, size_t heads, Rng& rng) {
    if (heads == 0 || model_dim % heads != 0)
        throw std::invalid_argument("make_attention: model dim must be divisible by head count");
    AttentionParams p;
    p.heads = heads;
    p.head_dim = model_dim / heads;
    p.wq = fan_in_normal({model_dim, model_dim}, model_dim, rng);
    p.wk = fan_in_normal({kv_dim, model_dim}, kv_dim, rng);
    p.wv = fan_in_normal({kv_dim, model_dim}, kv_dim, rng);
    p.wo = fan_in_normal({model_dim, model_dim}, model_dim, rng);
    p.bq = Tensor::zeros({model_dim});
    p.bk = Tensor::zeros({model_dim});
    p.bv = Tensor::zeros({model_dim});
    p.bo = Tensor::zeros({model_dim});
    return p;
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& p) {
    if (q_in.rank() != 3 || kv_in.rank() != 3)
        throw std::invalid_argument("multi_head_attention: inputs must be [B,L,C]");
    size_t B = q_in.dim(0), Lq = q_in.dim(1);
    size_t Lk = kv_in.dim(1);
    if (kv_in.dim(0) != B) throw std::invalid_argument("multi_head_attention: batch mismatch");
    size_t h = p.heads, d = p.head_dim;

    Tensor q = linear(q_in, p.wq, p.bq);   // [B,Lq,h*d]
    Tensor k = linear(kv_in, p.wk, p.bk);  // [B,Lk,h*d]
    Tensor v = linear(kv_in, p.wv, p.bv);

    Tensor qh = permute(reshape(q, {B, Lq, h, d}), {0, 2, 1, 3});  // [B,h,Lq,d]
    Tensor kh = permute(reshape(k, {B, Lk, h, d}), {0, 2, 3, 1});  // [B,h,d,Lk]
    Tensor vh = permute(reshape(v, {B, Lk, h, d}), {0, 2, 1, 3});  // [B,h,Lk,d]

    Tensor scores = mul(matmul(qh, kh), 1.0f / std::sqrt(float(d)));  // [B,h,Lq,Lk]
    Tensor attn = softmax(scores, 3);
    Tensor ctx = matmul(attn, vh);  // [B,h,Lq,d]
    Tensor merged = reshape(permute(ctx, {0, 2, 1, 3}), {B, Lq, h * d});
    return linear(merged, p.wo, p.bo);
}

Tensor timestep_embedding(const std::vector<int>& t, size_t dim) {
    if (dim % 2 != 0) throw std::invalid_argument("timestep_embedding: dim must be even");
    for (int v : t)
        if (v < 0) throw std::invalid_argument("timestep_embedding: negative timestep");
    size_t half = dim / 2;
    std::vector<float> data(t.size() * dim);
    for (size_t j = 0; j < t.size(); ++j)
        for (size_t i = 0; i < half; ++i) {
            double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
            double arg = double(t[j]) * freq;
            data[j * dim + i] = float(std::sin(arg));
            data[j * dim + half + i] = float(std::cos(arg));
        }
    return Tensor::from_data({t.size(), dim}, std::move(data));
}

Tensor upsample_nearest2x(const Tensor& x) {
    if (x.rank() != 4) throw std::invalid_argument("upsample_nearest2x: x must be [N,C,H,W]");
    size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor out = Tensor::zeros({N, C, 2 * H, 2 * W});
    auto& od = out.impl()->data;
    const auto& xd = x.values();
    for (size_t nc = 0; nc < N * C; ++nc)
        for (size_t hh = 0; hh < H; ++hh)
            for (size_t ww = 0; ww < W; ++ww) {
                float v = xd[(nc * H + hh) * W + ww];
                size_t base = (nc * 2 * H + 2 * hh) * 2 * W + 2 * ww;
                od[base] = v;
                od[base + 1] = v;
                od[base + 2 * W] = v;
                od[base + 2 * W + 1] = v;
            }
    if (tape_wants({&x})) {
        record_node({x}, out, [N, C, H, W](const std::vector<float>& g, const std::vector<std::vector<float>*>& gi) {
            if (!gi[0]) return;
            for (size_t nc = 0; nc < N * C; ++nc)
                for (size_t hh = 0; hh < H; ++hh)
                    for (size_t ww = 0; ww < W; ++ww) {
                        size_t base = (nc * 2 * H + 2 * hh) * 2 * W + 2 * ww;
                        (*gi[0])[(nc * H + hh) * W + ww] += g[base] + g[base + 1] + g[base + 2 * W] + g[base + 2 * W + 1];
                    }
        });
    }
    return out;
}

Tensor fan_in_normal(const Shape& shape, size_t fan_in, Rng& rng) {
    Tensor t = Tensor::randn(shape, rng);
    float scale = 1.0f / std::sqrt(float(fan_in));
    for (float& v : t.impl()->data) v *= scale;
    return t;
}

}  // namespace t2v
