#include "t2v/codec.hpp"

#include <cmath>
#include <stdexcept>

#include "t2v/optim.hpp"

namespace t2v {

VideoClip::VideoClip(Tensor t) {
    if (t.rank() != 4 || t.dim(3) != 3)
        throw std::invalid_argument("VideoClip: pixels must be [F,H,W,3], got " + shape_str(t.shape()));
    pixels = std::move(t);
}

CodecParams make_block_codec() {
    CodecParams c;
    c.kind = CodecKind::block_mean;
    c.frozen = true;
    return c;
}

CodecParams make_conv_codec(Rng& rng) {
    CodecParams c;
    c.kind = CodecKind::conv;
    ParamMap& p = c.params;
    auto conv = [&](const std::string& name, size_t ci, size_t co) {
        p.add("codec." + name + ".weight", fan_in_normal({co, ci, 3, 3}, ci * 9, rng));
        p.add("codec." + name + ".bias", Tensor::zeros({co}));
    };
    conv("enc.conv0", 3, 32);
    conv("enc.conv1", 32, 64);
    conv("enc.conv2", 64, kLatentChannels);
    conv("dec.conv0", kLatentChannels, 64);
    conv("dec.conv1", 64, 32);
    conv("dec.conv2", 32, 16);
    conv("dec.conv3", 16, 3);
    return c;
}

namespace {

// [F,H,W,3] -> [F,3,H,W]
Tensor to_chw(const Tensor& pixels) { return permute(pixels, {0, 3, 1, 2}); }
// [F,3,H,W] -> [F,H,W,3]
Tensor to_hwc(const Tensor& x) { return permute(x, {0, 2, 3, 1}); }

Tensor conv_encode(const Tensor& x /*[F,3,H,W]*/, const ParamMap& p) {
    Tensor h = silu(conv2d(x, p.at("codec.enc.conv0.weight"), p.at("codec.enc.conv0.bias"), 2, 1));
    h = silu(conv2d(h, p.at("codec.enc.conv1.weight"), p.at("codec.enc.conv1.bias"), 2, 1));
    return conv2d(h, p.at("codec.enc.conv2.weight"), p.at("codec.enc.conv2.bias"), 2, 1);
}

Tensor conv_decode_raw(const Tensor& z /*[F,4,h,w]*/, const ParamMap& p) {
    Tensor h = upsample_nearest2x(silu(conv2d(z, p.at("codec.dec.conv0.weight"), p.at("codec.dec.conv0.bias"))));
    h = upsample_nearest2x(silu(conv2d(h, p.at("codec.dec.conv1.weight"), p.at("codec.dec.conv1.bias"))));
    h = upsample_nearest2x(silu(conv2d(h, p.at("codec.dec.conv2.weight"), p.at("codec.dec.conv2.bias"))));
    return conv2d(h, p.at("codec.dec.conv3.weight"), p.at("codec.dec.conv3.bias"));
}

Tensor block_encode(const Tensor& x /*[F,3,H,W]*/) {
    size_t F = x.dim(0), H = x.dim(2), W = x.dim(3);
    size_t h = H / kSpatialFactor, w = W / kSpatialFactor;
    std::vector<float> out(F * kLatentChannels * h * w, 0.0f);
    const auto& xd = x.values();
    for (size_t f = 0; f < F; ++f)
        for (size_t c = 0; c < 3; ++c)
            for (size_t by = 0; by < h; ++by)
                for (size_t bx = 0; bx < w; ++bx) {
                    double acc = 0;
                    for (size_t dy = 0; dy < kSpatialFactor; ++dy)
                        for (size_t dx = 0; dx < kSpatialFactor; ++dx)
                            acc += xd[((f * 3 + c) * H + by * kSpatialFactor + dy) * W + bx * kSpatialFactor + dx];
                    out[((f * kLatentChannels + c) * h + by) * w + bx] =
                        float(acc / double(kSpatialFactor * kSpatialFactor));
                }
    return Tensor::from_data({F, kLatentChannels, h, w}, std::move(out));
}

Tensor block_decode(const Tensor& z /*[F,4,h,w]*/) {
    size_t F = z.dim(0), h = z.dim(2), w = z.dim(3);
    size_t H = h * kSpatialFactor, W = w * kSpatialFactor;
    std::vector<float> out(F * 3 * H * W);
    const auto& zd = z.values();
    for (size_t f = 0; f < F; ++f)
        for (size_t c = 0; c < 3; ++c)
            for (size_t y = 0; y < H; ++y)
                for (size_t x = 0; x < W; ++x)
                    out[((f * 3 + c) * H + y) * W + x] =
                        zd[((f * kLatentChannels + c) * h + y / kSpatialFactor) * w + x / kSpatialFactor];
    return Tensor::from_data({F, 3, H, W}, std::move(out));
}

}  // namespace

Tensor encode(const VideoClip& v, const CodecParams& codec) {
    if (v.height() % kSpatialFactor != 0 || v.width() % kSpatialFactor != 0)
        throw std::invalid_argument("encode: H and W must be divisible by " + std::to_string(kSpatialFactor));
    Tensor x = to_chw(v.pixels);
    return codec.kind == CodecKind::block_mean ? block_encode(x) : conv_encode(x, codec.params);
}

VideoClip decode(const Tensor& z, const CodecParams& codec) {
    if (z.rank() != 4 || z.dim(1) != kLatentChannels)
        throw std::invalid_argument("decode: latent must be [F,4,h,w], got " + shape_str(z.shape()));
    Tensor x = codec.kind == CodecKind::block_mean ? block_decode(z) : conv_decode_raw(z, codec.params);
    return VideoClip(clamp(to_hwc(x), 0.0f, 1.0f));
}

double psnr(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw std::invalid_argument("psnr: size mismatch");
    double mse = 0;
    for (size_t i = 0; i < a.numel(); ++i) {
        double d = double(a.values()[i]) - b.values()[i];
        mse += d * d;
    }
    mse /= double(a.numel());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

CodecTrainResult train_codec(const std::vector<Tensor>& frames, size_t heldout, const CodecTrainConfig& cfg) {
    if (frames.size() <= heldout) throw std::invalid_argument("train_codec: no training frames");
    size_t ntrain = frames.size() - heldout;
    Rng rng(cfg.seed);

    CodecTrainResult res;
    res.codec = make_conv_codec(rng);
    OptimizerState opt;
    AdamWConfig adam;
    adam.lr = cfg.lr;

    for (size_t step = 0; step < cfg.steps; ++step) {
        Rng step_rng = rng.split(step);
        std::vector<Tensor> batch;
        batch.reserve(cfg.batch);
        for (size_t i = 0; i < cfg.batch; ++i) {
            const Tensor& fr = frames[step_rng.next_below(ntrain)];
            batch.push_back(reshape(fr, {1, fr.dim(0), fr.dim(1), 3}));
        }
        Tensor x = to_chw(concat(batch, 0));
        {
            GradTape tape;
            Tensor rec = conv_decode_raw(conv_encode(x, res.codec.params), res.codec.params);
            Tensor d = sub(rec, x);
            tape.backward(reduce_mean(mul(d, d)));
        }
        std::vector<ParamMap*> maps{&res.codec.params};
        adamw_update(maps, opt, adam, 0.0f);
        res.codec.params.zero_grads();
    }

    // held-out PSNR through the clamped inference path
    double acc = 0;
    size_t count = 0;
    for (size_t i = frames.size() - heldout; i < frames.size(); ++i) {
        VideoClip v(reshape(frames[i], {1, frames[i].dim(0), frames[i].dim(1), 3}));
        VideoClip rec = decode(encode(v, res.codec), res.codec);
        acc += psnr(v.pixels, rec.pixels);
        ++count;
    }
    res.heldout_psnr = count ? acc / double(count) : 0.0;
    res.converged = res.heldout_psnr > cfg.target_psnr;
    res.codec.freeze();
    return res;
}

}  // namespace t2v
