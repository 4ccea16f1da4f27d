#pragma once

#include <functional>

#include "t2v/params.hpp"

namespace t2v {

constexpr size_t kSpatialFactor = 8;
constexpr size_t kLatentChannels = 4;

// pixel-space clip, [F,H,W,3] in [0,1]
struct VideoClip {
    Tensor pixels;

    VideoClip() = default;
    explicit VideoClip(Tensor t);

    size_t frames() const { return pixels.dim(0); }
    size_t height() const { return pixels.dim(1); }
    size_t width() const { return pixels.dim(2); }
};

enum class CodecKind {
    block_mean,  // exact per-8x8-block mean / nearest upsample; for tests
    conv,        // trainable strided conv autoencoder
};

struct CodecParams {
    CodecKind kind = CodecKind::conv;
    ParamMap params;  // empty for block_mean
    bool frozen = false;

    void freeze() {
        frozen = true;
        params.set_trainable(false);
    }
};

CodecParams make_block_codec();
CodecParams make_conv_codec(Rng& rng);

// frames encoded independently -> [F,4,H/8,W/8]
Tensor encode(const VideoClip& v, const CodecParams& codec);
// per-frame decoding, output clamped to [0,1]
VideoClip decode(const Tensor& z, const CodecParams& codec);

// 10*log10(1/MSE) for unit-range tensors
double psnr(const Tensor& a, const Tensor& b);

struct CodecTrainConfig {
    size_t steps = 2000;
    size_t batch = 8;
    float lr = 2e-3f;
    uint64_t seed = 7;
    double target_psnr = 25.0;
};

struct CodecTrainResult {
    CodecParams codec;
    double heldout_psnr = 0.0;
    bool converged = false;
};

// frames: [H,W,3] pixel tensors; the last `heldout` entries are never trained on
CodecTrainResult train_codec(const std::vector<Tensor>& frames, size_t heldout, const CodecTrainConfig& cfg);

}  // namespace t2v
