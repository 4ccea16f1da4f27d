#include "t2v/eval.hpp"

#include <algorithm>
#include <cmath>

namespace t2v {

namespace {

double max_frame_deviation(const Tensor& out) {  // vs frame 0, out [1,F,4,h,w]
    size_t F = out.dim(1), fsz = out.numel() / F;
    double dev = 0;
    for (size_t f = 1; f < F; ++f)
        for (size_t i = 0; i < fsz; ++i)
            dev = std::max(dev, std::abs(double(out.values()[f * fsz + i]) - out.values()[i]));
    return dev;
}

double inter_frame_mse(const VideoClip& clip, const std::vector<size_t>& order) {
    size_t F = clip.frames();
    if (F < 2) return 0.0;
    size_t fsz = clip.pixels.numel() / F;
    const auto& d = clip.pixels.values();
    double acc = 0;
    for (size_t f = 0; f + 1 < F; ++f) {
        double mse = 0;
        for (size_t i = 0; i < fsz; ++i) {
            double diff = double(d[order[f] * fsz + i]) - d[order[f + 1] * fsz + i];
            mse += diff * diff;
        }
        acc += mse / double(fsz);
    }
    return acc / double(F - 1);
}

}  // namespace

EvalResult eval_invariants(const ModelSet& models, const TrainConfig& cfg) {
    EvalResult r;
    r.suite = "invariants";
    bool ok = true;

    // fresh zero-init build of the same architecture
    Rng rng(12345);
    UNetParams fresh = build_unet(models.unet.cfg, models.unet.st, rng);

    Rng drng(777);
    Tensor frame = Tensor::randn({1, 1, 4, cfg.height / kSpatialFactor, cfg.width / kSpatialFactor}, drng);
    std::vector<float> rep;
    for (int f = 0; f < 4; ++f) rep.insert(rep.end(), frame.values().begin(), frame.values().end());
    Tensor z = Tensor::from_data({1, 4, 4, frame.dim(3), frame.dim(4)}, std::move(rep));
    Tensor ctx = Tensor::randn({1, 4, fresh.cfg.text_dim}, drng);
    Tensor out = unet_forward(fresh, z, ctx, {3});
    double dev = max_frame_deviation(out);
    r.metrics.emplace_back("zero_init_frame_deviation", dev);
    ok &= dev < 1e-6;

    Tensor zf = Tensor::from_data({1, 1, 4, frame.dim(3), frame.dim(4)}, frame.values());
    Tensor one = unet_forward(fresh, zf, ctx, {3});
    double dev_single = 0;
    for (size_t i = 0; i < one.numel(); ++i)
        dev_single = std::max(dev_single, std::abs(double(out.values()[i]) - one.values()[i]));
    r.metrics.emplace_back("video_vs_image_deviation", dev_single);
    ok &= dev_single < 1e-6;

    NoiseSchedule sched = cfg.schedule();
    bool monotone = true;
    for (size_t t = 1; t < sched.T; ++t)
        if (!(sched.alpha_bar[t] < sched.alpha_bar[t - 1])) monotone = false;
    r.metrics.emplace_back("alpha_bar_monotone", monotone ? 1.0 : 0.0);
    r.metrics.emplace_back("alpha_bar_terminal", sched.alpha_bar[sched.T - 1]);
    ok &= monotone;

    size_t images = 0;
    for (size_t s = 0; s < 8000; ++s)
        if (batch_scheduler(s, cfg) == BatchDomain::image) ++images;
    r.metrics.emplace_back("image_steps_per_8000", double(images));
    if (cfg.image_fraction > 0.0)
        ok &= images == size_t(std::llround(8000.0 * cfg.image_fraction));

    r.pass = ok;
    return r;
}

EvalResult eval_conditioning(const ModelSet& models, const TrainConfig& cfg, size_t min_draws,
                             uint64_t seed) {
    EvalResult r;
    r.suite = "conditioning";
    NoiseSchedule sched = cfg.schedule();
    DenoiseModel model = [&](const Tensor& z, const Tensor& c, const std::vector<int>& t) {
        return unet_forward(models.unet, z, c, t);
    };

    Rng base(seed);
    size_t batch = 8;
    size_t batches = (min_draws + batch - 1) / batch;
    double loss_true = 0, loss_shuffled = 0;

    for (size_t b = 0; b < batches; ++b) {
        Rng data_rng = base.split(2 * b);
        SynthBatch sb = synth_batch(data_rng, batch, cfg.f_video, cfg, models);

        // mismatched captions: rotate until the caption actually differs
        std::vector<TokenSeq> wrong(batch);
        for (size_t i = 0; i < batch; ++i) {
            size_t j = (i + 1) % batch;
            while (j != i && sb.captions[j] == sb.captions[i]) j = (j + 1) % batch;
            wrong[i] = sb.tokens[j];
        }

        Tensor ctx_true = encode_text(models.text, sb.tokens);
        Tensor ctx_wrong = encode_text(models.text, wrong);
        Tensor nullctx = null_embedding(models.text);

        uint64_t noise_stream = base.split(2 * b + 1).seed();
        Rng r1(noise_stream), r2(noise_stream);  // paired t and eps draws
        loss_true += training_loss(sb.latents, ctx_true, nullctx, model, sched, r1, 0.0f).item64();
        loss_shuffled += training_loss(sb.latents, ctx_wrong, nullctx, model, sched, r2, 0.0f).item64();
    }
    loss_true /= double(batches);
    loss_shuffled /= double(batches);
    r.metrics.emplace_back("draws", double(batches * batch));
    r.metrics.emplace_back("loss_true_captions", loss_true);
    r.metrics.emplace_back("loss_shuffled_captions", loss_shuffled);
    r.pass = loss_true < loss_shuffled;
    return r;
}

EvalResult eval_smoothness(const ModelSet& models, const TrainConfig& cfg, const SamplerConfig& sampler,
                           size_t num_clips, uint64_t seed) {
    EvalResult r;
    r.suite = "smoothness";
    NoiseSchedule sched = cfg.schedule();
    DenoiseModel model = [&](const Tensor& z, const Tensor& c, const std::vector<int>& t) {
        return unet_forward(models.unet, z, c, t);
    };
    const char* prompts[] = {
        "a red square moving right",
        "a blue circle moving up",
        "a green triangle moving left",
        "a yellow square moving down",
    };
    Tensor nullctx = null_embedding(models.text);
    Shape latent{cfg.f_video, kLatentChannels, cfg.height / kSpatialFactor, cfg.width / kSpatialFactor};

    double smooth = 0, shuffled = 0;
    std::vector<size_t> identity(cfg.f_video);
    for (size_t f = 0; f < cfg.f_video; ++f) identity[f] = f;

    Rng shuffle_rng(seed ^ 0x9e3779b9u);
    for (size_t k = 0; k < num_clips; ++k) {
        Tensor ctx = encode_text(models.text,
                                 tokenize(prompts[k % 4], models.text.vocab, models.text.cfg.n_p));
        Rng rng(seed + k);
        Tensor z = ddim_sample(model, ctx, nullctx, latent, sampler, sched, rng);
        VideoClip clip = decode(z, models.codec);
        smooth += inter_frame_mse(clip, identity);

        double sh = 0;
        size_t reps = 3;
        for (size_t rep = 0; rep < reps; ++rep) {
            std::vector<size_t> order = identity;
            for (size_t f = order.size(); f > 1; --f)
                std::swap(order[f - 1], order[shuffle_rng.next_below(f)]);
            sh += inter_frame_mse(clip, order);
        }
        shuffled += sh / double(reps);
    }
    smooth /= double(num_clips);
    shuffled /= double(num_clips);
    r.metrics.emplace_back("clips", double(num_clips));
    r.metrics.emplace_back("inter_frame_mse", smooth);
    r.metrics.emplace_back("shuffled_frame_mse", shuffled);
    r.pass = smooth < shuffled;
    return r;
}

}  // namespace t2v
