#pragma once

#include <functional>
#include <optional>
#include <string>

#include "t2v/checkpoint.hpp"
#include "t2v/codec.hpp"
#include "t2v/data.hpp"
#include "t2v/diffusion.hpp"
#include "t2v/optim.hpp"
#include "t2v/text_encoder.hpp"
#include "t2v/unet.hpp"

namespace t2v {

struct TrainConfig {
    double image_fraction = 0.125;  // one image step per 8
    size_t batch_size_image = 16;
    size_t batch_size_video = 4;
    size_t f_video = 8;
    size_t height = 32;
    size_t width = 32;
    float lr = 1e-4f;
    float weight_decay = 0.0f;
    float p_uncond = 0.1f;
    float grad_clip = 1.0f;
    size_t total_steps = 2000;
    uint64_t seed = 42;
    size_t checkpoint_every = 0;  // 0: only the final checkpoint
    size_t log_every = 1;
    bool freeze_text = false;

    size_t sched_steps = 100;
    ScheduleKind sched_kind = ScheduleKind::linear;
    double beta_start = 1e-4;
    double beta_end = 0.05;

    NoiseSchedule schedule() const { return make_schedule(sched_steps, sched_kind, beta_start, beta_end); }
};

enum class BatchDomain { image, video };
const char* to_string(BatchDomain d);

// deterministic interleaving: with fraction 1/8, step 0 of every window of 8
// is the image step
BatchDomain batch_scheduler(size_t step_index, const TrainConfig& cfg);

struct ModelSet {
    UNetParams unet;
    TextEncoder text;
    CodecParams codec;
};

// fresh desk-scale models; the codec arrives untrained
ModelSet build_models(const TrainConfig& cfg, const UNetConfig& ucfg, const STBlockConfig& st,
                      const TextEncoderConfig& tcfg, uint64_t init_seed);

struct TrainHooks {
    std::function<void(size_t step, double loss, BatchDomain domain)> on_log;
    std::function<void(const Checkpoint&, size_t step)> on_checkpoint;
};

// thrown when the loss stops being finite; carries what replay needs
struct TrainAbortError : std::runtime_error {
    size_t step;
    uint64_t rng_seed;
    TrainAbortError(size_t step_, uint64_t seed_)
        : std::runtime_error("training aborted: non-finite loss at step " + std::to_string(step_) +
                             " (seed " + std::to_string(seed_) + ")"),
          step(step_),
          rng_seed(seed_) {}
};

// Runs steps [start_step, cfg.total_steps). The codec must be frozen.
// Emits the final checkpoint through hooks.on_checkpoint.
void train_loop(const TrainConfig& cfg, ModelSet& models, OptimizerState& opt, size_t start_step,
                const TrainHooks& hooks);

Checkpoint make_checkpoint(const ModelSet& models, const OptimizerState& opt, const TrainConfig& cfg,
                           size_t next_step);
// rebuilds models/optimizer from a checkpoint; returns the step to resume at
size_t restore_checkpoint(const Checkpoint& ckpt, ModelSet& models, OptimizerState& opt, TrainConfig& cfg);

// deterministic caption batch synthesis shared by training and eval
struct SynthBatch {
    Tensor latents;  // [B,F,4,h,w]
    std::vector<TokenSeq> tokens;
    std::vector<std::string> captions;
};
SynthBatch synth_batch(Rng& rng, size_t batch, size_t frames, const TrainConfig& cfg,
                       const ModelSet& models);

}  // namespace t2v
