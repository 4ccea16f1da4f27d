#pragma once

#include <string>
#include <vector>

#include "t2v/train.hpp"

namespace t2v {

struct EvalResult {
    std::string suite;
    bool pass = false;
    std::vector<std::pair<std::string, double>> metrics;
    std::vector<std::string> notes;
};

// zero-init and schedule properties on a freshly built copy of the model config
EvalResult eval_invariants(const ModelSet& models, const TrainConfig& cfg);

// held-out epsilon-loss with true vs shuffled captions, paired noise draws
EvalResult eval_conditioning(const ModelSet& models, const TrainConfig& cfg, size_t min_draws = 256,
                             uint64_t seed = 0x0ddba11);

// inter-frame MSE of sampled clips vs a frame-shuffled baseline of the same clips
EvalResult eval_smoothness(const ModelSet& models, const TrainConfig& cfg, const SamplerConfig& sampler,
                           size_t num_clips = 4, uint64_t seed = 0x5100f);

}  // namespace t2v
