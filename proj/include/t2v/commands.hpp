#pragma once

#include <string>

#include "t2v/diffusion.hpp"

namespace t2v {

// process exit codes shared by every subcommand
constexpr int kExitOk = 0;
constexpr int kExitFail = 1;    // an eval suite ran and did not pass
constexpr int kExitUsage = 2;   // bad arguments, config, or input files
constexpr int kExitRuntime = 3;  // aborted mid-run (e.g. non-finite loss)

struct SampleRequest {
    std::string prompt;
    uint64_t seed = 0;
    size_t frames = 8;
    size_t num_steps = 50;
    float guidance_scale = 9.0f;
    std::string out_dir;
};

int cmd_train(const std::string& config_path);
int cmd_sample(const std::string& ckpt_path, const SampleRequest& req);
int cmd_eval(const std::string& ckpt_path, const std::string& suite);

}  // namespace t2v
