#include "t2v/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "t2v/config.hpp"
#include "t2v/eval.hpp"
#include "t2v/image_io.hpp"

namespace t2v {

namespace {

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)v);
    return buf;
}

uint64_t config_map_hash(const std::map<std::string, std::string>& entries) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [k, v] : entries) {
        h = fnv1a(k.data(), k.size(), h);
        h = fnv1a("=", 1, h);
        h = fnv1a(v.data(), v.size(), h);
        h = fnv1a("\n", 1, h);
    }
    return h;
}

std::vector<Tensor> codec_dataset(const TrainConfig& tc, size_t count, uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor> frames;
    frames.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        ClipSpec spec = random_clip_spec(rng, 1, tc.height, tc.width);
        frames.push_back(reshape(generate_clip(spec).clip.pixels, {tc.height, tc.width, 3}));
    }
    return frames;
}

}  // namespace

int cmd_train(const std::string& config_path) {
    Config cfg;
    try {
        cfg = Config::from_file(config_path);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    try {
        TrainConfig tc = cfg.train_config();
        std::string out_dir = cfg.out_dir();
        std::filesystem::create_directories(out_dir);

        ModelSet models = build_models(tc, cfg.unet_config(), cfg.st_config(), cfg.text_config(), tc.seed);
        std::printf("unet parameters: %zu total, %zu temporal (%.1f%%)\n", models.unet.total_params,
                    models.unet.temporal_params,
                    100.0 * double(models.unet.temporal_params) / double(models.unet.total_params));

        CodecTrainConfig cc = cfg.codec_config();
        auto frames = codec_dataset(tc, cfg.codec_dataset_frames(), cc.seed);
        std::printf("training codec: %zu steps on %zu frames...\n", cc.steps, frames.size());
        CodecTrainResult codec = train_codec(frames, cfg.codec_heldout_frames(), cc);
        std::printf("codec held-out PSNR: %.2f dB (target %.1f) %s\n", codec.heldout_psnr, cc.target_psnr,
                    codec.converged ? "" : "[did not converge]");
        models.codec = codec.codec;

        std::ofstream csv(out_dir + "/loss.csv", std::ios::trunc);
        if (!csv) throw std::runtime_error("cannot write " + out_dir + "/loss.csv");
        csv.precision(8);

        OptimizerState opt;
        TrainHooks hooks;
        hooks.on_log = [&](size_t step, double loss, BatchDomain domain) {
            csv << step << "," << loss << "," << to_string(domain) << "\n";
        };
        hooks.on_checkpoint = [&](const Checkpoint& ck, size_t step) {
            std::string path = step == tc.total_steps
                                   ? out_dir + "/checkpoint.bin"
                                   : out_dir + "/checkpoint_" + std::to_string(step) + ".bin";
            save_checkpoint(ck, path);
            std::printf("checkpoint written: %s\n", path.c_str());
        };
        train_loop(tc, models, opt, 0, hooks);
        csv.close();
        std::printf("loss trace: %s/loss.csv\n", out_dir.c_str());
        return kExitOk;
    } catch (const TrainAbortError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
}

int cmd_sample(const std::string& ckpt_path, const SampleRequest& req) {
    ModelSet models;
    OptimizerState opt;
    TrainConfig tc;
    Checkpoint ck;
    try {
        ck = load_checkpoint(ckpt_path);
        restore_checkpoint(ck, models, opt, tc);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    try {
        if (req.frames < 1) throw std::invalid_argument("sample: --frames must be >= 1");
        SamplerConfig sampler;
        sampler.num_steps = req.num_steps;
        sampler.guidance_scale = req.guidance_scale;

        Tensor ctx = encode_text(models.text, tokenize(req.prompt, models.text.vocab, models.text.cfg.n_p));
        Tensor nullctx = null_embedding(models.text);
        DenoiseModel model = [&](const Tensor& z, const Tensor& c, const std::vector<int>& t) {
            return unet_forward(models.unet, z, c, t);
        };
        Shape latent{req.frames, kLatentChannels, tc.height / kSpatialFactor, tc.width / kSpatialFactor};
        Rng rng(req.seed);
        Tensor z0 = ddim_sample(model, ctx, nullctx, latent, sampler, tc.schedule(), rng);
        VideoClip clip = decode(z0, models.codec);
        auto files = export_frames(clip, req.out_dir);

        nlohmann::json manifest;
        manifest["prompt"] = req.prompt;
        manifest["seed"] = req.seed;
        manifest["frames"] = req.frames;
        manifest["steps"] = req.num_steps;
        manifest["guidance_scale"] = req.guidance_scale;
        manifest["checkpoint"] = ckpt_path;
        manifest["config_hash"] = hex64(config_map_hash(ck.config));
        manifest["frame_files"] = files;
        std::ofstream mf(req.out_dir + "/manifest.json", std::ios::trunc);
        mf << manifest.dump(2) << "\n";
        if (!mf) throw std::runtime_error("cannot write " + req.out_dir + "/manifest.json");

        std::printf("wrote %zu frames + manifest to %s\n", files.size(), req.out_dir.c_str());
        return kExitOk;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
}

int cmd_eval(const std::string& ckpt_path, const std::string& suite) {
    if (suite != "invariants" && suite != "conditioning" && suite != "smoothness") {
        std::fprintf(stderr, "error: unknown suite '%s' (expected invariants|conditioning|smoothness)\n",
                     suite.c_str());
        return kExitUsage;
    }
    ModelSet models;
    OptimizerState opt;
    TrainConfig tc;
    try {
        restore_checkpoint(load_checkpoint(ckpt_path), models, opt, tc);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    try {
        EvalResult r;
        if (suite == "invariants") {
            r = eval_invariants(models, tc);
        } else if (suite == "conditioning") {
            r = eval_conditioning(models, tc);
        } else {
            SamplerConfig sampler;
            sampler.num_steps = std::min<size_t>(50, tc.sched_steps);
            r = eval_smoothness(models, tc, sampler);
        }
        for (const auto& [name, value] : r.metrics) std::printf("%s.%s = %.6g\n", r.suite.c_str(), name.c_str(), value);
        std::printf("%s: %s\n", r.suite.c_str(), r.pass ? "PASS" : "FAIL");
        return r.pass ? kExitOk : kExitFail;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
}

}  // namespace t2v
