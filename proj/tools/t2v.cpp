#include <string>

#include "CLI11.hpp"
#include "t2v/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"desk-scale text-to-video latent diffusion"};
    app.require_subcommand(1);

    std::string config_path;
    CLI::App* train = app.add_subcommand("train", "train the codec and the denoising model");
    train->add_option("--config", config_path, "key=value config file")->required();

    std::string ckpt;
    t2v::SampleRequest req;
    CLI::App* sample = app.add_subcommand("sample", "generate a clip from a prompt");
    sample->add_option("--ckpt", ckpt, "checkpoint file")->required();
    sample->add_option("--prompt", req.prompt, "text prompt")->required();
    sample->add_option("--seed", req.seed, "sampling seed")->default_val(0);
    sample->add_option("--frames", req.frames, "frames to generate")->default_val(8);
    sample->add_option("--steps", req.num_steps, "DDIM steps")->default_val(50);
    sample->add_option("--guidance", req.guidance_scale, "classifier-free guidance scale")->default_val(9.0f);
    sample->add_option("--out", req.out_dir, "output directory")->required();

    std::string eval_ckpt, suite;
    CLI::App* eval = app.add_subcommand("eval", "run a verification suite on a checkpoint");
    eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--suite", suite, "invariants | conditioning | smoothness")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return t2v::kExitUsage;
    }

    if (train->parsed()) return t2v::cmd_train(config_path);
    if (sample->parsed()) return t2v::cmd_sample(ckpt, req);
    if (eval->parsed()) return t2v::cmd_eval(eval_ckpt, suite);
    return t2v::kExitUsage;
}
