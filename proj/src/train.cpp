#include "t2v/train.hpp"

#include <cmath>
#include <sstream>

namespace t2v {

const char* to_string(BatchDomain d) { return d == BatchDomain::image ? "image" : "video"; }

BatchDomain batch_scheduler(size_t step_index, const TrainConfig& cfg) {
    if (cfg.image_fraction <= 0.0) return BatchDomain::video;
    size_t period = size_t(std::llround(1.0 / cfg.image_fraction));
    if (period < 1) period = 1;
    return step_index % period == 0 ? BatchDomain::image : BatchDomain::video;
}

ModelSet build_models(const TrainConfig& cfg, const UNetConfig& ucfg, const STBlockConfig& st,
                      const TextEncoderConfig& tcfg, uint64_t init_seed) {
    if (ucfg.text_dim != tcfg.n_c)
        throw std::invalid_argument("build_models: unet text_dim must equal text encoder n_c");
    (void)cfg;
    ModelSet m;
    Rng unet_rng = Rng(init_seed).split(1);
    Rng text_rng = Rng(init_seed).split(2);
    Rng codec_rng = Rng(init_seed).split(3);
    m.unet = build_unet(ucfg, st, unet_rng);
    m.text = make_text_encoder(tcfg, Vocabulary::synthetic(), text_rng);
    m.codec = make_conv_codec(codec_rng);
    return m;
}

SynthBatch synth_batch(Rng& rng, size_t batch, size_t frames, const TrainConfig& cfg,
                       const ModelSet& models) {
    SynthBatch out;
    std::vector<Tensor> latents;
    latents.reserve(batch);
    for (size_t i = 0; i < batch; ++i) {
        ClipSpec spec = random_clip_spec(rng, frames, cfg.height, cfg.width);
        CaptionedClip cc = generate_clip(spec);
        Tensor z = encode(cc.clip, models.codec);  // [F,4,h,w]
        latents.push_back(reshape(z, {1, z.dim(0), z.dim(1), z.dim(2), z.dim(3)}));
        out.tokens.push_back(tokenize(cc.caption, models.text.vocab, models.text.cfg.n_p));
        out.captions.push_back(std::move(cc.caption));
    }
    out.latents = latents.size() == 1 ? latents[0] : concat(latents, 0);
    return out;
}

void train_loop(const TrainConfig& cfg, ModelSet& models, OptimizerState& opt, size_t start_step,
                const TrainHooks& hooks) {
    if (!models.codec.frozen) throw std::invalid_argument("train_loop: codec must be frozen");
    NoiseSchedule sched = cfg.schedule();
    Rng base(cfg.seed);

    if (cfg.freeze_text) models.text.params.set_trainable(false);

    AdamWConfig adam;
    adam.lr = cfg.lr;
    adam.weight_decay = cfg.weight_decay;
    std::vector<ParamMap*> trainable{&models.unet.params};
    if (!cfg.freeze_text) trainable.push_back(&models.text.params);

    DenoiseModel model = [&](const Tensor& z, const Tensor& c, const std::vector<int>& t) {
        return unet_forward(models.unet, z, c, t);
    };

    for (size_t step = start_step; step < cfg.total_steps; ++step) {
        BatchDomain domain = batch_scheduler(step, cfg);
        size_t batch = domain == BatchDomain::image ? cfg.batch_size_image : cfg.batch_size_video;
        size_t frames = domain == BatchDomain::image ? 1 : cfg.f_video;

        Rng data_rng = base.split(2 * step + 1);
        SynthBatch sb = synth_batch(data_rng, batch, frames, cfg, models);

        Rng loss_rng = base.split(2 * step + 2);
        double loss_value;
        {
            GradTape tape;
            Tensor context = encode_text(models.text, sb.tokens);
            Tensor nullctx = null_embedding(models.text);
            Tensor loss = training_loss(sb.latents, context, nullctx, model, sched, loss_rng, cfg.p_uncond);
            loss_value = loss.item64();
            if (!std::isfinite(loss_value)) throw TrainAbortError(step, cfg.seed);
            tape.backward(loss);
        }
        adamw_update(trainable, opt, adam, cfg.grad_clip);
        for (ParamMap* pm : trainable) pm->zero_grads();

        if (hooks.on_log && step % cfg.log_every == 0) hooks.on_log(step, loss_value, domain);
        if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
            step + 1 < cfg.total_steps)
            hooks.on_checkpoint(make_checkpoint(models, opt, cfg, step + 1), step + 1);
    }
    if (hooks.on_checkpoint)
        hooks.on_checkpoint(make_checkpoint(models, opt, cfg, cfg.total_steps), cfg.total_steps);
}

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string join_mults(const std::vector<size_t>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<size_t> split_mults(const std::string& s) {
    std::vector<size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
    return out;
}

}  // namespace

Checkpoint make_checkpoint(const ModelSet& models, const OptimizerState& opt, const TrainConfig& cfg,
                           size_t next_step) {
    Checkpoint ck;
    for (const auto& [name, t] : models.unet.params.tensors) ck.tensors.emplace(name, t.clone());
    for (const auto& [name, t] : models.text.params.tensors) ck.tensors.emplace(name, t.clone());
    for (const auto& [name, t] : models.codec.params.tensors) ck.tensors.emplace(name, t.clone());
    for (const auto& [name, t] : opt.m) ck.tensors.emplace("opt.m." + name, t.clone());
    for (const auto& [name, t] : opt.v) ck.tensors.emplace("opt.v." + name, t.clone());

    auto& c = ck.config;
    c["train.image_fraction"] = fmt_double(cfg.image_fraction);
    c["train.batch_size_image"] = std::to_string(cfg.batch_size_image);
    c["train.batch_size_video"] = std::to_string(cfg.batch_size_video);
    c["train.f_video"] = std::to_string(cfg.f_video);
    c["train.height"] = std::to_string(cfg.height);
    c["train.width"] = std::to_string(cfg.width);
    c["train.lr"] = fmt_double(cfg.lr);
    c["train.weight_decay"] = fmt_double(cfg.weight_decay);
    c["train.p_uncond"] = fmt_double(cfg.p_uncond);
    c["train.grad_clip"] = fmt_double(cfg.grad_clip);
    c["train.total_steps"] = std::to_string(cfg.total_steps);
    c["train.seed"] = std::to_string(cfg.seed);
    c["train.checkpoint_every"] = std::to_string(cfg.checkpoint_every);
    c["train.log_every"] = std::to_string(cfg.log_every);
    c["train.freeze_text"] = cfg.freeze_text ? "1" : "0";
    c["sched.steps"] = std::to_string(cfg.sched_steps);
    c["sched.kind"] = cfg.sched_kind == ScheduleKind::linear ? "linear" : "scaled_linear";
    c["sched.beta_start"] = fmt_double(cfg.beta_start);
    c["sched.beta_end"] = fmt_double(cfg.beta_end);
    c["train.next_step"] = std::to_string(next_step);
    c["opt.step"] = std::to_string(opt.step);
    c["rng.seed"] = std::to_string(cfg.seed);
    c["rng.counter"] = "0";

    const UNetConfig& u = models.unet.cfg;
    c["unet.base_channels"] = std::to_string(u.base_channels);
    c["unet.channel_mults"] = join_mults(u.channel_mults);
    c["unet.blocks_per_level"] = std::to_string(u.blocks_per_level);
    c["unet.attention_levels"] = join_mults(u.attention_levels);
    c["unet.time_dim"] = std::to_string(u.time_dim);
    c["unet.text_dim"] = std::to_string(u.text_dim);
    const STBlockConfig& st = models.unet.st;
    c["st.n_spatial_conv"] = std::to_string(st.n_spatial_conv);
    c["st.n_temporal_conv"] = std::to_string(st.n_temporal_conv);
    c["st.n_spatial_attn"] = std::to_string(st.n_spatial_attn);
    c["st.n_temporal_attn"] = std::to_string(st.n_temporal_attn);
    c["st.heads"] = std::to_string(st.heads);
    const TextEncoderConfig& t = models.text.cfg;
    c["text.n_p"] = std::to_string(t.n_p);
    c["text.n_c"] = std::to_string(t.n_c);
    c["text.layers"] = std::to_string(t.layers);
    c["text.heads"] = std::to_string(t.heads);
    c["codec.kind"] = models.codec.kind == CodecKind::conv ? "conv" : "block_mean";
    return ck;
}

size_t restore_checkpoint(const Checkpoint& ck, ModelSet& models, OptimizerState& opt, TrainConfig& cfg) {
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = ck.config.find(key);
        if (it == ck.config.end()) throw std::runtime_error("checkpoint: missing config key " + key);
        return it->second;
    };

    cfg.image_fraction = std::stod(need("train.image_fraction"));
    cfg.batch_size_image = std::stoul(need("train.batch_size_image"));
    cfg.batch_size_video = std::stoul(need("train.batch_size_video"));
    cfg.f_video = std::stoul(need("train.f_video"));
    cfg.height = std::stoul(need("train.height"));
    cfg.width = std::stoul(need("train.width"));
    cfg.lr = std::stof(need("train.lr"));
    cfg.weight_decay = std::stof(need("train.weight_decay"));
    cfg.p_uncond = std::stof(need("train.p_uncond"));
    cfg.grad_clip = std::stof(need("train.grad_clip"));
    cfg.total_steps = std::stoul(need("train.total_steps"));
    cfg.seed = std::stoull(need("train.seed"));
    cfg.checkpoint_every = std::stoul(need("train.checkpoint_every"));
    cfg.log_every = std::stoul(need("train.log_every"));
    cfg.freeze_text = need("train.freeze_text") == "1";
    cfg.sched_steps = std::stoul(need("sched.steps"));
    cfg.sched_kind = need("sched.kind") == "linear" ? ScheduleKind::linear : ScheduleKind::scaled_linear;
    cfg.beta_start = std::stod(need("sched.beta_start"));
    cfg.beta_end = std::stod(need("sched.beta_end"));

    UNetConfig u;
    u.base_channels = std::stoul(need("unet.base_channels"));
    u.channel_mults = split_mults(need("unet.channel_mults"));
    u.blocks_per_level = std::stoul(need("unet.blocks_per_level"));
    u.attention_levels = split_mults(need("unet.attention_levels"));
    u.time_dim = std::stoul(need("unet.time_dim"));
    u.text_dim = std::stoul(need("unet.text_dim"));
    STBlockConfig st;
    st.n_spatial_conv = std::stoul(need("st.n_spatial_conv"));
    st.n_temporal_conv = std::stoul(need("st.n_temporal_conv"));
    st.n_spatial_attn = std::stoul(need("st.n_spatial_attn"));
    st.n_temporal_attn = std::stoul(need("st.n_temporal_attn"));
    st.heads = std::stoul(need("st.heads"));
    TextEncoderConfig t;
    t.n_p = std::stoul(need("text.n_p"));
    t.n_c = std::stoul(need("text.n_c"));
    t.layers = std::stoul(need("text.layers"));
    t.heads = std::stoul(need("text.heads"));

    models = build_models(cfg, u, st, t, /*init_seed=*/cfg.seed);
    if (need("codec.kind") == "block_mean") models.codec = make_block_codec();

    auto load_map = [&](ParamMap& pm, const std::string& label) {
        for (auto& [name, t2] : pm.tensors) {
            auto it = ck.tensors.find(name);
            if (it == ck.tensors.end())
                throw std::runtime_error("checkpoint: missing tensor " + name + " for " + label);
            if (it->second.shape() != t2.shape())
                throw std::runtime_error("checkpoint: shape mismatch for " + name);
            t2.impl()->data = it->second.values();
        }
    };
    load_map(models.unet.params, "unet");
    load_map(models.text.params, "text encoder");
    load_map(models.codec.params, "codec");
    models.codec.freeze();

    opt = OptimizerState{};
    opt.step = std::stoul(need("opt.step"));
    for (const auto& [name, t2] : ck.tensors) {
        if (name.starts_with("opt.m.")) opt.m.emplace(name.substr(6), t2.clone());
        if (name.starts_with("opt.v.")) opt.v.emplace(name.substr(6), t2.clone());
    }
    return std::stoul(need("train.next_step"));
}

}  // namespace t2v
