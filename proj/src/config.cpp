#include "t2v/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace t2v {

const std::vector<Config::KeySpec>& Config::registry() {
    static const std::vector<KeySpec> specs = {
        {"train.lr", "1e-4", "AdamW learning rate"},
        {"train.weight_decay", "0", "decoupled weight decay"},
        {"train.total_steps", "2000", "optimizer steps for the run"},
        {"train.seed", "42", "master seed; all per-step streams derive from it"},
        {"train.batch_size_image", "16", "clips per image (F=1) step"},
        {"train.batch_size_video", "4", "clips per video step"},
        {"train.f_video", "8", "frames per video clip"},
        {"train.image_fraction", "0.125", "fraction of steps fed image batches (1/8 default)"},
        {"train.p_uncond", "0.1", "probability of swapping a caption for the empty prompt"},
        {"train.grad_clip", "1", "global gradient-norm clip; 0 disables"},
        {"train.checkpoint_every", "0", "also checkpoint every N steps; 0 = only at the end"},
        {"train.log_every", "1", "emit a loss-trace row every N steps"},
        {"train.freeze_text", "false", "train the UNet only"},
        {"data.height", "32", "pixel height of synthetic clips"},
        {"data.width", "32", "pixel width of synthetic clips"},
        {"sched.steps", "100", "diffusion steps T"},
        {"sched.kind", "linear", "linear or scaled_linear"},
        {"sched.beta_start", "1e-4", "first beta"},
        {"sched.beta_end", "0.05", "last beta"},
        {"unet.base_channels", "32", "channels after the initial conv"},
        {"unet.channel_mults", "1,2", "per-level channel multipliers"},
        {"unet.blocks_per_level", "1", "spatio-temporal blocks per level"},
        {"unet.attention_levels", "0,1", "levels whose blocks carry attention"},
        {"unet.time_dim", "128", "timestep embedding width"},
        {"st.n_spatial_conv", "2", "spatial conv units per block"},
        {"st.n_temporal_conv", "4", "temporal conv units per block"},
        {"st.n_spatial_attn", "2", "spatial attention units per block (first is cross)"},
        {"st.n_temporal_attn", "2", "temporal attention units per block"},
        {"st.heads", "4", "attention heads"},
        {"text.n_p", "16", "max token length"},
        {"text.n_c", "64", "token embedding width (also the UNet context width)"},
        {"text.layers", "2", "transformer layers"},
        {"text.heads", "4", "attention heads"},
        {"codec.train_steps", "2000", "autoencoder training steps before the run"},
        {"codec.batch", "8", "frames per codec step"},
        {"codec.lr", "2e-3", "codec Adam learning rate"},
        {"codec.seed", "7", "codec data/init seed"},
        {"codec.frames", "320", "synthetic frames in the codec dataset"},
        {"codec.heldout", "64", "frames reserved for the PSNR report"},
        {"codec.target_psnr", "25", "held-out PSNR the codec must reach"},
        {"out.dir", "runs/desk", "output directory for checkpoints and the loss trace"},
    };
    return specs;
}

Config Config::defaults() {
    Config c;
    for (const auto& spec : registry()) c.values_[spec.key] = spec.default_value;
    return c;
}

Config Config::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    Config c = defaults();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t\r");
            size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string stripped = trim(line);
        if (stripped.empty()) continue;
        size_t eq = stripped.find('=');
        if (eq == std::string::npos) throw ConfigError("config: expected key=value", lineno);
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        if (!c.values_.count(key)) throw ConfigError("config: unknown key '" + key + "'", lineno);
        c.values_[key] = value;
    }
    return c;
}

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: unregistered key '" + key + "'");
    return it->second;
}

double Config::get_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
        size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
    }
}

uint64_t Config::get_u64(const std::string& key) const {
    const std::string& v = get(key);
    try {
        size_t used = 0;
        unsigned long long u = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
}

bool Config::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<size_t> Config::get_list(const std::string& key) const {
    const std::string& v = get(key);
    std::vector<size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoul(item));
        } catch (const std::exception&) {
            throw ConfigError("config: '" + key + "' expects a comma list of integers, got '" + v + "'");
        }
    }
    if (out.empty()) throw ConfigError("config: '" + key + "' must not be empty");
    return out;
}

void Config::set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw ConfigError("config: unknown key '" + key + "'");
    values_[key] = value;
}

uint64_t Config::effective_hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [k, v] : values_) {
        h = fnv1a(k.data(), k.size(), h);
        h = fnv1a("=", 1, h);
        h = fnv1a(v.data(), v.size(), h);
        h = fnv1a("\n", 1, h);
    }
    return h;
}

TrainConfig Config::train_config() const {
    TrainConfig t;
    t.lr = float(get_double("train.lr"));
    t.weight_decay = float(get_double("train.weight_decay"));
    t.total_steps = get_u64("train.total_steps");
    t.seed = get_u64("train.seed");
    t.batch_size_image = get_u64("train.batch_size_image");
    t.batch_size_video = get_u64("train.batch_size_video");
    t.f_video = get_u64("train.f_video");
    t.image_fraction = get_double("train.image_fraction");
    t.p_uncond = float(get_double("train.p_uncond"));
    t.grad_clip = float(get_double("train.grad_clip"));
    t.checkpoint_every = get_u64("train.checkpoint_every");
    t.log_every = std::max<uint64_t>(1, get_u64("train.log_every"));
    t.freeze_text = get_bool("train.freeze_text");
    t.height = get_u64("data.height");
    t.width = get_u64("data.width");
    t.sched_steps = get_u64("sched.steps");
    const std::string& kind = get("sched.kind");
    if (kind == "linear")
        t.sched_kind = ScheduleKind::linear;
    else if (kind == "scaled_linear")
        t.sched_kind = ScheduleKind::scaled_linear;
    else
        throw ConfigError("config: 'sched.kind' must be linear or scaled_linear");
    t.beta_start = get_double("sched.beta_start");
    t.beta_end = get_double("sched.beta_end");
    return t;
}

UNetConfig Config::unet_config() const {
    UNetConfig u;
    u.base_channels = get_u64("unet.base_channels");
    u.channel_mults = get_list("unet.channel_mults");
    u.blocks_per_level = get_u64("unet.blocks_per_level");
    u.attention_levels = get_list("unet.attention_levels");
    u.time_dim = get_u64("unet.time_dim");
    u.text_dim = get_u64("text.n_c");
    return u;
}

STBlockConfig Config::st_config() const {
    STBlockConfig s;
    s.n_spatial_conv = get_u64("st.n_spatial_conv");
    s.n_temporal_conv = get_u64("st.n_temporal_conv");
    s.n_spatial_attn = get_u64("st.n_spatial_attn");
    s.n_temporal_attn = get_u64("st.n_temporal_attn");
    s.heads = get_u64("st.heads");
    return s;
}

TextEncoderConfig Config::text_config() const {
    TextEncoderConfig t;
    t.n_p = get_u64("text.n_p");
    t.n_c = get_u64("text.n_c");
    t.layers = get_u64("text.layers");
    t.heads = get_u64("text.heads");
    return t;
}

CodecTrainConfig Config::codec_config() const {
    CodecTrainConfig c;
    c.steps = get_u64("codec.train_steps");
    c.batch = get_u64("codec.batch");
    c.lr = float(get_double("codec.lr"));
    c.seed = get_u64("codec.seed");
    c.target_psnr = get_double("codec.target_psnr");
    return c;
}

size_t Config::codec_dataset_frames() const { return get_u64("codec.frames"); }
size_t Config::codec_heldout_frames() const { return get_u64("codec.heldout"); }

}  // namespace t2v
