#pragma once

#include <cstdint>
#include <vector>

#include "t2v/params.hpp"

namespace t2v {

// sub-component counts of one spatio-temporal block
struct STBlockConfig {
    size_t n_spatial_conv = 2;
    size_t n_temporal_conv = 4;
    size_t n_spatial_attn = 2;  // first is cross-attention, the rest self
    size_t n_temporal_attn = 2;
    size_t heads = 4;
};

struct UNetConfig {
    size_t in_channels = 4;
    size_t base_channels = 32;
    std::vector<size_t> channel_mults{1, 2};
    size_t blocks_per_level = 1;
    std::vector<size_t> attention_levels{0, 1};  // levels whose blocks carry attention
    size_t time_dim = 128;
    size_t text_dim = 64;  // conditioning row width N_c

    size_t levels() const { return channel_mults.size(); }

    static UNetConfig desk() { return UNetConfig{}; }
    // for gradient checks: base 8, single level pair, tiny heads
    static UNetConfig tiny() {
        UNetConfig c;
        c.base_channels = 8;
        c.channel_mults = {1, 2};
        c.attention_levels = {0, 1};
        c.time_dim = 16;
        c.text_dim = 8;
        return c;
    }
};

// the order sub-units run inside a block; derived from the counts so
// ablations can permute or re-balance it
enum class SubUnit { spatial_conv, temporal_conv, cross_attn, spatial_attn, temporal_attn };
std::vector<SubUnit> st_block_plan(const STBlockConfig& cfg, bool with_attention);

struct UNetParams {
    UNetConfig cfg;
    STBlockConfig st;
    ParamMap params;
    size_t total_params = 0;
    size_t temporal_params = 0;
};

bool is_temporal_param(const std::string& name);

UNetParams build_unet(const UNetConfig& cfg, const STBlockConfig& st, Rng& rng);

// zeroes the output projection of every temporal conv/attention unit; idempotent
void temporal_zero_init(UNetParams& p);

// z [B,F,4,h,w], context [B,Np,Nc], t per batch item, t >= 0
Tensor unet_forward(const UNetParams& p, const Tensor& z, const Tensor& context, const std::vector<int>& t);

// per-thread forward-path counters; used to assert image and video batches
// traverse identical code
namespace instrument {
struct Counters {
    uint64_t unet_forward = 0;
    uint64_t st_block = 0;
    uint64_t spatial_conv = 0;
    uint64_t temporal_conv = 0;
    uint64_t spatial_attn = 0;
    uint64_t cross_attn = 0;
    uint64_t temporal_attn = 0;

    bool operator==(const Counters&) const = default;
};
Counters& counters();
void reset();
}  // namespace instrument

}  // namespace t2v
