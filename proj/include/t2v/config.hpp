#pragma once

#include <map>
#include <string>
#include <vector>

#include "t2v/codec.hpp"
#include "t2v/train.hpp"

namespace t2v {

struct ConfigError : std::runtime_error {
    int line;  // 0 when no line applies
    ConfigError(const std::string& msg, int line_ = 0)
        : std::runtime_error(line_ ? msg + " (line " + std::to_string(line_) + ")" : msg), line(line_) {}
};

// key=value configuration with '#' comments and a closed key registry
class Config {
public:
    struct KeySpec {
        std::string key;
        std::string default_value;
        std::string doc;
    };
    static const std::vector<KeySpec>& registry();

    static Config defaults();
    static Config from_file(const std::string& path);  // unknown keys rejected with line numbers

    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    uint64_t get_u64(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<size_t> get_list(const std::string& key) const;

    void set(const std::string& key, const std::string& value);  // key must be registered

    // FNV-1a over the sorted effective key=value pairs
    uint64_t effective_hash() const;
    std::map<std::string, std::string> entries() const { return values_; }

    TrainConfig train_config() const;
    UNetConfig unet_config() const;
    STBlockConfig st_config() const;
    TextEncoderConfig text_config() const;
    CodecTrainConfig codec_config() const;
    size_t codec_dataset_frames() const;
    size_t codec_heldout_frames() const;
    std::string out_dir() const { return get("out.dir"); }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace t2v
