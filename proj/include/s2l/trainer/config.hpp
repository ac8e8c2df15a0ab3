#pragma once

#include "s2l/core/loss_config.hpp"
#include "s2l/data/data.hpp"
#include "s2l/model/unet.hpp"
#include "s2l/pseudolabel/pseudolabel.hpp"

#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace s2l::trainer {

// Bad configuration: unknown key, wrong type, or violated invariant.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct AugmentConfig {
    bool flips = true;
    bool rotations = true;
    friend bool operator==(const AugmentConfig&, const AugmentConfig&) = default;
};

struct TrainConfig {
    int warmup_epochs = 30;
    int main_epochs = 70;
    int batch_size = 8;
    // square training crop; images no larger than this are used whole
    int crop_size = 64;
    int eval_batch_size = 8;
    // first epoch whose predictions enter the EMA
    int ema_start_epoch = 1;
    int checkpoint_every = 10;
    std::uint64_t seed = 0;
    std::string device = "cpu";
    model::AdamConfig optimizer;
    pseudolabel::FilterConfig filter;
    LossConfig loss;
    model::NetworkConfig network;
    int projection_dim = 32;
    int projection_depth = 2;
    AugmentConfig augment;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

std::vector<std::string> validate(const TrainConfig& cfg);

nlohmann::json to_json(const TrainConfig& cfg);
// Strict: unknown keys and type mismatches throw ConfigError naming the key.
TrainConfig config_from_json(const nlohmann::json& doc);

// "a.b=value"; the value is read as JSON when it parses, else as a string.
void apply_override(nlohmann::json& doc, std::string_view assignment);

// Keeps the configured regularizers whose delta is listed, in list order;
// deltas must come from the defaults of the configured depth.
std::vector<ScaleSpec> select_scales(const TrainConfig& cfg, const std::vector<int>& deltas);

// Dataset generation settings of the synth command. `seed` drives both the
// images and the scribbles.
struct SynthRunConfig {
    int count = 80;
    int val_count = 16;
    std::uint64_t seed = 0;
    data::SynthConfig images;
    data::ScribbleConfig scribbles;

    friend bool operator==(const SynthRunConfig&, const SynthRunConfig&) = default;
};

std::vector<std::string> validate(const SynthRunConfig& cfg);
nlohmann::json to_json(const SynthRunConfig& cfg);
SynthRunConfig synth_config_from_json(const nlohmann::json& doc);

struct ConfigKey {
    std::string key;
    std::string default_value;
};

// Flattened dotted keys of a config document.
std::vector<ConfigKey> config_keys(const nlohmann::json& doc);
std::vector<ConfigKey> config_keys();

}  // namespace s2l::trainer
