#pragma once

// Experiment configuration: named presets, JSON parse/serialize, seed
// resolution and construction of models and datasets from a config.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rvjscc/channel.hpp"
#include "rvjscc/dataset.hpp"
#include "rvjscc/ofdm.hpp"
#include "rvjscc/trainer.hpp"
#include "rvjscc/video_codec.hpp"

namespace rvjscc {

inline constexpr int kConfigVersion = 1;

struct ChannelConfig {
    int num_paths = 8;  // L
    double gamma = 4.0;

    bool operator==(const ChannelConfig&) const = default;
};

struct DataConfig {
    std::string source = "synthetic";  // "synthetic" or a dataset root folder
    int frame_size = 256;
    int gop_len = 4;
    uint64_t seed = 1;
    // Synthetic split sizes; for folders, val and test take the last sequences.
    int train_sequences = 64;
    int val_sequences = 8;
    int test_sequences = 8;
    int sequence_length = 17;
    int frame_stride = 1;
    int crop_size = 0;

    bool operator==(const DataConfig&) const = default;
};

struct AblationConfig {
    std::string checkpoint_dir = "runs";  // <dir>/<tag>/checkpoint.pt
    std::vector<std::string> variants = Variant::tags();

    bool operator==(const AblationConfig&) const = default;
};

struct ExperimentConfig {
    int version = kConfigVersion;
    std::string preset = "paper";
    std::string variant = "proposed";
    OfdmConfig ofdm;
    ChannelConfig channel;
    CodecConfig codec;
    TrainConfig train;
    DataConfig data;
    AblationConfig ablation;

    bool operator==(const ExperimentConfig&) const = default;

    void validate() const;
    SystemConfig system() const;
    PowerDelayProfile pdp() const { return make_pdp(channel.num_paths, channel.gamma); }
    /// lambda as applied to this variant (zero without the denoiser).
    double effective_lambda() const;
};

/// "paper" or "desk". Throws on other names.
ExperimentConfig preset_config(const std::string& name);
const std::vector<std::string>& preset_names();

/// Overlays the document on the preset it names ("preset" key, default
/// "paper"). Unknown keys and wrong types are errors.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
/// Every field, pretty-printed.
std::string serialize_config(const ExperimentConfig& cfg);
void write_config(const std::string& path, const ExperimentConfig& cfg);

/// Seed precedence: explicit flag, then RVJSCC_SEED, then the config value.
uint64_t resolve_seed(std::optional<uint64_t> flag, uint64_t config_seed);

/// Seeds the global generator with train.seed and builds the variant's system.
JsccSystem build_system(const ExperimentConfig& cfg);

struct LoadedModel {
    ExperimentConfig config;
    JsccSystem model{nullptr};
};
LoadedModel load_model(const std::string& checkpoint_path);

struct DatasetSplit {
    std::vector<VideoSequence> train;
    std::vector<VideoSequence> val;
    std::vector<VideoSequence> test;
};
DatasetSplit make_datasets(const DataConfig& data);

}  // namespace rvjscc
