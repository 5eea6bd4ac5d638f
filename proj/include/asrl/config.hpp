#pragma once

#include <cstdint>
#include <string>

#include "asrl/datapipe.hpp"
#include "asrl/trainer.hpp"

namespace asrl {

// Dataset selection shared by training and evaluation. source is either a
// directory of .png files or a synthetic spec like "synth:blobs:64".
struct DataConfig {
    std::string source = "synth:blobs:64";
    std::size_t label_size = 64;
    std::size_t crop_size = 128;
};

// Report knobs for post-training evaluation.
struct EvalConfig {
    double duplicate_tau = 0.05;
    std::size_t grid_count = 8;
};

// One experiment, fully specified. The JSON form has sections objective /
// generator / discriminator / optimizer / data / train / eval, each optional;
// anything not given falls back to the defaults above and in the component
// configs, plus the objective-derived choices (critic head activation,
// n_critic, optimizer). One optimizer section drives both networks.
struct RunConfig {
    TrainConfig train;
    DataConfig data;
    EvalConfig eval;
};

// Strict parse of the JSON text: unknown keys, wrong types, out-of-range
// values, and inconsistent pairings all throw ConfigError naming the
// offending field as section.key. The result has every field resolved.
RunConfig parse_run_config(const std::string& json_text);

// parse_run_config on a file's contents; IoError when the file is unreadable.
RunConfig load_run_config(const std::string& path);

// Full echo of every resolved field in a fixed key order. Feeding the text
// back through parse_run_config yields the same configuration, so a stored
// echo reproduces its run exactly (same seed included).
std::string resolved_config_json(const RunConfig& cfg);

ImageDataset open_dataset(const DataConfig& data, std::uint64_t seed);

}  // namespace asrl
