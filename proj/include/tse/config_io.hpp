#pragma once

// JSON configuration for the command-line tools. Unknown keys are rejected so
// typos fail loudly. Relative paths resolve against `base_dir`.

#include <filesystem>

#include "json.hpp"
#include "tse/model.hpp"
#include "tse/pipeline.hpp"
#include "tse/training.hpp"

namespace tse {

using Json = nlohmann::json;

Json load_json_file(const std::filesystem::path& path);

/// {"preset": "test"|"full", "n_rrg", "n_mrb_per_rrg", "n_scales", "base_channels",
///  "sa_kernel", "ca_reduction", "spatial_pooling": "median"|"avgmax", "seed"}
NetConfig net_config_from_json(const Json& j, NetConfig base = NetConfig::test());
Json net_config_to_json(const NetConfig& c);

/// {"epochs", "crop", "batch", "lr", "beta1", "beta2", "adam_eps", "charbonnier_eps", "seed"}
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});
Json train_config_to_json(const TrainConfig& c);

/// {"images", "ground_truth", "checkpoint", "output", "class_names",
///  "detector": {"command"|"precomputed"|"stub": ...},
///  "routing": "all" | {"luminance", "blur"}, "iou_thresh", "conf_thresh", "tile", "seed"}
PipelineConfig pipeline_config_from_json(const Json& j, const std::filesystem::path& base_dir);

/// Throws ConfigError naming the first key of `j` outside `allowed`.
void check_keys(const Json& j, std::initializer_list<const char*> allowed, const char* where);

std::filesystem::path resolve_path(const std::filesystem::path& base_dir, const std::string& p);

}  // namespace tse
