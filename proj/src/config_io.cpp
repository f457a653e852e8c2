#include "tse/config_io.hpp"

#include <fstream>
#include <set>

namespace tse {

Json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const char* where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items())
        if (!ok.count(key)) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
}

std::filesystem::path resolve_path(const std::filesystem::path& base_dir, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

namespace {

template <typename T>
void read(const Json& j, const char* key, T& out, const char* where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError(std::string(where) + ": bad value for '" + key + "'");
    }
}

}  // namespace

NetConfig net_config_from_json(const Json& j, NetConfig base) {
    check_keys(j, {"preset", "n_rrg", "n_mrb_per_rrg", "n_scales", "base_channels", "sa_kernel", "ca_reduction",
                   "spatial_pooling", "seed"},
               "net");
    NetConfig c = base;
    if (j.contains("preset")) {
        const std::string preset = j.at("preset").get<std::string>();
        if (preset == "test") {
            c = NetConfig::test();
        } else if (preset == "full") {
            c = NetConfig::full();
        } else {
            throw ConfigError("net: preset must be 'test' or 'full', got '" + preset + "'");
        }
    }
    read(j, "n_rrg", c.n_rrg, "net");
    read(j, "n_mrb_per_rrg", c.n_mrb_per_rrg, "net");
    read(j, "n_scales", c.n_scales, "net");
    read(j, "base_channels", c.base_channels, "net");
    read(j, "sa_kernel", c.sa_kernel, "net");
    read(j, "ca_reduction", c.ca_reduction, "net");
    read(j, "seed", c.seed, "net");
    if (j.contains("spatial_pooling")) {
        const std::string pool = j.at("spatial_pooling").get<std::string>();
        if (pool == "median") {
            c.spatial_pooling = SpatialPooling::kMedian;
        } else if (pool == "avgmax") {
            c.spatial_pooling = SpatialPooling::kAvgMax;
        } else {
            throw ConfigError("net: spatial_pooling must be 'median' or 'avgmax'");
        }
    }
    c.validate();
    return c;
}

Json net_config_to_json(const NetConfig& c) {
    return Json{{"n_rrg", c.n_rrg},
                {"n_mrb_per_rrg", c.n_mrb_per_rrg},
                {"n_scales", c.n_scales},
                {"base_channels", c.base_channels},
                {"sa_kernel", c.sa_kernel},
                {"ca_reduction", c.ca_reduction},
                {"spatial_pooling", c.spatial_pooling == SpatialPooling::kMedian ? "median" : "avgmax"},
                {"seed", c.seed}};
}

TrainConfig train_config_from_json(const Json& j, TrainConfig base) {
    check_keys(j, {"epochs", "crop", "batch", "lr", "beta1", "beta2", "adam_eps", "charbonnier_eps", "seed"}, "train");
    TrainConfig c = base;
    read(j, "epochs", c.epochs, "train");
    read(j, "crop", c.crop, "train");
    read(j, "batch", c.batch, "train");
    read(j, "lr", c.lr, "train");
    read(j, "beta1", c.beta1, "train");
    read(j, "beta2", c.beta2, "train");
    read(j, "adam_eps", c.adam_eps, "train");
    read(j, "charbonnier_eps", c.charbonnier_eps, "train");
    read(j, "seed", c.seed, "train");
    return c;
}

Json train_config_to_json(const TrainConfig& c) {
    return Json{{"epochs", c.epochs},   {"crop", c.crop},         {"batch", c.batch},
                {"lr", c.lr},           {"beta1", c.beta1},       {"beta2", c.beta2},
                {"adam_eps", c.adam_eps}, {"charbonnier_eps", c.charbonnier_eps}, {"seed", c.seed}};
}

PipelineConfig pipeline_config_from_json(const Json& j, const std::filesystem::path& base_dir) {
    check_keys(j, {"images", "ground_truth", "checkpoint", "output", "class_names", "detector", "routing", "iou_thresh",
                   "conf_thresh", "tile", "seed"},
               "pipeline");
    PipelineConfig c;
    auto path = [&](const char* key, std::filesystem::path& out) {
        std::string s;
        read(j, key, s, "pipeline");
        if (!s.empty()) out = resolve_path(base_dir, s);
    };
    path("images", c.images_dir);
    path("ground_truth", c.ground_truth_dir);
    path("checkpoint", c.checkpoint);
    path("output", c.output_dir);
    path("class_names", c.class_names);
    if (j.contains("detector")) {
        const Json& d = j.at("detector");
        check_keys(d, {"command", "precomputed", "stub"}, "pipeline.detector");
        if (d.size() != 1) throw ConfigError("pipeline.detector: set exactly one of command, precomputed, stub");
        if (d.contains("command")) {
            c.detector.mode = DetectorMode::kCommand;
            c.detector.command = d.at("command").get<std::string>();
        } else if (d.contains("precomputed")) {
            c.detector.mode = DetectorMode::kPrecomputed;
            c.detector.precomputed_dir = resolve_path(base_dir, d.at("precomputed").get<std::string>());
        } else {
            c.detector.mode = DetectorMode::kStub;
            c.detector.stub_fixture = resolve_path(base_dir, d.at("stub").get<std::string>());
        }
    }
    if (j.contains("routing")) {
        const Json& r = j.at("routing");
        if (r.is_string()) {
            if (r.get<std::string>() != "all") throw ConfigError("pipeline.routing: expected \"all\" or thresholds");
            c.routing.all = true;
        } else {
            check_keys(r, {"luminance", "blur"}, "pipeline.routing");
            read(r, "luminance", c.routing.thresholds.luminance, "pipeline.routing");
            read(r, "blur", c.routing.thresholds.blur, "pipeline.routing");
        }
    }
    read(j, "iou_thresh", c.iou_thresh, "pipeline");
    read(j, "conf_thresh", c.conf_thresh, "pipeline");
    read(j, "tile", c.tile, "pipeline");
    read(j, "seed", c.seed, "pipeline");
    return c;
}

}  // namespace tse
