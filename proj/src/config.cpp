#include "bevloc/config.hpp"

#include <nlohmann/json.hpp>

#include "bevloc/util.hpp"

namespace bevloc {

namespace {

using json = nlohmann::json;

template <typename T>
void Get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  const json j = json::parse(ReadTextFile(path));
  ExperimentConfig c;
  Get(j, "seed", c.seed);
  Get(j, "elevation", c.elevation);
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    Get(d, "n_locations", c.dataset.n_locations);
    Get(d, "n_train", c.dataset.n_train);
    Get(d, "fps", c.dataset.fps);
    Get(d, "video_seconds", c.dataset.video_seconds);
    Get(d, "elevations", c.dataset.elevations);
    Get(d, "resolution", c.dataset.resolution);
    Get(d, "negatives_per_view", c.dataset.negatives_per_view);
    Get(d, "occlusion_fraction", c.dataset.occlusion_fraction);
  }
  if (j.contains("fit")) {
    const auto& f = j.at("fit");
    Get(f, "n_gaussians", c.fit.n_gaussians);
    Get(f, "iters", c.fit.iters);
    Get(f, "step_size", c.fit.step_size);
  }
  if (j.contains("bev")) {
    const auto& b = j.at("bev");
    Get(b, "crop_train", c.bev.crop_train);
    Get(b, "crop_test", c.bev.crop_test);
    Get(b, "yaw_step_deg", c.bev.yaw_step_deg);
    Get(b, "height_growth", c.bev.height_growth);
    Get(b, "base_height", c.bev.base_height);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    Get(m, "n_rings", c.model.n_rings);
    Get(m, "channels1", c.model.channels1);
    Get(m, "channels2", c.model.channels2);
    Get(m, "out_channels", c.model.out_channels);
  }
  if (j.contains("stage1")) {
    const auto& s = j.at("stage1");
    Get(s, "batch", c.stage1.batch);
    Get(s, "epochs", c.stage1.epochs);
    Get(s, "lr_encoder", c.stage1.lr_encoder);
    Get(s, "lr_other", c.stage1.lr_other);
    Get(s, "tau_init", c.stage1.tau_init);
    Get(s, "weight_decay", c.stage1.weight_decay);
  }
  if (j.contains("stage2")) {
    const auto& s = j.at("stage2");
    Get(s, "batch", c.stage2.batch);
    Get(s, "epochs", c.stage2.epochs);
    Get(s, "lr", c.stage2.lr);
    Get(s, "lr_stage1_encoder", c.stage2.lr_stage1_encoder);
    Get(s, "lr_stage1_other", c.stage2.lr_stage1_other);
    Get(s, "k_negatives", c.stage2.k_negatives);
    Get(s, "weight_decay", c.stage2.weight_decay);
  }
  if (j.contains("eval")) {
    Get(j.at("eval"), "topk", c.eval.topk);
  }
  return c;
}

void SaveConfig(const std::filesystem::path& path, const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["elevation"] = c.elevation;
  j["dataset"] = {{"n_locations", c.dataset.n_locations},
                  {"n_train", c.dataset.n_train},
                  {"fps", c.dataset.fps},
                  {"video_seconds", c.dataset.video_seconds},
                  {"elevations", c.dataset.elevations},
                  {"resolution", c.dataset.resolution},
                  {"negatives_per_view", c.dataset.negatives_per_view},
                  {"occlusion_fraction", c.dataset.occlusion_fraction}};
  j["fit"] = {{"n_gaussians", c.fit.n_gaussians},
              {"iters", c.fit.iters},
              {"step_size", c.fit.step_size}};
  j["bev"] = {{"crop_train", c.bev.crop_train},
              {"crop_test", c.bev.crop_test},
              {"yaw_step_deg", c.bev.yaw_step_deg},
              {"height_growth", c.bev.height_growth},
              {"base_height", c.bev.base_height}};
  j["model"] = {{"n_rings", c.model.n_rings},
                {"channels1", c.model.channels1},
                {"channels2", c.model.channels2},
                {"out_channels", c.model.out_channels}};
  j["stage1"] = {{"batch", c.stage1.batch},
                 {"epochs", c.stage1.epochs},
                 {"lr_encoder", c.stage1.lr_encoder},
                 {"lr_other", c.stage1.lr_other},
                 {"tau_init", c.stage1.tau_init},
                 {"weight_decay", c.stage1.weight_decay}};
  j["stage2"] = {{"batch", c.stage2.batch},
                 {"epochs", c.stage2.epochs},
                 {"lr", c.stage2.lr},
                 {"lr_stage1_encoder", c.stage2.lr_stage1_encoder},
                 {"lr_stage1_other", c.stage2.lr_stage1_other},
                 {"k_negatives", c.stage2.k_negatives},
                 {"weight_decay", c.stage2.weight_decay}};
  j["eval"] = {{"topk", c.eval.topk}};
  WriteTextFile(path, j.dump(2) + "\n");
}

}  // namespace bevloc
