#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "bevloc/config.hpp"
#include "bevloc/evaluation.hpp"
#include "bevloc/model.hpp"
#include "bevloc/pipeline.hpp"
#include "bevloc/plot.hpp"
#include "bevloc/util.hpp"

namespace {

using bevloc::ExperimentConfig;
namespace pipeline = bevloc::pipeline;
namespace fs = std::filesystem;

struct GlobalArgs {
  std::string config_path;
  std::string out = "out";
  std::optional<uint64_t> seed;

  ExperimentConfig Config() const {
    ExperimentConfig config =
        config_path.empty() ? ExperimentConfig{} : bevloc::LoadConfig(config_path);
    if (seed) config.seed = *seed;
    return config;
  }
  pipeline::Paths Paths() const { return pipeline::Paths{fs::path(out)}; }
};

void PrintRun(const std::string& tag, const bevloc::eval::RetrievalRun& run) {
  std::printf("%s direction=%s R@1=%.4f R@5=%.4f R@10=%.4f AP=%.4f (queries=%d gallery=%d)\n",
              tag.c_str(), run.direction.c_str(), run.recall_at.at(1), run.recall_at.at(5),
              run.recall_at.at(10), run.ap_mean, run.num_queries, run.gallery_size);
}

pipeline::EvalSpec MakeSpec(const std::string& direction, bool use_stage2, int topk,
                            const std::string& input, const std::string& query_mode) {
  pipeline::EvalSpec spec;
  spec.direction = direction;
  spec.use_stage2 = use_stage2;
  spec.topk = topk;
  if (input == "bev")
    spec.input = pipeline::EvalInput::kBev;
  else if (input == "drone")
    spec.input = pipeline::EvalInput::kDrone;
  else if (input == "drone-occl")
    spec.input = pipeline::EvalInput::kDroneOccluded;
  else
    throw CLI::ValidationError("--input", "must be bev, drone, or drone-occl");
  spec.query_mode = query_mode == "single-frame" ? pipeline::QueryMode::kSingleFrame
                                                 : pipeline::QueryMode::kVideo;
  return spec;
}

std::string MetricsName(const pipeline::EvalSpec& spec, bool stage2) {
  std::string name = "eval_" + spec.direction;
  name += spec.input == pipeline::EvalInput::kBev
              ? "_bev"
              : (spec.input == pipeline::EvalInput::kDrone ? "_drone" : "_drone-occl");
  name += stage2 ? "_two-stage" : "_stage1";
  if (spec.query_mode == pipeline::QueryMode::kSingleFrame) name += "_single-frame";
  return name + ".json";
}

int RunEvalCommand(const GlobalArgs& g, const std::string& direction, const std::string& stage1_path,
                   const std::string& stage2_path, int topk, const std::string& input,
                   const std::string& query_mode) {
  const ExperimentConfig config = g.Config();
  const auto paths = g.Paths();
  const auto stage1 = bevloc::model::LoadStage1Checkpoint(stage1_path);
  std::optional<bevloc::model::Stage2Model> stage2;
  if (!stage2_path.empty()) stage2.emplace(bevloc::model::LoadStage2Checkpoint(stage2_path, stage1));

  const std::vector<std::string> directions =
      direction == "both" ? std::vector<std::string>{"drone_to_satellite", "satellite_to_drone"}
                          : std::vector<std::string>{direction};
  for (const auto& dir : directions) {
    const auto spec = MakeSpec(dir, stage2.has_value(), topk, input, query_mode);
    const auto run = pipeline::RunEval(config, paths, stage1,
                                       stage2 ? &stage2->match_head : nullptr, spec);
    const auto metrics_path = paths.Metrics() / MetricsName(spec, stage2.has_value());
    bevloc::eval::WriteMetrics(metrics_path, run);
    PrintRun("[eval]", run);
    std::printf("  metrics -> %s\n", metrics_path.string().c_str());
  }
  return 0;
}

double MeanDirectionAp(const ExperimentConfig& config, const pipeline::Paths& paths,
                       const bevloc::model::Stage1Model& stage1,
                       const bevloc::model::MatchHead* head, int topk,
                       pipeline::EvalInput input, const fs::path& metrics_dir,
                       const std::string& tag) {
  double sum = 0.0;
  for (const std::string dir : {"drone_to_satellite", "satellite_to_drone"}) {
    pipeline::EvalSpec spec;
    spec.direction = dir;
    spec.use_stage2 = head != nullptr;
    spec.topk = topk;
    spec.input = input;
    const auto run = pipeline::RunEval(config, paths, stage1, head, spec);
    bevloc::eval::WriteMetrics(metrics_dir / (tag + "_" + dir + ".json"), run);
    PrintRun("[ablate:" + tag + "]", run);
    sum += run.ap_mean;
  }
  return sum / 2.0;
}

int RunAblate(const GlobalArgs& g, const std::string& axis) {
  const ExperimentConfig config = g.Config();
  const auto paths = g.Paths();
  const fs::path dir = paths.root / "ablate";
  fs::create_directories(dir);
  nlohmann::json summary;

  if (axis == "inputs") {
    // Raw drone frames vs BEVs as stage-1 input, then the two-stage variants.
    const fs::path s1_drone = dir / "stage1_drone.ckpt";
    const fs::path s1_bev = paths.Stage1Ckpt();
    auto m_drone = pipeline::RunTrainStage1(config, paths, bevloc::train::Stage1Input::kDrone,
                                            s1_drone);
    auto m_bev = fs::exists(s1_bev)
                     ? bevloc::model::LoadStage1Checkpoint(s1_bev)
                     : pipeline::RunTrainStage1(config, paths, bevloc::train::Stage1Input::kBev,
                                                s1_bev);
    const double ap_baseline = MeanDirectionAp(config, paths, m_drone, nullptr, config.eval.topk,
                                               pipeline::EvalInput::kDrone, dir, "baseline");
    const double ap_bev = MeanDirectionAp(config, paths, m_bev, nullptr, config.eval.topk,
                                          pipeline::EvalInput::kBev, dir, "bev");

    const fs::path s2_inbatch = dir / "stage2_inbatch.ckpt";
    pipeline::RunTrainStage2(config, paths, s1_bev, bevloc::train::Stage2Strategy::kFreeze,
                             bevloc::train::NegativeSource::kInBatch,
                             bevloc::train::Stage1Input::kBev, s2_inbatch);
    auto head_inbatch = bevloc::model::LoadStage2Checkpoint(s2_inbatch, m_bev);
    const double ap_two_stage =
        MeanDirectionAp(config, paths, m_bev, &head_inbatch.match_head, config.eval.topk,
                        pipeline::EvalInput::kBev, dir, "two_stage");

    const fs::path s2_synth = dir / "stage2_synthetic.ckpt";
    pipeline::RunTrainStage2(config, paths, s1_bev, bevloc::train::Stage2Strategy::kFreeze,
                             bevloc::train::NegativeSource::kSynthetic,
                             bevloc::train::Stage1Input::kBev, s2_synth);
    auto head_synth = bevloc::model::LoadStage2Checkpoint(s2_synth, m_bev);
    const double ap_ours =
        MeanDirectionAp(config, paths, m_bev, &head_synth.match_head, config.eval.topk,
                        pipeline::EvalInput::kBev, dir, "ours");

    summary = {{"baseline_ap", ap_baseline},
               {"bev_ap", ap_bev},
               {"two_stage_ap", ap_two_stage},
               {"ours_ap", ap_ours}};
    bevloc::plot::WriteBarChart(dir / "inputs.png",
                                {{"baseline", {ap_baseline}},
                                 {"bev", {ap_bev}},
                                 {"two-stage", {ap_two_stage}},
                                 {"ours", {ap_ours}}});
  } else if (axis == "strategies") {
    auto m_bev = bevloc::model::LoadStage1Checkpoint(paths.Stage1Ckpt());
    const struct {
      const char* name;
      bevloc::train::Stage2Strategy strategy;
    } strategies[] = {{"train_together", bevloc::train::Stage2Strategy::kTrainTogether},
                      {"fine_tune", bevloc::train::Stage2Strategy::kFineTune},
                      {"freeze", bevloc::train::Stage2Strategy::kFreeze}};
    std::vector<bevloc::plot::BarGroup> bars;
    for (const auto& s : strategies) {
      const fs::path ckpt = dir / (std::string("stage2_") + s.name + ".ckpt");
      pipeline::RunTrainStage2(config, paths, paths.Stage1Ckpt(), s.strategy,
                               bevloc::train::NegativeSource::kSynthetic,
                               bevloc::train::Stage1Input::kBev, ckpt);
      // Non-freeze strategies update stage-1; the combined checkpoint holds it.
      const auto stage1_used = s.strategy == bevloc::train::Stage2Strategy::kFreeze
                                   ? m_bev
                                   : bevloc::model::LoadStage1Checkpoint(ckpt);
      auto head = bevloc::model::LoadStage2Checkpoint(ckpt, stage1_used);
      const double ap = MeanDirectionAp(config, paths, stage1_used, &head.match_head,
                                        config.eval.topk, pipeline::EvalInput::kBev, dir, s.name);
      summary[std::string(s.name) + "_ap"] = ap;
      bars.push_back({s.name, {ap}});
    }
    summary["freeze_stage1_hash_before"] =
        bevloc::model::Stage1NamespaceHash(paths.Stage1Ckpt());
    summary["freeze_stage1_hash_after"] =
        bevloc::model::Stage1NamespaceHash(dir / "stage2_freeze.ckpt");
    bevloc::plot::WriteBarChart(dir / "strategies.png", bars);
  } else if (axis == "topk") {
    auto stage1 = bevloc::model::LoadStage1Checkpoint(paths.Stage1Ckpt());
    auto stage2 = bevloc::model::LoadStage2Checkpoint(paths.Stage2Ckpt(), stage1);
    std::vector<double> ks, aps;
    const auto manifest = bevloc::synth::ReadManifest(paths.Manifest());
    const int g_size = static_cast<int>(manifest.test_ids.size());
    for (int k = 1; k <= g_size; k *= 2) {
      ks.push_back(k);
      pipeline::EvalSpec spec;
      spec.direction = "drone_to_satellite";
      spec.topk = k;
      const auto run = pipeline::RunEval(config, paths, stage1, &stage2.match_head, spec);
      aps.push_back(run.ap_mean);
      PrintRun("[ablate:topk=" + std::to_string(k) + "]", run);
      if (k < g_size && k * 2 > g_size) {
        ks.push_back(g_size);
        spec.topk = g_size;
        const auto last = pipeline::RunEval(config, paths, stage1, &stage2.match_head, spec);
        aps.push_back(last.ap_mean);
        PrintRun("[ablate:topk=" + std::to_string(g_size) + "]", last);
        break;
      }
    }
    summary["k"] = ks;
    summary["ap"] = aps;
    bevloc::plot::WriteLineChart(dir / "topk_sweep.png", ks, aps);
  } else {
    throw CLI::ValidationError("--axis", "must be inputs, strategies, or topk");
  }
  bevloc::WriteTextFile(dir / (axis + "_summary.json"), summary.dump(2) + "\n");
  std::printf("[ablate] summary -> %s\n", (dir / (axis + "_summary.json")).string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drone-video geo-localization over Gaussian-splat BEV sequences"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs g;
  app.add_option("--config", g.config_path, "experiment config file (JSON)");
  app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--out", g.out, "experiment directory")->capture_default_str();

  auto* gen = app.add_subcommand("gen-data", "render the synthetic dataset");

  auto* rec = app.add_subcommand("reconstruct", "fit scenes and render BEV sequences");
  std::string split = "both";
  rec->add_option("--split", split, "train, test, or both")->capture_default_str();

  auto* t1 = app.add_subcommand("train-stage1", "train encoder + classifiers + temperature");
  std::string t1_input = "bev";
  t1->add_option("--input", t1_input, "bev or drone")->capture_default_str();

  auto* t2 = app.add_subcommand("train-stage2", "train the matching head");
  std::string strategy = "freeze", negatives = "synthetic", t2_input = "bev";
  std::string stage1_path;
  t2->add_option("--strategy", strategy, "freeze, fine-tune, or train-together")
      ->capture_default_str();
  t2->add_option("--negatives", negatives, "synthetic or in-batch")->capture_default_str();
  t2->add_option("--input", t2_input, "bev or drone")->capture_default_str();
  t2->add_option("--stage1", stage1_path, "stage-1 checkpoint (default <out>/ckpt/stage1.ckpt)");

  auto* ev = app.add_subcommand("eval", "two-stage retrieval evaluation");
  std::string direction = "both", ev_stage1, ev_stage2, ev_input = "bev", query_mode = "video";
  int topk = -1;
  bool stage1_only = false;
  ev->add_option("--direction", direction, "drone_to_satellite, satellite_to_drone, or both")
      ->capture_default_str();
  ev->add_option("--stage1", ev_stage1, "stage-1 checkpoint");
  ev->add_option("--stage2", ev_stage2, "combined stage-2 checkpoint");
  ev->add_flag("--stage1-only", stage1_only, "skip re-ranking");
  ev->add_option("--topk", topk, "re-rank depth (default from config)");
  ev->add_option("--input", ev_input, "bev, drone, or drone-occl")->capture_default_str();
  ev->add_option("--query-mode", query_mode, "video or single-frame")->capture_default_str();

  auto* ab = app.add_subcommand("ablate", "sweep one ablation axis");
  std::string axis = "inputs";
  ab->add_option("--axis", axis, "inputs, strategies, or topk")->capture_default_str();

  auto* pl = app.add_subcommand("plot", "charts from metrics files");
  std::vector<std::string> bar_files;
  std::string sweep_file, plot_out = "plot.png";
  pl->add_option("--bars", bar_files, "metrics JSON files for a bar chart");
  pl->add_option("--sweep", sweep_file, "top-k sweep summary JSON");
  pl->add_option("--plot-out", plot_out, "output PNG")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig config = g.Config();
    const auto paths = g.Paths();

    if (gen->parsed()) {
      const auto manifest = pipeline::GenData(config, paths);
      std::printf("[gen-data] %zu train + %zu test locations, %d frames/video -> %s\n",
                  manifest.train_ids.size(), manifest.test_ids.size(), manifest.frames_per_video,
                  paths.Data().string().c_str());
      return 0;
    }
    if (rec->parsed()) {
      for (const std::string s : split == "both" ? std::vector<std::string>{"train", "test"}
                                                 : std::vector<std::string>{split}) {
        pipeline::Reconstruct(config, paths, s);
        std::printf("[reconstruct] split=%s -> %s\n", s.c_str(), paths.Bev(s).string().c_str());
      }
      return 0;
    }
    if (t1->parsed()) {
      const auto input = t1_input == "drone" ? bevloc::train::Stage1Input::kDrone
                                             : bevloc::train::Stage1Input::kBev;
      pipeline::RunTrainStage1(config, paths, input, paths.Stage1Ckpt());
      std::printf("[train-stage1] checkpoint -> %s\n", paths.Stage1Ckpt().string().c_str());
      return 0;
    }
    if (t2->parsed()) {
      bevloc::train::Stage2Strategy strat;
      if (strategy == "freeze")
        strat = bevloc::train::Stage2Strategy::kFreeze;
      else if (strategy == "fine-tune")
        strat = bevloc::train::Stage2Strategy::kFineTune;
      else if (strategy == "train-together")
        strat = bevloc::train::Stage2Strategy::kTrainTogether;
      else
        throw CLI::ValidationError("--strategy", "must be freeze, fine-tune, or train-together");
      const auto negs = negatives == "in-batch" ? bevloc::train::NegativeSource::kInBatch
                                                : bevloc::train::NegativeSource::kSynthetic;
      const auto input = t2_input == "drone" ? bevloc::train::Stage1Input::kDrone
                                             : bevloc::train::Stage1Input::kBev;
      const fs::path s1 = stage1_path.empty() ? paths.Stage1Ckpt() : fs::path(stage1_path);
      pipeline::RunTrainStage2(config, paths, s1, strat, negs, input, paths.Stage2Ckpt());
      std::printf("[train-stage2] checkpoint -> %s\n", paths.Stage2Ckpt().string().c_str());
      return 0;
    }
    if (ev->parsed()) {
      const fs::path s1 = ev_stage1.empty() ? paths.Stage1Ckpt() : fs::path(ev_stage1);
      fs::path s2 = ev_stage2.empty() ? paths.Stage2Ckpt() : fs::path(ev_stage2);
      if (stage1_only || !fs::exists(s2)) s2.clear();
      return RunEvalCommand(g, direction, s1.string(), s2.string(),
                            topk > 0 ? topk : config.eval.topk, ev_input, query_mode);
    }
    if (ab->parsed()) return RunAblate(g, axis);
    if (pl->parsed()) {
      if (!sweep_file.empty()) {
        const auto j = nlohmann::json::parse(bevloc::ReadTextFile(sweep_file));
        bevloc::plot::WriteLineChart(plot_out, j.at("k").get<std::vector<double>>(),
                                     j.at("ap").get<std::vector<double>>());
      } else if (!bar_files.empty()) {
        std::vector<bevloc::plot::BarGroup> groups;
        for (const auto& f : bar_files) {
          const auto j = nlohmann::json::parse(bevloc::ReadTextFile(f));
          groups.push_back({fs::path(f).stem().string(), {j.at("ap_mean").get<double>()}});
        }
        bevloc::plot::WriteBarChart(plot_out, groups);
      } else {
        throw CLI::ValidationError("plot", "pass --bars or --sweep");
      }
      std::printf("[plot] -> %s\n", plot_out.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
