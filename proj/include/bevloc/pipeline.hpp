#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bevloc/config.hpp"
#include "bevloc/evaluation.hpp"
#include "bevloc/model.hpp"
#include "bevloc/synthdata.hpp"
#include "bevloc/training.hpp"

namespace bevloc::pipeline {

// Layout of one experiment directory.
struct Paths {
  std::filesystem::path root;

  std::filesystem::path Data() const { return root / "data"; }
  std::filesystem::path Manifest() const { return Data() / "manifest.json"; }
  std::filesystem::path Bev(const std::string& split) const { return root / "bev" / split; }
  std::filesystem::path Checkpoints() const { return root / "ckpt"; }
  std::filesystem::path Stage1Ckpt() const { return Checkpoints() / "stage1.ckpt"; }
  std::filesystem::path Stage2Ckpt() const { return Checkpoints() / "stage2.ckpt"; }
  std::filesystem::path Logs() const { return root / "logs"; }
  std::filesystem::path Metrics() const { return root / "metrics"; }
};

synth::DatasetManifest GenData(const ExperimentConfig& config, const Paths& paths);

// video_to_bev over every location of the split (train split uses train-mode
// BEVs, test split test-mode). Writes frames, the BEV pose table, and the
// fitted scene per location. Parallel across locations; per-location output is
// independent and deterministic.
void Reconstruct(const ExperimentConfig& config, const Paths& paths, const std::string& split);

train::TrainData LoadTrainData(const ExperimentConfig& config, const Paths& paths);

enum class EvalInput { kBev, kDrone, kDroneOccluded };
enum class QueryMode { kVideo, kSingleFrame };

struct EvalSpec {
  std::string direction = "drone_to_satellite";  // or "satellite_to_drone"
  bool use_stage2 = true;
  int topk = 32;
  EvalInput input = EvalInput::kBev;
  QueryMode query_mode = QueryMode::kVideo;
};

// Loads test items and runs retrieval. kSingleFrame expands every video into
// per-frame queries, so the reported metrics average over frame choices.
eval::RetrievalRun RunEval(const ExperimentConfig& config, const Paths& paths,
                           const model::Stage1Model& stage1, const model::MatchHead* match_head,
                           const EvalSpec& spec);

model::Stage1Model RunTrainStage1(const ExperimentConfig& config, const Paths& paths,
                                  train::Stage1Input input,
                                  const std::filesystem::path& checkpoint_path);

// Trains stage 2 on top of the checkpoint at stage1_path and writes a combined
// checkpoint. For kTrainTogether, stage 1 starts from a fresh initialization.
void RunTrainStage2(const ExperimentConfig& config, const Paths& paths,
                    const std::filesystem::path& stage1_path, train::Stage2Strategy strategy,
                    train::NegativeSource negatives, train::Stage1Input input,
                    const std::filesystem::path& out_path);

}  // namespace bevloc::pipeline
