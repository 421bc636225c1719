#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <vector>

#include "bevloc/image.hpp"
#include "bevloc/model.hpp"

namespace bevloc::train {

// Per-ring classification cross-entropy for both views, summed over rings.
double InstanceLoss(const std::vector<Eigen::VectorXd>& logits_sat,
                    const std::vector<Eigen::VectorXd>& logits_bev, int label);
double InstanceLossWithGrads(const std::vector<Eigen::VectorXd>& logits_sat,
                             const std::vector<Eigen::VectorXd>& logits_bev, int label,
                             std::vector<Eigen::VectorXd>* d_logits_sat,
                             std::vector<Eigen::VectorXd>* d_logits_bev);

// Symmetric temperature-scaled softmax loss over in-batch cosine similarities.
// Rows of f_sat/f_bev are paired by index and must be unit vectors (deviation
// beyond 1e-6 is an error); similarity is the dot product.
double ContrastiveLoss(const Eigen::MatrixXd& f_sat, const Eigen::MatrixXd& f_bev, double tau);
double ContrastiveLossWithGrads(const Eigen::MatrixXd& f_sat, const Eigen::MatrixXd& f_bev,
                                double tau, Eigen::MatrixXd* d_f_sat, Eigen::MatrixXd* d_f_bev,
                                double* d_tau);

// Binary cross-entropy of the match probability. p_hat is clamped to
// [1e-7, 1 - 1e-7] before the logs.
double MatchingLoss(double p_hat, int p_m);
double MatchingLossWithGrad(double p_hat, int p_m, double* d_p_hat);

struct SynthPoolItem {
  int index = 0;
  double similarity = 0.0;
};

struct HardNegatives {
  std::vector<int> real;       // gallery indices
  std::vector<int> synthetic;  // synth pool indices
};

// Real negatives: the k most similar gallery items whose label differs from
// the anchor's (the anchor's own label is gallery_labels[anchor_index]).
// Synthetic negatives: the k most similar pool items, own category allowed.
// Ties break toward the lower index; both selections are deterministic.
HardNegatives SelectHardNegatives(int anchor_index,
                                  const std::vector<double>& stage1_similarities,
                                  const std::vector<int>& gallery_labels,
                                  const std::vector<SynthPoolItem>& synth_pool, int k = 3);

struct LocationData {
  int id = 0;
  std::vector<Image> bev_frames;    // reconstructed BEV sequence
  std::vector<Image> drone_frames;  // raw video frames (ablation input)
  Image satellite;
  std::vector<Image> synth_bev;
  std::vector<Image> synth_satellite;
};

struct TrainData {
  std::vector<LocationData> locations;
};

enum class Stage1Input { kBev, kDrone };

struct Stage1Config {
  // Paper-scale defaults; desk-scale runs override via the experiment config.
  int batch_size = 140;
  int epochs = 140;
  double lr_encoder = 2e-5;
  double lr_other = 2e-4;
  double tau_init = 0.07;
  double weight_decay = 0.0;
  uint64_t seed = 0;
  Stage1Input input = Stage1Input::kBev;
  model::EncoderConfig encoder;
  std::filesystem::path log_path;  // empty disables logging
};

// Optimizes instance + contrastive losses (unit weights) over paired
// (BEV, satellite) samples with per-group AdamW step sizes.
model::Stage1Model TrainStage1(const TrainData& data, const Stage1Config& config,
                               std::vector<double>* epoch_losses = nullptr);

enum class Stage2Strategy { kFreeze, kFineTune, kTrainTogether };
enum class NegativeSource { kSynthetic, kInBatch };

struct Stage2Config {
  int batch_size = 140;
  int epochs = 140;
  double lr = 2e-4;
  double lr_stage1_encoder = 2e-6;  // fine-tune / train-together only
  double lr_stage1_other = 2e-5;
  double weight_decay = 0.0;
  int k_negatives = 3;
  NegativeSource negatives = NegativeSource::kSynthetic;
  uint64_t seed = 0;
  Stage1Input input = Stage1Input::kBev;
  std::filesystem::path log_path;
};

// Trains the match head with the matching loss over, per anchor and direction,
// the positive pair, k real hard negatives, and k synthetic hard negatives
// (or in-batch negatives only, for the ablation). Under kFreeze stage-1 is
// never touched; otherwise stage-1 keeps training jointly with its own losses.
model::Stage2Model TrainStage2(const TrainData& data, model::Stage1Model& stage1,
                               Stage2Strategy strategy, const Stage2Config& config,
                               std::vector<double>* epoch_losses = nullptr);

}  // namespace bevloc::train
