#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <vector>

#include "bevloc/image.hpp"
#include "bevloc/nn.hpp"

namespace bevloc::model {

// Per-ring pooled feature vectors, innermost ring first.
struct PartEmbeddings {
  Eigen::MatrixXd rings;  // n_rings x channels

  int NumRings() const { return static_cast<int>(rings.rows()); }
  int Channels() const { return static_cast<int>(rings.cols()); }
};

// Ring index per cell (row-major) for an S x S grid split into n_rings
// concentric square annuli: ring 0 is the central region, each ring is one
// cell thick and the outermost ring absorbs the remainder. Throws if a ring
// would be empty.
std::vector<int> RingAssignment(int grid_size, int n_rings);

PartEmbeddings SquareRingPartition(const nn::Tensor& feature_map, int n_rings);
nn::Tensor SquareRingPartitionBackward(const Eigen::MatrixXd& d_rings, int channels, int grid_size,
                                       int n_rings);

// Concatenated ring vectors, L2-normalized. Throws on an all-zero input.
Eigen::VectorXd GlobalEmbedding(const PartEmbeddings& parts);
// d(loss)/d(concatenated rings) given the pre-normalization concat vector.
Eigen::VectorXd GlobalEmbeddingBackward(const Eigen::VectorXd& concat,
                                        const Eigen::VectorXd& d_embedding);

struct EncoderConfig {
  int input_resolution = 64;
  int n_rings = 4;
  int channels1 = 16;
  int channels2 = 32;
  int out_channels = 64;

  int OutGrid() const { return input_resolution / 8; }
};

// Toy strided conv encoder: 64x64x3 -> 8x8x64 in three stride-2 stages. The
// same instance (same weights) encodes both BEV and satellite inputs.
class Encoder {
 public:
  Encoder(const EncoderConfig& config, uint64_t seed);

  struct Acts {
    nn::Tensor x, a1, a2, a3;  // input and post-ReLU activations
  };

  nn::Tensor Forward(const nn::Tensor& x, Acts* acts = nullptr) const;
  nn::Tensor Forward(const Image& image, Acts* acts = nullptr) const;
  // Accumulates parameter gradients; returns d(loss)/d(input).
  nn::Tensor Backward(const Acts& acts, const nn::Tensor& d_out);

  void CollectParams(std::vector<nn::Parameter*>& out);
  const EncoderConfig& Config() const { return config_; }

  nn::Tensor ImageToTensor(const Image& image) const;

 private:
  EncoderConfig config_;
  nn::Conv2d conv1_, conv2_, conv3_;
};

// One linear classifier per ring (not shared across rings).
class ClassifierBank {
 public:
  ClassifierBank(int n_rings, int channels, int n_categories, uint64_t seed);

  std::vector<Eigen::VectorXd> Forward(const PartEmbeddings& parts) const;
  // Accumulates parameter gradients; returns d(loss)/d(ring vectors).
  Eigen::MatrixXd Backward(const PartEmbeddings& parts,
                           const std::vector<Eigen::VectorXd>& d_logits);

  int NumRings() const { return static_cast<int>(heads_.size()); }
  int NumCategories() const { return n_categories_; }
  void CollectParams(std::vector<nn::Parameter*>& out);

 private:
  std::vector<nn::Linear> heads_;
  int n_categories_ = 0;
};

// Two-layer per-ring fusers over concatenated ring pairs, then a two-layer
// projector from the concatenated fused rings to 2 logits; the match
// probability is the softmax "match" component. The projector's final layer is
// zero-initialized so an untrained head outputs exactly 0.5.
class MatchHead {
 public:
  MatchHead(int n_rings, int channels, uint64_t seed);

  struct Acts {
    std::vector<Eigen::VectorXd> fuse_in, h1, fused;  // per ring
    Eigen::VectorXd concat, h2;
    Eigen::Vector2d logits;
    double p_match = 0.0;
  };

  double Forward(const PartEmbeddings& a, const PartEmbeddings& b, Acts* acts = nullptr) const;
  // Backward from d(loss)/d(logits); optionally returns ring-vector grads.
  void Backward(const Acts& acts, const Eigen::Vector2d& d_logits, Eigen::MatrixXd* d_a,
                Eigen::MatrixXd* d_b);

  int NumRings() const { return static_cast<int>(fuser_l1_.size()); }
  int Channels() const { return channels_; }
  void CollectParams(std::vector<nn::Parameter*>& out);

 private:
  std::vector<nn::Linear> fuser_l1_, fuser_l2_;
  nn::Linear proj1_, proj2_;
  int channels_ = 0;
};

// Stage-1 trainable state: shared encoder, per-ring classifier bank, and the
// learnable contrastive temperature (stored as log tau so tau stays positive).
struct Stage1Model {
  EncoderConfig config;
  Encoder encoder;
  ClassifierBank classifiers;
  nn::Parameter log_tau;
  std::vector<int> category_ids;  // training location ids, class index = position

  Stage1Model(const EncoderConfig& config, int n_categories, double tau_init, uint64_t seed);

  double Tau() const { return std::exp(log_tau.value.v[0]); }
  int ClassIndex(int location_id) const;

  PartEmbeddings EncodeParts(const Image& image, Encoder::Acts* acts = nullptr) const;
  Eigen::VectorXd Embed(const Image& image) const;

  void CollectParams(std::vector<nn::Parameter*>& encoder_params,
                     std::vector<nn::Parameter*>& other_params);
  std::vector<std::pair<std::string, const nn::Tensor*>> NamedTensors() const;
  void LoadTensors(const std::map<std::string, nn::Tensor>& tensors);
};

struct Stage2Model {
  MatchHead match_head;

  Stage2Model(int n_rings, int channels, uint64_t seed) : match_head(n_rings, channels, seed) {}

  void CollectParams(std::vector<nn::Parameter*>& out) { match_head.CollectParams(out); }
  std::vector<std::pair<std::string, const nn::Tensor*>> NamedTensors() const;
  void LoadTensors(const std::map<std::string, nn::Tensor>& tensors);
};

// Checkpoints hold stage-1 and stage-2 parameter groups under the "stage1/"
// and "stage2/" namespaces so the freeze strategy is auditable by hash.
void SaveStage1Checkpoint(const std::filesystem::path& path, const Stage1Model& model);
Stage1Model LoadStage1Checkpoint(const std::filesystem::path& path);
void SaveCombinedCheckpoint(const std::filesystem::path& path, const Stage1Model& stage1,
                            const Stage2Model& stage2);
Stage2Model LoadStage2Checkpoint(const std::filesystem::path& path, const Stage1Model& stage1);
uint64_t Stage1NamespaceHash(const std::filesystem::path& checkpoint_path);

}  // namespace bevloc::model
