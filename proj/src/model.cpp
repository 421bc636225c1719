#include "bevloc/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bevloc/util.hpp"

namespace bevloc::model {

std::vector<int> RingAssignment(int grid_size, int n_rings) {
  if (n_rings < 1) throw std::invalid_argument("ring partition: n_rings must be >= 1");
  const int n_layers = (grid_size + 1) / 2;
  if (n_rings > n_layers)
    throw std::invalid_argument("ring partition: grid of size " + std::to_string(grid_size) +
                                " cannot host " + std::to_string(n_rings) +
                                " nonempty rings");
  std::vector<int> assignment(static_cast<size_t>(grid_size) * grid_size);
  for (int r = 0; r < grid_size; ++r) {
    for (int c = 0; c < grid_size; ++c) {
      const int border = std::min(std::min(r, c), std::min(grid_size - 1 - r, grid_size - 1 - c));
      const int layer = n_layers - 1 - border;  // 0 at the center
      assignment[static_cast<size_t>(r) * grid_size + c] = std::min(layer, n_rings - 1);
    }
  }
  return assignment;
}

PartEmbeddings SquareRingPartition(const nn::Tensor& feature_map, int n_rings) {
  if (feature_map.shape.size() != 3)
    throw std::invalid_argument("ring partition: expected a CxHxW feature map");
  const int channels = feature_map.shape[0];
  const int h = feature_map.shape[1], w = feature_map.shape[2];
  if (h != w) throw std::invalid_argument("ring partition: feature map must be square");
  const auto assignment = RingAssignment(h, n_rings);

  PartEmbeddings parts;
  parts.rings = Eigen::MatrixXd::Zero(n_rings, channels);
  std::vector<double> counts(n_rings, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) counts[assignment[static_cast<size_t>(y) * w + x]] += 1.0;
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        parts.rings(assignment[static_cast<size_t>(y) * w + x], c) += feature_map.At(c, y, x);
      }
    }
  }
  for (int r = 0; r < n_rings; ++r) parts.rings.row(r) /= counts[r];
  return parts;
}

nn::Tensor SquareRingPartitionBackward(const Eigen::MatrixXd& d_rings, int channels, int grid_size,
                                       int n_rings) {
  const auto assignment = RingAssignment(grid_size, n_rings);
  std::vector<double> counts(n_rings, 0.0);
  for (int i : assignment) counts[i] += 1.0;
  nn::Tensor d_fm({channels, grid_size, grid_size});
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < grid_size; ++y)
      for (int x = 0; x < grid_size; ++x) {
        const int ring = assignment[static_cast<size_t>(y) * grid_size + x];
        d_fm.At(c, y, x) = d_rings(ring, c) / counts[ring];
      }
  return d_fm;
}

Eigen::VectorXd GlobalEmbedding(const PartEmbeddings& parts) {
  const int n = parts.NumRings(), c = parts.Channels();
  Eigen::VectorXd concat(static_cast<Eigen::Index>(n) * c);
  for (int r = 0; r < n; ++r) concat.segment(static_cast<Eigen::Index>(r) * c, c) = parts.rings.row(r);
  const double norm = concat.norm();
  if (norm < 1e-12) throw std::runtime_error("degenerate embedding: all-zero ring concatenation");
  return concat / norm;
}

Eigen::VectorXd GlobalEmbeddingBackward(const Eigen::VectorXd& concat,
                                        const Eigen::VectorXd& d_embedding) {
  const double norm = concat.norm();
  if (norm < 1e-12) throw std::runtime_error("degenerate embedding: all-zero ring concatenation");
  const Eigen::VectorXd e = concat / norm;
  return (d_embedding - e * e.dot(d_embedding)) / norm;
}

Encoder::Encoder(const EncoderConfig& config, uint64_t seed)
    : config_(config),
      conv1_("stage1/encoder/conv1", 3, config.channels1),
      conv2_("stage1/encoder/conv2", config.channels1, config.channels2),
      conv3_("stage1/encoder/conv3", config.channels2, config.out_channels) {
  if (config.input_resolution % 8 != 0)
    throw std::invalid_argument("encoder: input resolution must be a multiple of 8");
  std::mt19937_64 rng(MixSeed(seed, 1));
  conv1_.InitHeNormal(rng);
  conv2_.InitHeNormal(rng);
  conv3_.InitHeNormal(rng);
}

nn::Tensor Encoder::ImageToTensor(const Image& image) const {
  nn::Tensor x({3, image.height, image.width});
  for (int y = 0; y < image.height; ++y)
    for (int xx = 0; xx < image.width; ++xx)
      for (int c = 0; c < 3; ++c) x.At(c, y, xx) = image.At(xx, y, c);
  return x;
}

nn::Tensor Encoder::Forward(const nn::Tensor& x, Acts* acts) const {
  if (x.shape.size() != 3 || x.shape[0] != 3 || x.shape[1] != config_.input_resolution ||
      x.shape[2] != config_.input_resolution)
    throw std::invalid_argument("encoder: input must be 3x" +
                                std::to_string(config_.input_resolution) + "x" +
                                std::to_string(config_.input_resolution));
  nn::Tensor a1 = nn::Relu(conv1_.Forward(x));
  nn::Tensor a2 = nn::Relu(conv2_.Forward(a1));
  nn::Tensor a3 = nn::Relu(conv3_.Forward(a2));
  if (acts) {
    acts->x = x;
    acts->a1 = a1;
    acts->a2 = a2;
    acts->a3 = a3;
  }
  return a3;
}

nn::Tensor Encoder::Forward(const Image& image, Acts* acts) const {
  if (image.width != config_.input_resolution || image.height != config_.input_resolution)
    throw std::invalid_argument("encoder: image is not at the configured input resolution");
  return Forward(ImageToTensor(image), acts);
}

nn::Tensor Encoder::Backward(const Acts& acts, const nn::Tensor& d_out) {
  nn::Tensor d3 = nn::ReluBackward(acts.a3, d_out);
  nn::Tensor d_a2 = conv3_.Backward(acts.a2, d3);
  nn::Tensor d2 = nn::ReluBackward(acts.a2, d_a2);
  nn::Tensor d_a1 = conv2_.Backward(acts.a1, d2);
  nn::Tensor d1 = nn::ReluBackward(acts.a1, d_a1);
  return conv1_.Backward(acts.x, d1);
}

void Encoder::CollectParams(std::vector<nn::Parameter*>& out) {
  conv1_.CollectParams(out);
  conv2_.CollectParams(out);
  conv3_.CollectParams(out);
}

ClassifierBank::ClassifierBank(int n_rings, int channels, int n_categories, uint64_t seed)
    : n_categories_(n_categories) {
  if (n_rings < 1 || channels < 1 || n_categories < 1)
    throw std::invalid_argument("classifier bank: invalid dimensions");
  heads_.reserve(n_rings);
  for (int r = 0; r < n_rings; ++r) {
    heads_.emplace_back("stage1/classifiers/ring" + std::to_string(r), channels, n_categories);
    std::mt19937_64 rng(MixSeed(seed, 100 + r));
    heads_.back().InitHeNormal(rng);
  }
}

std::vector<Eigen::VectorXd> ClassifierBank::Forward(const PartEmbeddings& parts) const {
  if (parts.NumRings() != NumRings())
    throw std::invalid_argument("classifier bank: ring count mismatch");
  std::vector<Eigen::VectorXd> logits;
  logits.reserve(heads_.size());
  for (size_t r = 0; r < heads_.size(); ++r)
    logits.push_back(heads_[r].Forward(parts.rings.row(static_cast<Eigen::Index>(r))));
  return logits;
}

Eigen::MatrixXd ClassifierBank::Backward(const PartEmbeddings& parts,
                                         const std::vector<Eigen::VectorXd>& d_logits) {
  if (d_logits.size() != heads_.size())
    throw std::invalid_argument("classifier bank: gradient ring count mismatch");
  Eigen::MatrixXd d_rings = Eigen::MatrixXd::Zero(parts.NumRings(), parts.Channels());
  for (size_t r = 0; r < heads_.size(); ++r) {
    d_rings.row(static_cast<Eigen::Index>(r)) =
        heads_[r].Backward(parts.rings.row(static_cast<Eigen::Index>(r)), d_logits[r]);
  }
  return d_rings;
}

void ClassifierBank::CollectParams(std::vector<nn::Parameter*>& out) {
  for (auto& h : heads_) h.CollectParams(out);
}

MatchHead::MatchHead(int n_rings, int channels, uint64_t seed) : channels_(channels) {
  if (n_rings < 1 || channels < 1) throw std::invalid_argument("match head: invalid dimensions");
  fuser_l1_.reserve(n_rings);
  fuser_l2_.reserve(n_rings);
  for (int r = 0; r < n_rings; ++r) {
    const std::string base = "stage2/match/fuser" + std::to_string(r);
    fuser_l1_.emplace_back(base + "/l1", 2 * channels, 4 * channels);
    fuser_l2_.emplace_back(base + "/l2", 4 * channels, channels);
    std::mt19937_64 rng(MixSeed(seed, 200 + r));
    fuser_l1_.back().InitHeNormal(rng);
    fuser_l2_.back().InitHeNormal(rng);
  }
  const int concat_dim = n_rings * channels;
  proj1_ = nn::Linear("stage2/match/proj1", concat_dim, 2 * concat_dim);
  proj2_ = nn::Linear("stage2/match/proj2", 2 * concat_dim, 2);
  std::mt19937_64 rng(MixSeed(seed, 300));
  proj1_.InitHeNormal(rng);
  proj2_.InitZero();  // fresh head outputs exactly 0.5
}

double MatchHead::Forward(const PartEmbeddings& a, const PartEmbeddings& b, Acts* acts) const {
  const int n = NumRings();
  if (a.NumRings() != n || b.NumRings() != n || a.Channels() != channels_ ||
      b.Channels() != channels_)
    throw std::invalid_argument("match head: part embedding dimensions mismatch");

  Acts local;
  Acts& s = acts ? *acts : local;
  s.fuse_in.resize(n);
  s.h1.resize(n);
  s.fused.resize(n);
  s.concat.resize(static_cast<Eigen::Index>(n) * channels_);
  for (int r = 0; r < n; ++r) {
    Eigen::VectorXd in(2 * channels_);
    in.head(channels_) = a.rings.row(r);
    in.tail(channels_) = b.rings.row(r);
    s.fuse_in[r] = in;
    s.h1[r] = fuser_l1_[r].Forward(in).cwiseMax(0.0);
    s.fused[r] = fuser_l2_[r].Forward(s.h1[r]);
    s.concat.segment(static_cast<Eigen::Index>(r) * channels_, channels_) = s.fused[r];
  }
  s.h2 = proj1_.Forward(s.concat).cwiseMax(0.0);
  const Eigen::VectorXd logits = proj2_.Forward(s.h2);
  s.logits = Eigen::Vector2d(logits[0], logits[1]);
  const double m = std::max(s.logits[0], s.logits[1]);
  const double e0 = std::exp(s.logits[0] - m);
  const double e1 = std::exp(s.logits[1] - m);
  s.p_match = e1 / (e0 + e1);
  return s.p_match;
}

void MatchHead::Backward(const Acts& acts, const Eigen::Vector2d& d_logits, Eigen::MatrixXd* d_a,
                         Eigen::MatrixXd* d_b) {
  const int n = NumRings();
  Eigen::VectorXd d_h2 = proj2_.Backward(acts.h2, d_logits);
  for (Eigen::Index i = 0; i < d_h2.size(); ++i)
    if (acts.h2[i] <= 0.0) d_h2[i] = 0.0;
  const Eigen::VectorXd d_concat = proj1_.Backward(acts.concat, d_h2);
  if (d_a) d_a->setZero(n, channels_);
  if (d_b) d_b->setZero(n, channels_);
  for (int r = 0; r < n; ++r) {
    const Eigen::VectorXd d_fused = d_concat.segment(static_cast<Eigen::Index>(r) * channels_, channels_);
    Eigen::VectorXd d_h1 = fuser_l2_[r].Backward(acts.h1[r], d_fused);
    for (Eigen::Index i = 0; i < d_h1.size(); ++i)
      if (acts.h1[r][i] <= 0.0) d_h1[i] = 0.0;
    const Eigen::VectorXd d_in = fuser_l1_[r].Backward(acts.fuse_in[r], d_h1);
    if (d_a) d_a->row(r) = d_in.head(channels_);
    if (d_b) d_b->row(r) = d_in.tail(channels_);
  }
}

void MatchHead::CollectParams(std::vector<nn::Parameter*>& out) {
  for (size_t r = 0; r < fuser_l1_.size(); ++r) {
    fuser_l1_[r].CollectParams(out);
    fuser_l2_[r].CollectParams(out);
  }
  proj1_.CollectParams(out);
  proj2_.CollectParams(out);
}

Stage1Model::Stage1Model(const EncoderConfig& config_in, int n_categories, double tau_init,
                         uint64_t seed)
    : config(config_in),
      encoder(config_in, seed),
      classifiers(config_in.n_rings, config_in.out_channels, n_categories, seed),
      log_tau("stage1/log_tau", {1}) {
  if (!(tau_init > 0.0)) throw std::invalid_argument("stage1: tau_init must be > 0");
  log_tau.value.v[0] = std::log(tau_init);
}

int Stage1Model::ClassIndex(int location_id) const {
  const auto it = std::find(category_ids.begin(), category_ids.end(), location_id);
  if (it == category_ids.end())
    throw std::invalid_argument("unknown training category id: " + std::to_string(location_id));
  return static_cast<int>(it - category_ids.begin());
}

PartEmbeddings Stage1Model::EncodeParts(const Image& image, Encoder::Acts* acts) const {
  return SquareRingPartition(encoder.Forward(image, acts), config.n_rings);
}

Eigen::VectorXd Stage1Model::Embed(const Image& image) const {
  return GlobalEmbedding(EncodeParts(image));
}

void Stage1Model::CollectParams(std::vector<nn::Parameter*>& encoder_params,
                                std::vector<nn::Parameter*>& other_params) {
  encoder.CollectParams(encoder_params);
  classifiers.CollectParams(other_params);
  other_params.push_back(&log_tau);
}

std::vector<std::pair<std::string, const nn::Tensor*>> Stage1Model::NamedTensors() const {
  auto* self = const_cast<Stage1Model*>(this);
  std::vector<nn::Parameter*> enc, other;
  self->CollectParams(enc, other);
  std::vector<std::pair<std::string, const nn::Tensor*>> out;
  for (auto* p : enc) out.emplace_back(p->name, &p->value);
  for (auto* p : other) out.emplace_back(p->name, &p->value);
  return out;
}

void Stage1Model::LoadTensors(const std::map<std::string, nn::Tensor>& tensors) {
  std::vector<nn::Parameter*> enc, other;
  CollectParams(enc, other);
  std::vector<nn::Parameter*> all = enc;
  all.insert(all.end(), other.begin(), other.end());
  for (auto* p : all) {
    const auto it = tensors.find(p->name);
    if (it == tensors.end()) throw std::runtime_error("checkpoint missing tensor: " + p->name);
    if (it->second.shape != p->value.shape)
      throw std::runtime_error("checkpoint shape mismatch for " + p->name);
    p->value = it->second;
  }
}

std::vector<std::pair<std::string, const nn::Tensor*>> Stage2Model::NamedTensors() const {
  auto* self = const_cast<Stage2Model*>(this);
  std::vector<nn::Parameter*> params;
  self->CollectParams(params);
  std::vector<std::pair<std::string, const nn::Tensor*>> out;
  for (auto* p : params) out.emplace_back(p->name, &p->value);
  return out;
}

void Stage2Model::LoadTensors(const std::map<std::string, nn::Tensor>& tensors) {
  std::vector<nn::Parameter*> params;
  CollectParams(params);
  for (auto* p : params) {
    const auto it = tensors.find(p->name);
    if (it == tensors.end()) throw std::runtime_error("checkpoint missing tensor: " + p->name);
    if (it->second.shape != p->value.shape)
      throw std::runtime_error("checkpoint shape mismatch for " + p->name);
    p->value = it->second;
  }
}

namespace {

nn::Tensor ConfigTensor(const Stage1Model& model) {
  nn::Tensor t({6});
  t.v = {static_cast<double>(model.config.input_resolution),
         static_cast<double>(model.config.n_rings),
         static_cast<double>(model.config.channels1),
         static_cast<double>(model.config.channels2),
         static_cast<double>(model.config.out_channels),
         static_cast<double>(model.classifiers.NumCategories())};
  return t;
}

nn::Tensor CategoryTensor(const Stage1Model& model) {
  nn::Tensor t({static_cast<int>(model.category_ids.size())});
  for (size_t i = 0; i < model.category_ids.size(); ++i)
    t.v[i] = static_cast<double>(model.category_ids[i]);
  return t;
}

}  // namespace

void SaveStage1Checkpoint(const std::filesystem::path& path, const Stage1Model& model) {
  auto tensors = model.NamedTensors();
  const nn::Tensor config = ConfigTensor(model);
  const nn::Tensor categories = CategoryTensor(model);
  tensors.emplace_back("stage1/config", &config);
  tensors.emplace_back("stage1/categories", &categories);
  nn::SaveCheckpoint(path, tensors);
}

Stage1Model LoadStage1Checkpoint(const std::filesystem::path& path) {
  const auto tensors = nn::LoadCheckpoint(path);
  const auto cfg_it = tensors.find("stage1/config");
  if (cfg_it == tensors.end()) throw std::runtime_error("checkpoint missing stage1/config");
  const auto& c = cfg_it->second.v;
  EncoderConfig config;
  config.input_resolution = static_cast<int>(c[0]);
  config.n_rings = static_cast<int>(c[1]);
  config.channels1 = static_cast<int>(c[2]);
  config.channels2 = static_cast<int>(c[3]);
  config.out_channels = static_cast<int>(c[4]);
  Stage1Model model(config, static_cast<int>(c[5]), 0.07, 0);
  model.LoadTensors(tensors);
  const auto cat_it = tensors.find("stage1/categories");
  if (cat_it == tensors.end()) throw std::runtime_error("checkpoint missing stage1/categories");
  model.category_ids.clear();
  for (double v : cat_it->second.v) model.category_ids.push_back(static_cast<int>(v));
  return model;
}

void SaveCombinedCheckpoint(const std::filesystem::path& path, const Stage1Model& stage1,
                            const Stage2Model& stage2) {
  auto tensors = stage1.NamedTensors();
  const nn::Tensor config = ConfigTensor(stage1);
  const nn::Tensor categories = CategoryTensor(stage1);
  tensors.emplace_back("stage1/config", &config);
  tensors.emplace_back("stage1/categories", &categories);
  const auto stage2_tensors = stage2.NamedTensors();
  tensors.insert(tensors.end(), stage2_tensors.begin(), stage2_tensors.end());
  nn::SaveCheckpoint(path, tensors);
}

Stage2Model LoadStage2Checkpoint(const std::filesystem::path& path, const Stage1Model& stage1) {
  const auto tensors = nn::LoadCheckpoint(path);
  Stage2Model model(stage1.config.n_rings, stage1.config.out_channels, 0);
  model.LoadTensors(tensors);
  return model;
}

uint64_t Stage1NamespaceHash(const std::filesystem::path& checkpoint_path) {
  return nn::HashCheckpointNamespace(nn::LoadCheckpoint(checkpoint_path), "stage1/");
}

}  // namespace bevloc::model
