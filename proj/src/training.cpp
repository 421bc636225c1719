#include "bevloc/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "bevloc/util.hpp"

namespace bevloc::train {

namespace {

Eigen::VectorXd Softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

void AppendLog(const std::filesystem::path& path, const std::string& line) {
  if (path.empty()) return;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  out << line << "\n";
}

}  // namespace

double InstanceLoss(const std::vector<Eigen::VectorXd>& logits_sat,
                    const std::vector<Eigen::VectorXd>& logits_bev, int label) {
  return InstanceLossWithGrads(logits_sat, logits_bev, label, nullptr, nullptr);
}

double InstanceLossWithGrads(const std::vector<Eigen::VectorXd>& logits_sat,
                             const std::vector<Eigen::VectorXd>& logits_bev, int label,
                             std::vector<Eigen::VectorXd>* d_logits_sat,
                             std::vector<Eigen::VectorXd>* d_logits_bev) {
  if (logits_sat.size() != logits_bev.size())
    throw std::invalid_argument("instance loss: ring counts differ between views");
  if (logits_sat.empty()) throw std::invalid_argument("instance loss: no rings");
  if (d_logits_sat) d_logits_sat->assign(logits_sat.size(), Eigen::VectorXd());
  if (d_logits_bev) d_logits_bev->assign(logits_bev.size(), Eigen::VectorXd());

  double loss = 0.0;
  for (size_t r = 0; r < logits_sat.size(); ++r) {
    if (label < 0 || label >= logits_sat[r].size() || label >= logits_bev[r].size())
      throw std::invalid_argument("instance loss: label out of range");
    const Eigen::VectorXd p_sat = Softmax(logits_sat[r]);
    const Eigen::VectorXd p_bev = Softmax(logits_bev[r]);
    loss += -std::log(p_sat[label]) - std::log(p_bev[label]);
    if (d_logits_sat) {
      (*d_logits_sat)[r] = p_sat;
      (*d_logits_sat)[r][label] -= 1.0;
    }
    if (d_logits_bev) {
      (*d_logits_bev)[r] = p_bev;
      (*d_logits_bev)[r][label] -= 1.0;
    }
  }
  return loss;
}

double ContrastiveLoss(const Eigen::MatrixXd& f_sat, const Eigen::MatrixXd& f_bev, double tau) {
  return ContrastiveLossWithGrads(f_sat, f_bev, tau, nullptr, nullptr, nullptr);
}

double ContrastiveLossWithGrads(const Eigen::MatrixXd& f_sat, const Eigen::MatrixXd& f_bev,
                                double tau, Eigen::MatrixXd* d_f_sat, Eigen::MatrixXd* d_f_bev,
                                double* d_tau) {
  const Eigen::Index n = f_sat.rows();
  if (n < 2) throw std::invalid_argument("contrastive loss: batch must contain >= 2 pairs");
  if (f_bev.rows() != n || f_bev.cols() != f_sat.cols())
    throw std::invalid_argument("contrastive loss: batch shapes differ");
  if (!(tau > 0.0)) throw std::invalid_argument("contrastive loss: tau must be > 0");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(f_sat.row(i).norm() - 1.0) > 1e-6 || std::abs(f_bev.row(i).norm() - 1.0) > 1e-6)
      throw std::invalid_argument("contrastive loss: embeddings must be unit vectors");
  }

  const Eigen::MatrixXd sims = f_sat * f_bev.transpose();  // S(i,j) = s(f_sat_i, f_bev_j)
  const Eigen::MatrixXd scaled = sims / tau;

  // Row softmax (sat anchors over bev gallery) and column softmax (bev anchors
  // over sat gallery).
  Eigen::MatrixXd row_p(n, n), col_p(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = scaled.row(i).maxCoeff();
    const Eigen::ArrayXd e = (scaled.row(i).array() - m).exp();
    row_p.row(i) = e / e.sum();
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const double m = scaled.col(j).maxCoeff();
    const Eigen::ArrayXd e = (scaled.col(j).array() - m).exp();
    col_p.col(j) = e / e.sum();
  }

  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    loss += -0.5 * (std::log(row_p(i, i)) + std::log(col_p(i, i)));
  loss /= static_cast<double>(n);

  if (d_f_sat || d_f_bev || d_tau) {
    Eigen::MatrixXd d_scaled = (row_p + col_p) / (2.0 * static_cast<double>(n));
    for (Eigen::Index i = 0; i < n; ++i) d_scaled(i, i) -= 1.0 / static_cast<double>(n);
    if (d_tau) *d_tau = -(d_scaled.array() * sims.array()).sum() / (tau * tau);
    const Eigen::MatrixXd d_sims = d_scaled / tau;
    if (d_f_sat) *d_f_sat = d_sims * f_bev;
    if (d_f_bev) *d_f_bev = d_sims.transpose() * f_sat;
  }
  return loss;
}

double MatchingLoss(double p_hat, int p_m) { return MatchingLossWithGrad(p_hat, p_m, nullptr); }

double MatchingLossWithGrad(double p_hat, int p_m, double* d_p_hat) {
  if (p_m != 0 && p_m != 1) throw std::invalid_argument("matching loss: p_m must be 0 or 1");
  const double clamped = std::clamp(p_hat, 1e-7, 1.0 - 1e-7);
  const double loss = -(p_m * std::log(clamped) + (1 - p_m) * std::log(1.0 - clamped));
  if (d_p_hat) {
    const bool inside = p_hat > 1e-7 && p_hat < 1.0 - 1e-7;
    *d_p_hat = inside ? -(p_m / clamped - (1 - p_m) / (1.0 - clamped)) : 0.0;
  }
  return loss;
}

HardNegatives SelectHardNegatives(int anchor_index,
                                  const std::vector<double>& stage1_similarities,
                                  const std::vector<int>& gallery_labels,
                                  const std::vector<SynthPoolItem>& synth_pool, int k) {
  if (k < 1) throw std::invalid_argument("select_hard_negatives: k must be >= 1");
  if (stage1_similarities.size() != gallery_labels.size())
    throw std::invalid_argument("select_hard_negatives: similarity/label size mismatch");
  if (anchor_index < 0 || anchor_index >= static_cast<int>(gallery_labels.size()))
    throw std::invalid_argument("select_hard_negatives: anchor index out of range");
  if (synth_pool.empty())
    throw std::invalid_argument("select_hard_negatives: synthetic pool is empty");

  const int anchor_label = gallery_labels[anchor_index];
  std::vector<int> eligible;
  for (int j = 0; j < static_cast<int>(gallery_labels.size()); ++j)
    if (gallery_labels[j] != anchor_label) eligible.push_back(j);
  if (static_cast<int>(eligible.size()) < k) {
    throw std::runtime_error("insufficient eligible negatives: need " + std::to_string(k) +
                             ", have " + std::to_string(eligible.size()));
  }
  std::sort(eligible.begin(), eligible.end(), [&](int a, int b) {
    if (stage1_similarities[a] != stage1_similarities[b])
      return stage1_similarities[a] > stage1_similarities[b];
    return a < b;
  });
  if (static_cast<int>(synth_pool.size()) < k) {
    throw std::runtime_error("insufficient eligible negatives: synthetic pool has " +
                             std::to_string(synth_pool.size()) + ", need " + std::to_string(k));
  }
  std::vector<int> pool_order(synth_pool.size());
  std::iota(pool_order.begin(), pool_order.end(), 0);
  std::sort(pool_order.begin(), pool_order.end(), [&](int a, int b) {
    if (synth_pool[a].similarity != synth_pool[b].similarity)
      return synth_pool[a].similarity > synth_pool[b].similarity;
    return synth_pool[a].index < synth_pool[b].index;
  });

  HardNegatives out;
  out.real.assign(eligible.begin(), eligible.begin() + k);
  for (int i = 0; i < k; ++i) out.synthetic.push_back(synth_pool[pool_order[i]].index);
  return out;
}

namespace {

struct SampleCache {
  model::Encoder::Acts acts_bev, acts_sat;
  model::PartEmbeddings parts_bev, parts_sat;
  Eigen::VectorXd concat_bev, concat_sat;
  std::vector<Eigen::VectorXd> logits_bev, logits_sat;
  int label = 0;
};

Eigen::VectorXd ConcatRings(const model::PartEmbeddings& parts) {
  const int n = parts.NumRings(), c = parts.Channels();
  Eigen::VectorXd concat(static_cast<Eigen::Index>(n) * c);
  for (int r = 0; r < n; ++r)
    concat.segment(static_cast<Eigen::Index>(r) * c, c) = parts.rings.row(r);
  return concat;
}

Eigen::MatrixXd RingsFromConcatGrad(const Eigen::VectorXd& d_concat, int n_rings, int channels) {
  Eigen::MatrixXd d_rings(n_rings, channels);
  for (int r = 0; r < n_rings; ++r)
    d_rings.row(r) = d_concat.segment(static_cast<Eigen::Index>(r) * channels, channels);
  return d_rings;
}

const std::vector<Image>& InputFrames(const LocationData& loc, Stage1Input input) {
  return input == Stage1Input::kBev ? loc.bev_frames : loc.drone_frames;
}

std::vector<std::vector<int>> MakeBatches(std::vector<int> order, int batch_size) {
  std::vector<std::vector<int>> batches;
  for (size_t start = 0; start < order.size(); start += batch_size) {
    const size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  // Contrastive terms need at least two pairs; fold a trailing singleton into
  // the previous batch.
  if (batches.size() > 1 && batches.back().size() < 2) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }
  return batches;
}

}  // namespace

model::Stage1Model TrainStage1(const TrainData& data, const Stage1Config& config,
                               std::vector<double>* epoch_losses) {
  if (data.locations.empty()) throw std::invalid_argument("train_stage1: empty dataset");
  if (data.locations.size() < 2)
    throw std::invalid_argument("train_stage1: need at least two locations for contrastive pairs");
  for (const auto& loc : data.locations)
    if (InputFrames(loc, config.input).empty())
      throw std::invalid_argument("train_stage1: location " + std::to_string(loc.id) +
                                  " has no input frames");

  std::vector<int> ids;
  for (const auto& loc : data.locations) ids.push_back(loc.id);
  std::sort(ids.begin(), ids.end());

  model::Stage1Model model(config.encoder, static_cast<int>(ids.size()), config.tau_init,
                           config.seed);
  model.category_ids = ids;

  std::vector<nn::Parameter*> encoder_params, other_params;
  model.CollectParams(encoder_params, other_params);
  nn::AdamW optimizer({{encoder_params, config.lr_encoder}, {other_params, config.lr_other}},
                      config.weight_decay);

  std::mt19937_64 rng(MixSeed(config.seed, 0xa11ce));
  const int n = static_cast<int>(data.locations.size());
  const int n_rings = config.encoder.n_rings;
  const int grid = config.encoder.OutGrid();
  const int channels = config.encoder.out_channels;
  const Eigen::Index embed_dim = static_cast<Eigen::Index>(n_rings) * channels;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_instance = 0.0, epoch_contrastive = 0.0;
    int n_batches = 0;
    for (const auto& batch : MakeBatches(order, config.batch_size)) {
      const int b = static_cast<int>(batch.size());
      std::vector<SampleCache> cache(b);
      Eigen::MatrixXd e_sat(b, embed_dim), e_bev(b, embed_dim);

      double batch_instance = 0.0;
      std::vector<std::vector<Eigen::VectorXd>> d_logits_sat(b), d_logits_bev(b);
      for (int s = 0; s < b; ++s) {
        const LocationData& loc = data.locations[batch[s]];
        SampleCache& sc = cache[s];
        const auto& frames = InputFrames(loc, config.input);
        std::uniform_int_distribution<size_t> pick(0, frames.size() - 1);
        const Image& bev_img = frames[pick(rng)];

        sc.parts_bev = model::SquareRingPartition(
            model.encoder.Forward(bev_img, &sc.acts_bev), n_rings);
        sc.parts_sat = model::SquareRingPartition(
            model.encoder.Forward(loc.satellite, &sc.acts_sat), n_rings);
        sc.logits_bev = model.classifiers.Forward(sc.parts_bev);
        sc.logits_sat = model.classifiers.Forward(sc.parts_sat);
        sc.label = model.ClassIndex(loc.id);
        sc.concat_bev = ConcatRings(sc.parts_bev);
        sc.concat_sat = ConcatRings(sc.parts_sat);
        e_bev.row(s) = sc.concat_bev / sc.concat_bev.norm();
        e_sat.row(s) = sc.concat_sat / sc.concat_sat.norm();

        batch_instance += InstanceLossWithGrads(sc.logits_sat, sc.logits_bev, sc.label,
                                                &d_logits_sat[s], &d_logits_bev[s]);
      }
      batch_instance /= b;

      Eigen::MatrixXd d_e_sat, d_e_bev;
      double d_tau = 0.0;
      const double tau = model.Tau();
      const double batch_contrastive =
          ContrastiveLossWithGrads(e_sat, e_bev, tau, &d_e_sat, &d_e_bev, &d_tau);

      optimizer.ZeroGrad();
      model.log_tau.grad.v[0] += d_tau * tau;  // d loss / d log_tau
      for (int s = 0; s < b; ++s) {
        SampleCache& sc = cache[s];
        for (auto& g : d_logits_sat[s]) g /= b;
        for (auto& g : d_logits_bev[s]) g /= b;

        Eigen::MatrixXd d_rings_sat = model.classifiers.Backward(sc.parts_sat, d_logits_sat[s]);
        Eigen::MatrixXd d_rings_bev = model.classifiers.Backward(sc.parts_bev, d_logits_bev[s]);
        d_rings_sat += RingsFromConcatGrad(
            model::GlobalEmbeddingBackward(sc.concat_sat, d_e_sat.row(s)), n_rings, channels);
        d_rings_bev += RingsFromConcatGrad(
            model::GlobalEmbeddingBackward(sc.concat_bev, d_e_bev.row(s)), n_rings, channels);

        model.encoder.Backward(
            sc.acts_sat, model::SquareRingPartitionBackward(d_rings_sat, channels, grid, n_rings));
        model.encoder.Backward(
            sc.acts_bev, model::SquareRingPartitionBackward(d_rings_bev, channels, grid, n_rings));
      }
      optimizer.Step();

      epoch_instance += batch_instance;
      epoch_contrastive += batch_contrastive;
      ++n_batches;
    }

    epoch_instance /= n_batches;
    epoch_contrastive /= n_batches;
    const double total = epoch_instance + epoch_contrastive;
    if (epoch_losses) epoch_losses->push_back(total);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream line;
    line << "stage=1 epoch=" << epoch << " instance=" << epoch_instance
         << " contrastive=" << epoch_contrastive << " total=" << total << " tau=" << model.Tau()
         << " seconds=" << secs;
    AppendLog(config.log_path, line.str());
  }
  return model;
}

namespace {

struct PoolEntry {
  model::PartEmbeddings parts;
  Eigen::VectorXd embedding;
};

PoolEntry MakeEntry(const model::Stage1Model& stage1, const Image& image) {
  PoolEntry e;
  e.parts = stage1.EncodeParts(image);
  e.embedding = model::GlobalEmbedding(e.parts);
  return e;
}

}  // namespace

model::Stage2Model TrainStage2(const TrainData& data, model::Stage1Model& stage1,
                               Stage2Strategy strategy, const Stage2Config& config,
                               std::vector<double>* epoch_losses) {
  if (data.locations.empty()) throw std::invalid_argument("train_stage2: empty dataset");
  const int n = static_cast<int>(data.locations.size());
  const int k = config.k_negatives;
  if (config.negatives == NegativeSource::kSynthetic) {
    for (const auto& loc : data.locations) {
      if (static_cast<int>(loc.synth_bev.size()) < 1 ||
          static_cast<int>(loc.synth_satellite.size()) < 1)
        throw std::runtime_error(
            "train_stage2: missing synthetic pool for location " + std::to_string(loc.id) +
            "; run synthesize_negatives (gen-data with negatives enabled) first");
    }
  }

  model::Stage2Model stage2(stage1.config.n_rings, stage1.config.out_channels,
                            MixSeed(config.seed, 0x57a6e2));

  std::vector<nn::Parameter*> stage2_params;
  stage2.CollectParams(stage2_params);
  std::vector<nn::AdamW::Group> groups{{stage2_params, config.lr}};
  const bool train_stage1_too = strategy != Stage2Strategy::kFreeze;
  if (train_stage1_too) {
    std::vector<nn::Parameter*> enc, other;
    stage1.CollectParams(enc, other);
    groups.push_back({enc, config.lr_stage1_encoder});
    groups.push_back({other, config.lr_stage1_other});
  }
  nn::AdamW optimizer(std::move(groups), config.weight_decay);

  std::mt19937_64 rng(MixSeed(config.seed, 0xbee));
  const int n_rings = stage1.config.n_rings;
  const int channels = stage1.config.out_channels;
  const int grid = stage1.config.OutGrid();

  std::vector<int> labels;
  for (const auto& loc : data.locations) labels.push_back(loc.id);

  // Synthetic pools are flat across locations; entry index maps back to
  // (location, image) via division.
  std::vector<PoolEntry> pool_bev, pool_sat;
  int per_loc_bev = 0, per_loc_sat = 0;
  const auto rebuild_synth_pools = [&]() {
    pool_bev.clear();
    pool_sat.clear();
    if (config.negatives != NegativeSource::kSynthetic) return;
    for (const auto& loc : data.locations) {
      for (const auto& img : loc.synth_bev) pool_bev.push_back(MakeEntry(stage1, img));
      for (const auto& img : loc.synth_satellite) pool_sat.push_back(MakeEntry(stage1, img));
    }
    per_loc_bev = n > 0 ? static_cast<int>(pool_bev.size()) / n : 0;
    per_loc_sat = n > 0 ? static_cast<int>(pool_sat.size()) / n : 0;
  };
  rebuild_synth_pools();

  std::vector<PoolEntry> sat_entries(n);
  const auto rebuild_sat_entries = [&]() {
    for (int i = 0; i < n; ++i) sat_entries[i] = MakeEntry(stage1, data.locations[i].satellite);
  };
  rebuild_sat_entries();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (train_stage1_too && epoch > 1) {
      rebuild_synth_pools();
      rebuild_sat_entries();
    }

    // One anchor frame per location per epoch.
    std::vector<PoolEntry> bev_entries(n);
    std::vector<const Image*> bev_images(n);
    for (int i = 0; i < n; ++i) {
      const auto& frames = InputFrames(data.locations[i], config.input);
      if (frames.empty())
        throw std::invalid_argument("train_stage2: location has no input frames");
      std::uniform_int_distribution<size_t> pick(0, frames.size() - 1);
      bev_images[i] = &frames[pick(rng)];
      bev_entries[i] = MakeEntry(stage1, *bev_images[i]);
    }

    Eigen::MatrixXd sims(n, n);  // sims(i, j) = s(bev_i, sat_j)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) sims(i, j) = bev_entries[i].embedding.dot(sat_entries[j].embedding);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    int epoch_pairs = 0;
    for (const auto& batch : MakeBatches(order, config.batch_size)) {
      // (anchor_entry, candidate_entry, p_m, anchor_image, candidate_image)
      struct Pair {
        const PoolEntry* a;
        const PoolEntry* b;
        int p_m;
        const Image* a_img;
        const Image* b_img;
        int a_label;  // class index of the anchor (stage-1 losses, non-freeze)
      };
      std::vector<Pair> pairs;

      for (int anchor : batch) {
        const int cls = train_stage1_too ? stage1.ClassIndex(data.locations[anchor].id) : 0;
        // BEV anchored: positive satellite + real satellite negatives.
        std::vector<double> row(n);
        for (int j = 0; j < n; ++j) row[j] = sims(anchor, j);
        pairs.push_back({&bev_entries[anchor], &sat_entries[anchor], 1, bev_images[anchor],
                         &data.locations[anchor].satellite, cls});
        // Satellite anchored: positive BEV + real BEV negatives.
        std::vector<double> col(n);
        for (int j = 0; j < n; ++j) col[j] = sims(j, anchor);
        pairs.push_back({&sat_entries[anchor], &bev_entries[anchor], 1,
                         &data.locations[anchor].satellite, bev_images[anchor], cls});

        if (config.negatives == NegativeSource::kSynthetic) {
          std::vector<SynthPoolItem> synth_bev_items(pool_bev.size());
          for (size_t p = 0; p < pool_bev.size(); ++p)
            synth_bev_items[p] = {static_cast<int>(p),
                                  bev_entries[anchor].embedding.dot(pool_bev[p].embedding)};
          const HardNegatives negs_bev =
              SelectHardNegatives(anchor, row, labels, synth_bev_items, k);
          for (int j : negs_bev.real)
            pairs.push_back({&bev_entries[anchor], &sat_entries[j], 0, bev_images[anchor],
                             &data.locations[j].satellite, cls});
          for (int p : negs_bev.synthetic)
            pairs.push_back({&bev_entries[anchor], &pool_bev[p], 0, bev_images[anchor],
                             &data.locations[p / per_loc_bev].synth_bev[p % per_loc_bev], cls});

          std::vector<SynthPoolItem> synth_sat_items(pool_sat.size());
          for (size_t p = 0; p < pool_sat.size(); ++p)
            synth_sat_items[p] = {static_cast<int>(p),
                                  sat_entries[anchor].embedding.dot(pool_sat[p].embedding)};
          const HardNegatives negs_sat =
              SelectHardNegatives(anchor, col, labels, synth_sat_items, k);
          for (int j : negs_sat.real)
            pairs.push_back({&sat_entries[anchor], &bev_entries[j], 0,
                             &data.locations[anchor].satellite, bev_images[j], cls});
          for (int p : negs_sat.synthetic)
            pairs.push_back({&sat_entries[anchor], &pool_sat[p], 0,
                             &data.locations[anchor].satellite,
                             &data.locations[p / per_loc_sat].synth_satellite[p % per_loc_sat],
                             cls});
        } else {
          // In-batch negatives: the k most similar other batch members.
          std::vector<std::pair<double, int>> bev_cands, sat_cands;
          for (int other : batch) {
            if (data.locations[other].id == data.locations[anchor].id) continue;
            bev_cands.push_back({sims(anchor, other), other});
            sat_cands.push_back({sims(other, anchor), other});
          }
          std::sort(bev_cands.begin(), bev_cands.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
          });
          std::sort(sat_cands.begin(), sat_cands.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
          });
          const int kk = std::min<int>(k, static_cast<int>(bev_cands.size()));
          for (int t = 0; t < kk; ++t) {
            const int j = bev_cands[t].second;
            pairs.push_back({&bev_entries[anchor], &sat_entries[j], 0, bev_images[anchor],
                             &data.locations[j].satellite, cls});
          }
          for (int t = 0; t < kk; ++t) {
            const int j = sat_cands[t].second;
            pairs.push_back({&sat_entries[anchor], &bev_entries[j], 0,
                             &data.locations[anchor].satellite, bev_images[j], cls});
          }
        }
      }
      if (pairs.empty()) continue;

      optimizer.ZeroGrad();
      double batch_loss = 0.0;
      const double pair_scale = 1.0 / static_cast<double>(pairs.size());
      for (const auto& pr : pairs) {
        if (!train_stage1_too) {
          model::MatchHead::Acts acts;
          const double p_hat = stage2.match_head.Forward(pr.a->parts, pr.b->parts, &acts);
          batch_loss += MatchingLoss(p_hat, pr.p_m);
          const double d = (p_hat - pr.p_m) * pair_scale;
          stage2.match_head.Backward(acts, Eigen::Vector2d(-d, d), nullptr, nullptr);
        } else {
          // Joint training: recompute parts with activations so the matching
          // loss reaches the encoder.
          model::Encoder::Acts acts_a, acts_b;
          const model::PartEmbeddings parts_a =
              model::SquareRingPartition(stage1.encoder.Forward(*pr.a_img, &acts_a), n_rings);
          const model::PartEmbeddings parts_b =
              model::SquareRingPartition(stage1.encoder.Forward(*pr.b_img, &acts_b), n_rings);
          model::MatchHead::Acts acts;
          const double p_hat = stage2.match_head.Forward(parts_a, parts_b, &acts);
          batch_loss += MatchingLoss(p_hat, pr.p_m);
          const double d = (p_hat - pr.p_m) * pair_scale;
          Eigen::MatrixXd d_a, d_b;
          stage2.match_head.Backward(acts, Eigen::Vector2d(-d, d), &d_a, &d_b);
          stage1.encoder.Backward(
              acts_a, model::SquareRingPartitionBackward(d_a, channels, grid, n_rings));
          stage1.encoder.Backward(
              acts_b, model::SquareRingPartitionBackward(d_b, channels, grid, n_rings));
        }
      }
      batch_loss *= pair_scale;

      if (train_stage1_too) {
        // Stage-1 losses continue on the anchors of this batch.
        const int b = static_cast<int>(batch.size());
        if (b >= 2) {
          std::vector<SampleCache> cache(b);
          Eigen::MatrixXd e_sat(b, static_cast<Eigen::Index>(n_rings) * channels);
          Eigen::MatrixXd e_bev(b, static_cast<Eigen::Index>(n_rings) * channels);
          std::vector<std::vector<Eigen::VectorXd>> d_ls(b), d_lb(b);
          for (int s = 0; s < b; ++s) {
            const int anchor = batch[s];
            SampleCache& sc = cache[s];
            sc.parts_bev = model::SquareRingPartition(
                stage1.encoder.Forward(*bev_images[anchor], &sc.acts_bev), n_rings);
            sc.parts_sat = model::SquareRingPartition(
                stage1.encoder.Forward(data.locations[anchor].satellite, &sc.acts_sat), n_rings);
            sc.logits_bev = stage1.classifiers.Forward(sc.parts_bev);
            sc.logits_sat = stage1.classifiers.Forward(sc.parts_sat);
            sc.label = stage1.ClassIndex(data.locations[anchor].id);
            sc.concat_bev = ConcatRings(sc.parts_bev);
            sc.concat_sat = ConcatRings(sc.parts_sat);
            e_bev.row(s) = sc.concat_bev / sc.concat_bev.norm();
            e_sat.row(s) = sc.concat_sat / sc.concat_sat.norm();
            InstanceLossWithGrads(sc.logits_sat, sc.logits_bev, sc.label, &d_ls[s], &d_lb[s]);
          }
          Eigen::MatrixXd d_e_sat, d_e_bev;
          double d_tau = 0.0;
          const double tau = stage1.Tau();
          ContrastiveLossWithGrads(e_sat, e_bev, tau, &d_e_sat, &d_e_bev, &d_tau);
          stage1.log_tau.grad.v[0] += d_tau * tau;
          for (int s = 0; s < b; ++s) {
            SampleCache& sc = cache[s];
            for (auto& g : d_ls[s]) g /= b;
            for (auto& g : d_lb[s]) g /= b;
            Eigen::MatrixXd d_rings_sat = stage1.classifiers.Backward(sc.parts_sat, d_ls[s]);
            Eigen::MatrixXd d_rings_bev = stage1.classifiers.Backward(sc.parts_bev, d_lb[s]);
            d_rings_sat += RingsFromConcatGrad(
                model::GlobalEmbeddingBackward(sc.concat_sat, d_e_sat.row(s)), n_rings, channels);
            d_rings_bev += RingsFromConcatGrad(
                model::GlobalEmbeddingBackward(sc.concat_bev, d_e_bev.row(s)), n_rings, channels);
            stage1.encoder.Backward(sc.acts_sat, model::SquareRingPartitionBackward(
                                                     d_rings_sat, channels, grid, n_rings));
            stage1.encoder.Backward(sc.acts_bev, model::SquareRingPartitionBackward(
                                                     d_rings_bev, channels, grid, n_rings));
          }
        }
      }
      optimizer.Step();
      epoch_loss += batch_loss * pairs.size();
      epoch_pairs += static_cast<int>(pairs.size());
    }

    const double mean_loss = epoch_pairs > 0 ? epoch_loss / epoch_pairs : 0.0;
    if (epoch_losses) epoch_losses->push_back(mean_loss);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream line;
    line << "stage=2 epoch=" << epoch << " matching=" << mean_loss << " pairs=" << epoch_pairs
         << " seconds=" << secs;
    AppendLog(config.log_path, line.str());
  }
  return stage2;
}

}  // namespace bevloc::train
