#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bevloc/image.hpp"
#include "bevloc/model.hpp"

namespace bevloc::eval {

// Mean over the frame axis of an F x G per-frame score matrix.
Eigen::VectorXd LateFuse(const Eigen::MatrixXd& per_frame_scores);

// Reorders the first k entries of stage1_order by descending match
// probability (ties keep stage-1 order); the tail is untouched.
// match_probabilities[i] belongs to stage1_order[i]. k larger than the gallery
// is clamped.
std::vector<int> RerankTopk(const std::vector<int>& stage1_order,
                            const std::vector<double>& match_probabilities, int k);

// 1 if ground_truth_id appears within the first k entries, else 0. The id must
// be present somewhere in the ranking.
double RecallAtK(const std::vector<int>& ranking, int ground_truth_id, int k);

// Mean of precision at each relevant item's rank.
double AveragePrecision(const std::vector<int>& ranking, const std::vector<int>& relevant_ids);

// A query or gallery item: one location id and one or more frames (videos are
// their frame sequences; satellite items hold a single frame).
struct EvalItem {
  int id = 0;
  std::vector<Image> frames;
};

struct RetrievalRun {
  std::string direction;
  // Per query: F_q x G per-frame scores (gallery videos are fused into each
  // entry symmetrically, i.e. the entry is the mean over gallery frames).
  std::vector<Eigen::MatrixXd> frame_scores;
  Eigen::MatrixXd fused;                         // Q x G
  std::vector<std::vector<int>> stage1_ranking;  // gallery indices
  std::vector<std::vector<int>> final_ranking;
  std::map<int, double> recall_at;  // k -> mean recall
  double ap_mean = 0.0;
  int topk = 32;
  int num_queries = 0;
  int gallery_size = 0;
};

// Full two-stage retrieval: embed all frames with stage-1, score with cosine
// similarity, late-fuse, rank, optionally re-rank the top-k by the match
// head's probabilities (fused over frame pairs the same way), and compute
// R@{1,5,10} and AP. Deterministic given the models and items.
RetrievalRun Evaluate(const std::vector<EvalItem>& queries, const std::vector<EvalItem>& gallery,
                      const model::Stage1Model& stage1, const model::MatchHead* match_head,
                      int topk, const std::string& direction);

void WriteMetrics(const std::filesystem::path& path, const RetrievalRun& run);

}  // namespace bevloc::eval
