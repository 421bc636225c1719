#include "bevloc/evaluation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "bevloc/util.hpp"

namespace bevloc::eval {

Eigen::VectorXd LateFuse(const Eigen::MatrixXd& per_frame_scores) {
  if (per_frame_scores.rows() < 1)
    throw std::invalid_argument("late_fuse: need at least one frame");
  return per_frame_scores.colwise().mean();
}

std::vector<int> RerankTopk(const std::vector<int>& stage1_order,
                            const std::vector<double>& match_probabilities, int k) {
  const int g = static_cast<int>(stage1_order.size());
  k = std::min(k, g);  // documented clamp: enables sweeps past the gallery size
  if (static_cast<int>(match_probabilities.size()) != k)
    throw std::invalid_argument("rerank_topk: need exactly k match probabilities");
  std::vector<int> head(k);
  std::iota(head.begin(), head.end(), 0);
  std::stable_sort(head.begin(), head.end(), [&](int a, int b) {
    return match_probabilities[a] > match_probabilities[b];
  });
  std::vector<int> out(stage1_order);
  for (int i = 0; i < k; ++i) out[i] = stage1_order[head[i]];
  return out;
}

double RecallAtK(const std::vector<int>& ranking, int ground_truth_id, int k) {
  if (std::find(ranking.begin(), ranking.end(), ground_truth_id) == ranking.end())
    throw std::invalid_argument("recall_at_k: ground truth absent from the ranking");
  const int upto = std::min<int>(k, static_cast<int>(ranking.size()));
  for (int i = 0; i < upto; ++i)
    if (ranking[i] == ground_truth_id) return 1.0;
  return 0.0;
}

double AveragePrecision(const std::vector<int>& ranking, const std::vector<int>& relevant_ids) {
  if (relevant_ids.empty()) throw std::invalid_argument("average_precision: empty relevant set");
  double sum = 0.0;
  int hits = 0;
  for (size_t i = 0; i < ranking.size(); ++i) {
    if (std::find(relevant_ids.begin(), relevant_ids.end(), ranking[i]) != relevant_ids.end()) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  if (hits == 0) throw std::invalid_argument("average_precision: no relevant id in the ranking");
  return sum / hits;
}

namespace {

struct EncodedItem {
  int id = 0;
  std::vector<model::PartEmbeddings> parts;
  std::vector<Eigen::VectorXd> embeddings;
};

EncodedItem EncodeItem(const EvalItem& item, const model::Stage1Model& stage1, bool keep_parts) {
  if (item.frames.empty()) throw std::invalid_argument("evaluate: item with no frames");
  EncodedItem out;
  out.id = item.id;
  for (const auto& frame : item.frames) {
    model::PartEmbeddings parts = stage1.EncodeParts(frame);
    out.embeddings.push_back(model::GlobalEmbedding(parts));
    if (keep_parts) out.parts.push_back(std::move(parts));
  }
  return out;
}

}  // namespace

RetrievalRun Evaluate(const std::vector<EvalItem>& queries, const std::vector<EvalItem>& gallery,
                      const model::Stage1Model& stage1, const model::MatchHead* match_head,
                      int topk, const std::string& direction) {
  if (queries.empty() || gallery.empty())
    throw std::invalid_argument("evaluate: empty query or gallery set");

  const bool keep_parts = match_head != nullptr;
  std::vector<EncodedItem> q_enc, g_enc;
  q_enc.reserve(queries.size());
  g_enc.reserve(gallery.size());
  for (const auto& q : queries) q_enc.push_back(EncodeItem(q, stage1, keep_parts));
  for (const auto& g : gallery) g_enc.push_back(EncodeItem(g, stage1, keep_parts));

  const int nq = static_cast<int>(q_enc.size());
  const int ng = static_cast<int>(g_enc.size());

  RetrievalRun run;
  run.direction = direction;
  run.topk = topk;
  run.num_queries = nq;
  run.gallery_size = ng;
  run.fused.resize(nq, ng);
  run.frame_scores.reserve(nq);

  for (int i = 0; i < nq; ++i) {
    const int fq = static_cast<int>(q_enc[i].embeddings.size());
    Eigen::MatrixXd scores(fq, ng);
    for (int f = 0; f < fq; ++f) {
      for (int j = 0; j < ng; ++j) {
        // Gallery-side videos fuse symmetrically: mean over their frames.
        double acc = 0.0;
        for (const auto& ge : g_enc[j].embeddings) acc += q_enc[i].embeddings[f].dot(ge);
        scores(f, j) = acc / static_cast<double>(g_enc[j].embeddings.size());
      }
    }
    run.fused.row(i) = LateFuse(scores);
    run.frame_scores.push_back(std::move(scores));
  }

  for (int i = 0; i < nq; ++i) {
    std::vector<int> order(ng);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return run.fused(i, a) > run.fused(i, b);
    });
    run.stage1_ranking.push_back(order);
  }

  run.final_ranking = run.stage1_ranking;
  if (match_head != nullptr) {
    const int k = std::min(topk, ng);
    for (int i = 0; i < nq; ++i) {
      std::vector<double> probs(k);
      for (int t = 0; t < k; ++t) {
        const int j = run.stage1_ranking[i][t];
        // Match probabilities fuse over frame pairs the same way similarities do.
        double acc = 0.0;
        int count = 0;
        for (const auto& qp : q_enc[i].parts) {
          for (const auto& gp : g_enc[j].parts) {
            acc += match_head->Forward(qp, gp);
            ++count;
          }
        }
        probs[t] = acc / count;
      }
      run.final_ranking[i] = RerankTopk(run.stage1_ranking[i], probs, k);
    }
  }

  // Metrics. Every query must have its ground-truth location in the gallery.
  std::vector<int> gallery_ids(ng);
  for (int j = 0; j < ng; ++j) gallery_ids[j] = g_enc[j].id;
  const std::vector<int> ks = {1, 5, 10};
  for (int k : ks) run.recall_at[k] = 0.0;
  double ap_sum = 0.0;
  for (int i = 0; i < nq; ++i) {
    int gt_index = -1;
    for (int j = 0; j < ng; ++j)
      if (gallery_ids[j] == q_enc[i].id) gt_index = j;
    if (gt_index < 0)
      throw std::invalid_argument("evaluate: query id " + std::to_string(q_enc[i].id) +
                                  " has no gallery ground truth (direction/dataset mismatch)");
    for (int k : ks) run.recall_at[k] += RecallAtK(run.final_ranking[i], gt_index, k);
    ap_sum += AveragePrecision(run.final_ranking[i], {gt_index});
  }
  for (int k : ks) run.recall_at[k] /= nq;
  run.ap_mean = ap_sum / nq;
  return run;
}

void WriteMetrics(const std::filesystem::path& path, const RetrievalRun& run) {
  nlohmann::json j;
  j["direction"] = run.direction;
  j["num_queries"] = run.num_queries;
  j["gallery_size"] = run.gallery_size;
  j["topk"] = run.topk;
  nlohmann::json recalls;
  for (const auto& [k, v] : run.recall_at) recalls[std::to_string(k)] = v;
  j["recall_at"] = recalls;
  j["ap_mean"] = run.ap_mean;
  WriteTextFile(path, j.dump(2) + "\n");
}

}  // namespace bevloc::eval
