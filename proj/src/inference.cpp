#include "lasvad/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>

#include "lasvad/error.hpp"
#include "lasvad/heads.hpp"

namespace lasvad {

namespace {

// Sum over hits of (R_k - R_{k-1}) * P_k, walking a ranked list.
double staircase_ap(const std::vector<char>& hits_in_rank_order, std::size_t total_positives) {
  if (total_positives == 0) throw UndefinedMetricError("average precision needs at least one positive");
  double ap = 0.0;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < hits_in_rank_order.size(); ++k) {
    if (!hits_in_rank_order[k]) continue;
    ++tp;
    ap += static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  return ap / static_cast<double>(total_positives);
}

}  // namespace

Vector coarse_scores(const Matrix& p_f, const Matrix& q_b) {
  if (p_f.rows() != q_b.rows() || q_b.cols() != 2) throw ArgumentError("coarse_scores: shape mismatch");
  return ((1.0 - p_f.col(0).array()) + q_b.col(1).array()).matrix() / 2.0;
}

std::vector<AnomalyInstance> extract_instances(const RowVector& p_v, const Matrix& p_f, double theta_v,
                                               double theta_s, Index merge_gap) {
  if (p_v.size() != p_f.cols()) throw ArgumentError("extract_instances: p_v and p_f disagree on C+1");
  if (merge_gap < 0) throw ArgumentError("extract_instances: merge_gap must be >= 0");
  std::vector<AnomalyInstance> out;
  const Index frames = p_f.rows();
  for (Index c = 1; c < p_f.cols(); ++c) {
    if (!(p_v(c) > theta_v)) continue;
    Index t = 0;
    while (t < frames) {
      if (!(p_f(t, c) > theta_s)) {
        ++t;
        continue;
      }
      const Index start = t;
      Index end = t;
      Index probe = t + 1;
      while (probe < frames) {
        if (p_f(probe, c) > theta_s) {
          end = probe;
          ++probe;
        } else if (probe - end <= merge_gap) {
          ++probe;
        } else {
          break;
        }
      }
      out.push_back({start, end, static_cast<int>(c), 0.0});
      t = end + 1;
    }
  }
  return out;
}

double outer_inner_confidence(std::span<const double> scores, const AnomalyInstance& instance, double margin_ratio) {
  const auto n = static_cast<Index>(scores.size());
  if (instance.start < 0 || instance.end < instance.start || instance.end >= n) {
    throw ArgumentError("outer_inner_confidence: instance out of bounds");
  }
  const Index len = instance.end - instance.start + 1;
  const Index margin = std::max<Index>(1, static_cast<Index>(std::ceil(margin_ratio * static_cast<double>(len))));
  double inner = 0.0;
  for (Index t = instance.start; t <= instance.end; ++t) inner += scores[static_cast<std::size_t>(t)];
  inner /= static_cast<double>(len);

  double outer = 0.0;
  Index count = 0;
  for (Index t = std::max<Index>(0, instance.start - margin); t < instance.start; ++t, ++count) {
    outer += scores[static_cast<std::size_t>(t)];
  }
  for (Index t = instance.end + 1; t <= std::min(n - 1, instance.end + margin); ++t, ++count) {
    outer += scores[static_cast<std::size_t>(t)];
  }
  if (count == 0) return inner;
  return inner - outer / static_cast<double>(count);
}

double temporal_iou(Interval a, Interval b) {
  const Index inter = std::min(a.end, b.end) - std::max(a.start, b.start) + 1;
  if (inter <= 0) return 0.0;
  const Index uni = (a.end - a.start + 1) + (b.end - b.start + 1) - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<AnomalyInstance> nms(std::vector<AnomalyInstance> instances, double iou_threshold) {
  std::sort(instances.begin(), instances.end(), [](const AnomalyInstance& a, const AnomalyInstance& b) {
    return std::tie(b.confidence, a.start, a.end, a.category) < std::tie(a.confidence, b.start, b.end, b.category);
  });
  std::vector<AnomalyInstance> kept;
  for (const AnomalyInstance& cand : instances) {
    bool suppressed = false;
    for (const AnomalyInstance& k : kept) {
      if (k.category == cand.category && temporal_iou({k.start, k.end}, {cand.start, cand.end}) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

std::vector<AnomalyInstance> detect_instances(const Matrix& p_f, const InstanceOptions& options) {
  const RowVector p_v = video_scores(p_f);
  std::vector<AnomalyInstance> found = extract_instances(p_v, p_f, options.theta_v, options.theta_s, options.merge_gap);
  for (AnomalyInstance& inst : found) {
    const Vector column = p_f.col(inst.category);
    inst.confidence = outer_inner_confidence(std::span<const double>(column.data(), static_cast<std::size_t>(column.size())),
                                             inst, options.margin_ratio);
  }
  return nms(std::move(found), options.nms_iou);
}

double frame_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ArgumentError("frame_auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0) {
      pos += 1.0;
      rank_sum += rank[i];
    } else {
      neg += 1.0;
    }
  }
  if (pos == 0.0 || neg == 0.0) throw UndefinedMetricError("frame_auc needs both positive and negative frames");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double frame_ap(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ArgumentError("frame_ap: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<char> hits(order.size());
  std::size_t positives = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    hits[k] = labels[order[k]] != 0;
    positives += hits[k] ? 1u : 0u;
  }
  if (positives == 0) throw UndefinedMetricError("frame_ap needs at least one positive frame");
  return staircase_ap(hits, positives);
}

MapResult map_at_iou(const std::vector<VideoDetections>& predictions, const std::vector<VideoGroundTruth>& ground_truth,
                     const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw ArgumentError("map_at_iou: no thresholds");
  std::unordered_map<std::string, std::size_t> video_index;
  for (std::size_t v = 0; v < ground_truth.size(); ++v) video_index.emplace(ground_truth[v].video_id, v);

  std::set<int> categories;
  for (const auto& v : ground_truth) {
    for (const auto& g : v.instances) categories.insert(g.category);
  }
  if (categories.empty()) throw UndefinedMetricError("map_at_iou: no ground-truth instances");

  struct Candidate {
    std::size_t video;
    AnomalyInstance inst;
  };

  MapResult result;
  for (double thr : thresholds) {
    double ap_sum = 0.0;
    for (int cat : categories) {
      std::vector<Candidate> cands;
      for (const auto& v : predictions) {
        auto it = video_index.find(v.video_id);
        if (it == video_index.end()) continue;
        for (const auto& inst : v.instances) {
          if (inst.category == cat) cands.push_back({it->second, inst});
        }
      }
      std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        return std::tie(b.inst.confidence, a.video, a.inst.start, a.inst.end) <
               std::tie(a.inst.confidence, b.video, b.inst.start, b.inst.end);
      });

      std::vector<std::vector<char>> used(ground_truth.size());
      std::size_t total = 0;
      for (std::size_t v = 0; v < ground_truth.size(); ++v) {
        used[v].assign(ground_truth[v].instances.size(), 0);
        for (const auto& g : ground_truth[v].instances) total += g.category == cat ? 1u : 0u;
      }

      std::vector<char> hits(cands.size(), 0);
      for (std::size_t k = 0; k < cands.size(); ++k) {
        const auto& gts = ground_truth[cands[k].video].instances;
        double best = -1.0;
        std::size_t best_idx = 0;
        for (std::size_t i = 0; i < gts.size(); ++i) {
          if (gts[i].category != cat || used[cands[k].video][i]) continue;
          const double iou = temporal_iou({cands[k].inst.start, cands[k].inst.end}, {gts[i].start, gts[i].end});
          if (iou > best) {
            best = iou;
            best_idx = i;
          }
        }
        if (best >= thr) {
          hits[k] = 1;
          used[cands[k].video][best_idx] = 1;
        }
      }
      ap_sum += staircase_ap(hits, total);
    }
    result.map_at[thr] = ap_sum / static_cast<double>(categories.size());
  }
  double avg = 0.0;
  for (const auto& [thr, v] : result.map_at) avg += v;
  result.avg_map = avg / static_cast<double>(result.map_at.size());
  return result;
}

}  // namespace lasvad
