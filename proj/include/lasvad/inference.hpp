#pragma once

// Coarse scoring, fine-grained instance extraction and evaluation metrics.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "lasvad/autodiff.hpp"
#include "lasvad/data_io.hpp"

namespace lasvad {

struct AnomalyInstance {
  Index start = 0;  // inclusive
  Index end = 0;    // inclusive
  int category = 1;
  double confidence = 0.0;

  bool operator==(const AnomalyInstance&) const = default;
};

struct Interval {
  Index start = 0;
  Index end = 0;
};

struct InstanceOptions {
  double theta_v = 0.1;
  double theta_s = 0.2;
  Index merge_gap = 0;          // candidates separated by <= merge_gap frames join one instance
  double margin_ratio = 0.25;   // outer margin = max(1, ceil(ratio * L)) per side
  double nms_iou = 0.5;
};

// s[t] = ((1 - p_f[t,0]) + q_b[t,1]) / 2.
Vector coarse_scores(const Matrix& p_f, const Matrix& q_b);

// Categories c >= 1 with p_v[c] > theta_v; runs of frames with p_f[t,c] > theta_s.
// Confidence is left at 0.
std::vector<AnomalyInstance> extract_instances(const RowVector& p_v, const Matrix& p_f, double theta_v,
                                               double theta_s, Index merge_gap = 0);

// inner mean minus mean over the clipped margins on both sides; inner alone when
// the clipped outer region is empty.
double outer_inner_confidence(std::span<const double> scores, const AnomalyInstance& instance,
                              double margin_ratio = 0.25);

// Inclusive-bound temporal IoU.
double temporal_iou(Interval a, Interval b);

// Greedy per-category suppression; output sorted by descending confidence with
// (start, end) as tie-break.
std::vector<AnomalyInstance> nms(std::vector<AnomalyInstance> instances, double iou_threshold);

// Full fine-grained pipeline on one video.
std::vector<AnomalyInstance> detect_instances(const Matrix& p_f, const InstanceOptions& options);

// Rank-averaged ROC AUC. Throws UndefinedMetricError if only one class is present.
double frame_auc(std::span<const double> scores, std::span<const int> labels);

// Step-wise average precision; ties broken by original index.
double frame_ap(std::span<const double> scores, std::span<const int> labels);

struct VideoDetections {
  std::string video_id;
  std::vector<AnomalyInstance> instances;
};

struct VideoGroundTruth {
  std::string video_id;
  std::vector<GroundTruthInstance> instances;
};

inline const std::vector<double> kDefaultIouThresholds = {0.1, 0.2, 0.3, 0.4, 0.5};

struct MapResult {
  std::map<double, double> map_at;
  double avg_map = 0.0;
};

// Detection mAP: per category, predictions sorted by confidence are greedily
// matched to the best-IoU unmatched ground truth of the same video; AP uses the
// frame_ap staircase; mAP averages categories with ground truth.
MapResult map_at_iou(const std::vector<VideoDetections>& predictions, const std::vector<VideoGroundTruth>& ground_truth,
                     const std::vector<double>& thresholds = kDefaultIouThresholds);

struct EvalReport {
  double frame_ap = 0.0;
  double frame_auc = 0.0;
  std::map<double, double> map_at;
  double avg_map = 0.0;
};

}  // namespace lasvad
