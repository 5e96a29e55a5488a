#pragma once

// Training loop, inference, evaluation and curve dumps behind the CLI.

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lasvad/acc.hpp"
#include "lasvad/checkpoint.hpp"
#include "lasvad/config.hpp"
#include "lasvad/data_io.hpp"
#include "lasvad/iam.hpp"
#include "lasvad/inference.hpp"
#include "lasvad/model.hpp"

namespace lasvad {

struct TrainingVideo {
  std::string video_id;
  Matrix features;  // at most max_frames rows
  int y = 0;
  int g = 0;
};

// Rows floor(i * T / max_frames) for i < max_frames when T > max_frames.
Matrix subsample_frames(const Matrix& features, Index max_frames);

std::vector<TrainingVideo> load_training_videos(const std::vector<VideoRecord>& records, Index max_frames);

ModelShape model_shape(const TrainConfig& config, Index dim, int num_categories);
TrainState initial_state(const TrainConfig& config, const TextBank& bank);

using Batch = std::vector<const TrainingVideo*>;

std::vector<VideoForward> forward_batch(ad::Tape& tape, const ModelVars& vars, const Model& model, const Batch& batch);

// Non-differentiable targets of one step: ACC pseudo-labels per video and the
// contrastive pairs over the batch-wide frame pool (indices into the rows of
// all X_int stacked in batch order).
struct BatchTargets {
  std::vector<Matrix> pseudo;
  std::vector<ContrastivePair> pairs;
};

BatchTargets compute_targets(const std::vector<VideoForward>& forwards, const Batch& batch, const TrainConfig& config);

struct BatchLoss {
  ad::Var total;
  ad::Var ags, fg, aux, reg, cst;  // per-video terms are batch means
};

// total = ags + fg + aux_weight * aux + lambda * reg + lambda_cst * cst
BatchLoss assemble_loss(ad::Tape& tape, const std::vector<VideoForward>& forwards, const Batch& batch,
                        const BatchTargets& targets, const TrainConfig& config, double aux_weight);

struct StepRecord {
  int epoch = 0;
  int step = 0;  // global, 0-based
  bool aux_active = false;
  LossComponents parts;
  double total = 0.0;
};

nlohmann::ordered_json step_json(const StepRecord& r);

// One optimisation step: forward, targets, loss, backward, AdamW, prototype update.
StepRecord train_step(TrainState& state, const Batch& batch, int epoch, int step);

// Runs the remaining epochs of state.config. Step and epoch records are written
// to `log` as JSON lines when it is non-null.
std::vector<StepRecord> run_training(TrainState& state, const std::vector<TrainingVideo>& videos, std::ostream* log);

struct TrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::vector<StepRecord> steps;
};

// Writes <out_dir>/checkpoint.lasc and <out_dir>/train_log.jsonl.
TrainOutputs train(const TrainConfig& config, const std::filesystem::path& manifest,
                   const std::filesystem::path& text_bank_prefix, const std::filesystem::path& out_dir);

struct VideoPrediction {
  std::string video_id;
  Vector coarse;
  std::vector<AnomalyInstance> instances;
};

InstanceOptions instance_options(const TrainConfig& config);

VideoPrediction predict_video(const Model& model, const std::string& video_id, const Matrix& features,
                              const InstanceOptions& options);

// Manifest order. When `components` is non-null the ACC components of each
// video are dumped there as JSON lines.
std::vector<VideoPrediction> infer(const TrainState& state, const std::vector<VideoRecord>& records,
                                   std::ostream* components = nullptr);

void write_predictions(std::ostream& out, const std::vector<VideoPrediction>& predictions);
void write_predictions(const std::filesystem::path& path, const std::vector<VideoPrediction>& predictions);
std::vector<VideoPrediction> read_predictions(const std::filesystem::path& path);

// 1 inside any ground-truth instance, else 0.
std::vector<int> frame_labels(const VideoRecord& record, Index frames);

EvalReport evaluate(const std::vector<VideoPrediction>& predictions, const std::vector<VideoRecord>& records);

nlohmann::ordered_json report_json(const EvalReport& report);
std::string report_table(const EvalReport& report);

// One CSV per video: frame,coarse,ground_truth.
void write_curves(const std::vector<VideoPrediction>& predictions, const std::vector<VideoRecord>& records,
                  const std::filesystem::path& out_dir);

}  // namespace lasvad
