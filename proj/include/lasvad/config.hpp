#pragma once

// Flat "key = value" configuration files for training and corpus synthesis.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lasvad/synth.hpp"

namespace lasvad {

struct TrainConfig {
  double learning_rate = 2e-5;
  int batch_size = 64;
  int epochs = 10;
  double lambda = 0.3;
  double lambda_cst = 1.0;
  double eta = 0.5;
  double tau = 0.9;
  double beta = 0.1;
  double alpha = 0.5;
  int M = 16;
  double temp_sim = 0.07;
  int window_length = 64;
  int window_stride = 0;  // 0 -> window_length / 2
  int head_count = 4;
  double nms_iou = 0.5;
  double theta_v = 0.1;
  double theta_s = 0.2;
  int max_frames = 256;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  int acc_warmup_epochs = 1;
  double cst_temperature = 1.0;
  bool soft_pseudo_labels = false;
  int merge_gap = 0;
  double margin_ratio = 0.25;
  int ff_dim = 0;         // 0 -> 4 D
  int intent_hidden = 0;  // 0 -> 3 floor(D/3)

  static const std::vector<std::string>& keys();

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  void validate() const;
  int effective_stride() const { return window_stride > 0 ? window_stride : std::max(1, window_length / 2); }

  std::map<std::string, std::string> to_map() const;
  static TrainConfig from_map(const std::map<std::string, std::string>& values);
};

// Reads "key = value" lines; '#' starts a comment; blank lines are skipped.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

TrainConfig load_train_config(const std::filesystem::path& path);

// Keys: n_videos, C, D, T_min, T_max, anomaly_ratio, snr, seed.
SynthConfig synth_config_from_map(const std::map<std::string, std::string>& values);
SynthConfig load_synth_config(const std::filesystem::path& path);

}  // namespace lasvad
