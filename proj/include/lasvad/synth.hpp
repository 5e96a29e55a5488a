#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lasvad/data_io.hpp"

namespace lasvad {

// Desk-scale stand-in for a real feature corpus.
//
// Category centroids are mu_c = normalize(b + kappa * u_c) with b and u_c
// orthonormal and kappa = snr / 4, so the pairwise centroid cosine is
// 1 / (1 + kappa^2). Per-frame noise is AR(1)-smoothed Gaussian with expected
// norm 1 / sqrt(snr). Text rows are mu_c plus perturbations of norm 0.1 / snr.
struct SynthConfig {
  int n_videos = 40;
  int num_categories = 3;
  int dim = 24;
  int t_min = 64;
  int t_max = 128;
  double anomaly_ratio = 0.5;
  double snr = 8.0;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SynthCorpus {
  std::filesystem::path manifest_path;
  std::filesystem::path text_bank_prefix;
  std::vector<VideoRecord> records;
  Matrix centroids;  // (C+1) x D, unit rows
};

// Number of abnormal videos: round(anomaly_ratio * n_videos), kept in [1, n-1].
int synthetic_abnormal_count(const SynthConfig& config);

// Writes manifest.jsonl, features/<id>.lasf and text_bank.{names,attrs}.lasf / .labels.txt.
SynthCorpus generate_synthetic_corpus(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace lasvad
