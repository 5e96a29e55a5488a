#include "lasvad/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lasvad/error.hpp"
#include "lasvad/random.hpp"

namespace lasvad {

namespace fs = std::filesystem;

namespace {

constexpr double kNoiseCorrelation = 0.7;

RowVector random_unit(Rng& rng, Index dim) {
  RowVector v(dim);
  do {
    for (Index i = 0; i < dim; ++i) v(i) = rng.normal();
  } while (v.norm() < 1e-12);
  return v / v.norm();
}

// Base direction b followed by directions u_0..u_C, orthonormal when they fit in D.
std::vector<RowVector> basis(Rng& rng, Index dim, int count) {
  std::vector<RowVector> out;
  for (int i = 0; i < count; ++i) {
    RowVector v = random_unit(rng, dim);
    if (static_cast<Index>(out.size()) < dim) {
      for (const RowVector& u : out) v -= v.dot(u) * u;
      if (v.norm() < 1e-9) v = random_unit(rng, dim);
    }
    out.push_back(v / v.norm());
  }
  return out;
}

std::string video_name(int i) {
  std::string s = std::to_string(i);
  return "vid_" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

// Non-overlapping segments: one per equal slot, each placed randomly inside its slot.
std::vector<GroundTruthInstance> place_segments(Rng& rng, int frames, int category) {
  const int wanted = static_cast<int>(rng.integer(1, 3));
  const int count = std::max(1, std::min(wanted, frames));
  std::vector<GroundTruthInstance> out;
  const int slot = frames / count;
  for (int k = 0; k < count; ++k) {
    const int slot_start = k * slot;
    const int slot_len = (k == count - 1) ? frames - slot_start : slot;
    const int lo = std::max(1, slot_len / 4);
    const int hi = std::max(lo, (slot_len * 3) / 4);
    const int len = static_cast<int>(rng.integer(lo, hi));
    const int start = slot_start + static_cast<int>(rng.integer(0, slot_len - len));
    out.push_back({start, start + len - 1, category});
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_videos < 2) throw ConfigError("synth: n_videos must be >= 2");
  if (num_categories < 1) throw ConfigError("synth: C must be >= 1");
  if (dim < 3) throw ConfigError("synth: D must be >= 3");
  if (t_min < 1 || t_max < t_min) throw ConfigError("synth: invalid T range");
  if (!(anomaly_ratio > 0.0 && anomaly_ratio < 1.0)) throw ConfigError("synth: anomaly_ratio must be in (0,1)");
  if (!(snr > 0.0) || !std::isfinite(snr)) throw ConfigError("synth: snr must be positive and finite");
}

int synthetic_abnormal_count(const SynthConfig& config) {
  const int n = static_cast<int>(std::lround(config.anomaly_ratio * config.n_videos));
  return std::clamp(n, 1, config.n_videos - 1);
}

SynthCorpus generate_synthetic_corpus(const SynthConfig& config, const fs::path& out_dir) {
  config.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "features", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "features").string() + ": " + ec.message());

  Rng rng(config.seed);
  const Index dim = config.dim;
  const int classes = config.num_categories + 1;

  const std::vector<RowVector> dirs = basis(rng, dim, classes + 1);
  const double kappa = config.snr / 4.0;
  Matrix centroids(classes, dim);
  for (int c = 0; c < classes; ++c) {
    RowVector m = dirs[0] + kappa * dirs[static_cast<std::size_t>(c) + 1];
    centroids.row(c) = m / m.norm();
  }

  // Per-element std so that E||noise|| ~ 1/sqrt(snr).
  const double sigma = 1.0 / std::sqrt(config.snr * static_cast<double>(dim));
  const double innovation = std::sqrt(1.0 - kNoiseCorrelation * kNoiseCorrelation);

  std::vector<int> order(static_cast<std::size_t>(config.n_videos));
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1))]);
  }
  const int abnormal = synthetic_abnormal_count(config);
  std::vector<int> category(static_cast<std::size_t>(config.n_videos), 0);
  for (int k = 0; k < abnormal; ++k) category[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = 1 + k % config.num_categories;

  SynthCorpus corpus;
  corpus.centroids = centroids;
  for (int v = 0; v < config.n_videos; ++v) {
    const int g = category[static_cast<std::size_t>(v)];
    const int frames = static_cast<int>(rng.integer(config.t_min, config.t_max));
    VideoRecord rec;
    rec.video_id = video_name(v);
    rec.feature_path = "features/" + rec.video_id + ".lasf";
    rec.resolved_path = out_dir / rec.feature_path;
    rec.y = g == 0 ? 0 : 1;
    rec.g = g;
    if (g != 0) rec.instances = place_segments(rng, frames, g);

    std::vector<int> frame_class(static_cast<std::size_t>(frames), 0);
    for (const auto& inst : rec.instances) {
      for (int t = inst.start; t <= inst.end; ++t) frame_class[static_cast<std::size_t>(t)] = inst.category;
    }
    FloatMatrix feats(frames, dim);
    RowVector noise = rng.normal_matrix(1, dim, sigma);
    for (int t = 0; t < frames; ++t) {
      if (t > 0) noise = kNoiseCorrelation * noise + innovation * rng.normal_matrix(1, dim, sigma);
      feats.row(t) = (centroids.row(frame_class[static_cast<std::size_t>(t)]) + noise).cast<float>();
    }
    write_feature_file(rec.resolved_path, feats);
    corpus.records.push_back(std::move(rec));
  }

  const double text_noise = 0.1 / config.snr;
  TextBank bank;
  bank.names.resize(classes, dim);
  bank.attributes.resize(classes, dim);
  for (int c = 0; c < classes; ++c) {
    bank.names.row(c) = centroids.row(c) + text_noise * random_unit(rng, dim);
    bank.attributes.row(c) = centroids.row(c) + text_noise * random_unit(rng, dim);
    bank.category_names.push_back(c == 0 ? "normal" : "anomaly_" + std::to_string(c));
  }
  corpus.text_bank_prefix = out_dir / "text_bank";
  write_text_bank(text_bank_paths(corpus.text_bank_prefix), bank);
  corpus.manifest_path = out_dir / "manifest.jsonl";
  write_manifest(corpus.manifest_path, corpus.records);
  return corpus;
}

}  // namespace lasvad
