#pragma once

// The full detector: backbone, score heads, intention module and the frozen
// fused text embeddings, plus the per-video forward pass shared by training
// and inference.

#include <cstdint>
#include <functional>
#include <string>

#include "lasvad/autodiff.hpp"
#include "lasvad/backbone.hpp"
#include "lasvad/data_io.hpp"
#include "lasvad/heads.hpp"
#include "lasvad/iam.hpp"

namespace lasvad {

struct ModelShape {
  Index dim = 0;
  int num_categories = 0;  // C; the models predict C+1 classes
  int head_count = 4;
  int window_length = 64;
  int window_stride = 32;
  Index ff_dim = 0;         // 0 -> 4 D
  Index intent_hidden = 0;  // 0 -> D_int
  double temp_sim = 0.07;

  int num_classes() const { return num_categories + 1; }
};

struct Model {
  ModelShape shape;
  BackboneParams backbone;
  HeadParams heads;
  IntentionParams intention;
  IntentionPrototypes prototypes;
  Matrix text;  // fused text embeddings, (C+1) x D, frozen

  static Model initialize(const ModelShape& shape, const TextBank& bank, double alpha, double beta, std::uint64_t seed);

  // Learnable tensors in a fixed order with dotted names ("backbone.wq", ...).
  void for_each_parameter(const std::function<void(const std::string&, Matrix&)>& f);
  void for_each_parameter(const std::function<void(const std::string&, const Matrix&)>& f) const;
  std::size_t parameter_count() const;
};

struct ModelVars {
  ad::BackboneVars backbone;
  ad::HeadVars heads;
  ad::IntentionVars intention;
  ad::Var text;
};

ModelVars bind(ad::Tape& tape, const Model& model, bool trainable);

struct VideoForward {
  ad::Var x_h, x_f;
  ad::Var q_b, q_m, q_l;
  ad::Var x_int, q_int, w_int, q_a;
  ad::Var p_f;
};

VideoForward forward_video(ad::Tape& tape, const ModelVars& vars, const Model& model, const Matrix& features);

struct VideoOutputs {
  Matrix x_f;
  Matrix x_int;
  FramePredictions predictions;
};

// Gradient-free forward pass; prototypes are read, never updated.
VideoOutputs predict(const Model& model, const Matrix& features);

}  // namespace lasvad
