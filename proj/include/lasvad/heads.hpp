#pragma once

// Frame-level score streams (q_b, q_m, q_l), top-K MIL pooling and the MIL losses.

#include <span>

#include "lasvad/autodiff.hpp"
#include "lasvad/data_io.hpp"
#include "lasvad/random.hpp"

namespace lasvad {

inline constexpr double kLogClamp = 1e-8;

#define LASVAD_HEAD_TENSORS(X) X(w_binary) X(b_binary) X(w_multi) X(b_multi)

template <class T>
struct HeadTensors {
#define LASVAD_DECLARE(name) T name;
  LASVAD_HEAD_TENSORS(LASVAD_DECLARE)
#undef LASVAD_DECLARE

  template <class F>
  void for_each(F&& f) {
#define LASVAD_VISIT(name) f(#name, name);
    LASVAD_HEAD_TENSORS(LASVAD_VISIT)
#undef LASVAD_VISIT
  }
  template <class F>
  void for_each(F&& f) const {
#define LASVAD_VISIT(name) f(#name, name);
    LASVAD_HEAD_TENSORS(LASVAD_VISIT)
#undef LASVAD_VISIT
  }
  template <class F>
  auto map(F&& f) const -> HeadTensors<decltype(f("", w_binary))> {
    HeadTensors<decltype(f("", w_binary))> out;
#define LASVAD_MAP(name) out.name = f(#name, name);
    LASVAD_HEAD_TENSORS(LASVAD_MAP)
#undef LASVAD_MAP
    return out;
  }
};

struct HeadParams : HeadTensors<Matrix> {
  double temp_sim = 0.07;

  int num_classes() const { return static_cast<int>(w_multi.cols()); }
  void validate() const;

  // Both affine heads start at zero (q_b = 0.5, q_m uniform).
  static HeadParams initialize(Index dim, int num_classes, double temp_sim);
};

struct FramePredictions {
  Matrix q_b;  // T x 2
  Matrix q_m;  // T x (C+1)
  Matrix q_l;
  Matrix q_a;
  Matrix p_f;
};

struct LossComponents {
  double ags = 0.0;
  double fg = 0.0;
  double aux = 0.0;
  double reg = 0.0;
  double cst = 0.0;
};

// Row-wise: normalize(normalize(names[c]) + normalize(attributes[c])).
Matrix fuse_text_bank(const TextBank& bank);
Matrix fuse_text_bank(const Matrix& names, const Matrix& attributes);

// q_l[t] = softmax_c(cos(X_f[t], X_text[c]) / temp_sim).
Matrix align_scores(const Matrix& x_f, const Matrix& x_text, double temp_sim);

struct BinaryAndMulticlass {
  Matrix q_b;
  Matrix q_m;
};
BinaryAndMulticlass classify_frames(const Matrix& x_f, const HeadParams& params);

// K = max(floor(T/16), 1).
Index mil_k(Index frames);

double topk_pool(std::span<const double> column, Index k);

// p_v[c] = top-K mean of p_f[:, c] with K = mil_k(T).
RowVector video_scores(const Matrix& p_f);

double loss_ags(const RowVector& p_b, int y);
double loss_fg(const RowVector& p_v, int g);
double loss_aux(const Matrix& pseudo, const Matrix& q_m);
double loss_reg(const Matrix& p_f, const Matrix& q_b);

// L_ags + L_fg + L_aux + lambda * L_reg + lambda_cst * L_cst
double total_loss(const LossComponents& parts, double lambda, double lambda_cst);

namespace ad {
using HeadVars = HeadTensors<Var>;

HeadVars bind(Tape& tape, const HeadTensors<Matrix>& params, bool trainable);

Var align_scores(Var x_f, Var x_text, double temp_sim);
Var classify_binary(Var x_f, const HeadVars& p);
Var classify_multiclass(Var x_f, const HeadVars& p);
Var fuse_predictions(Var q_m, Var q_a, Var q_l);

// p_b is 1x2 (pooled), p_v is 1x(C+1).
Var loss_ags(Var p_b, int y);
Var loss_fg(Var p_v, int g);
Var loss_aux(const Matrix& pseudo, Var q_m);
Var loss_reg(Var p_f, Var q_b);
}  // namespace ad

}  // namespace lasvad
