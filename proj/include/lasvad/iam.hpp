#pragma once

// Intention awareness: kinematic (position / velocity / acceleration) features,
// momentum intention prototypes, confidence-weighted scores q_a and the
// cross-intention contrastive loss.

#include <span>
#include <vector>

#include "lasvad/autodiff.hpp"
#include "lasvad/random.hpp"

namespace lasvad {

#define LASVAD_INTENTION_TENSORS(X) \
  X(w_pos) X(b_pos) X(gate_v_kernel) X(gate_v_bias) X(gate_a_kernel) X(gate_a_bias) X(w1) X(b1) X(w2) X(b2)

template <class T>
struct IntentionTensors {
#define LASVAD_DECLARE(name) T name;
  LASVAD_INTENTION_TENSORS(LASVAD_DECLARE)
#undef LASVAD_DECLARE

  template <class F>
  void for_each(F&& f) {
#define LASVAD_VISIT(name) f(#name, name);
    LASVAD_INTENTION_TENSORS(LASVAD_VISIT)
#undef LASVAD_VISIT
  }
  template <class F>
  void for_each(F&& f) const {
#define LASVAD_VISIT(name) f(#name, name);
    LASVAD_INTENTION_TENSORS(LASVAD_VISIT)
#undef LASVAD_VISIT
  }
  template <class F>
  auto map(F&& f) const -> IntentionTensors<decltype(f("", w_pos))> {
    IntentionTensors<decltype(f("", w_pos))> out;
#define LASVAD_MAP(name) out.name = f(#name, name);
    LASVAD_INTENTION_TENSORS(LASVAD_MAP)
#undef LASVAD_MAP
    return out;
  }
};

// d_p = floor(D/3); D_int = 3 d_p; the gates are depthwise kernel-3 convolutions.
struct IntentionParams : IntentionTensors<Matrix> {
  Index position_dim() const { return w_pos.cols(); }
  Index intention_dim() const { return 3 * position_dim(); }
  int num_classes() const { return static_cast<int>(w2.cols()); }
  void validate() const;

  // Output layer starts at zero so q_int = 0 and q_a is uniform before training.
  static IntentionParams initialize(Index dim, Index hidden_dim, int num_classes, Rng& rng);
};

struct IntentionPrototypes {
  Matrix z;  // (C+1) x D_int
  double alpha = 0.5;
  double beta = 0.1;

  static IntentionPrototypes initialize(int num_classes, Index intention_dim, double alpha, double beta, Rng& rng);
};

struct Kinematics {
  Matrix x_p;
  Matrix x_v;
  Matrix x_a;
  Matrix x_int;  // [x_p | x_v | x_a]
};

struct ConfidenceWeighted {
  Vector w_int;  // T
  Matrix q_a;    // T x (C+1)
};

struct ContrastivePair {
  Index anchor = 0;
  Index positive = 0;
  std::vector<Index> negatives;  // descending cosine to the anchor
};

Kinematics kinematic_features(const Matrix& x_f, const IntentionParams& params);
Matrix intention_logits(const Matrix& x_int, const IntentionParams& params);

// c* = argmax_c q_int[t, c] (lowest index on ties); w_int[t] = cos(Z[c*], X_int[t])
// (0 for a zero X_int row); q_a[t] = softmax(q_int[t] * w_int[t]).
ConfidenceWeighted confidence_weight(const Matrix& x_int, const Matrix& q_int, const Matrix& z);

// Z[c] <- (1 - beta) Z[c] + beta * mean{X_int[t] : q_a[t, c] > alpha}; rows with
// no qualifying frame are left unchanged.
Matrix update_prototypes(const Matrix& z, const Matrix& x_int, const Matrix& q_a, double alpha, double beta);

// Positive: same-label frame with the lowest cosine. Negatives: up to M
// different-label frames with the highest cosine. Frames lacking either are skipped.
std::vector<ContrastivePair> sample_contrastive_pairs(const Matrix& x_int, std::span<const int> labels, int max_negatives);

// Literal InfoNCE with negatives-only denominator on L2-normalised rows:
// mean over pairs of -(s_pos - logsumexp(s_neg)), s = x.y / temperature. Empty -> 0.
double loss_cst(const Matrix& x_int, const std::vector<ContrastivePair>& pairs, double temperature = 1.0);

// Frame labels for pair sampling: argmax of q_a, or 0 everywhere for a normal video.
std::vector<int> intention_frame_labels(const Matrix& q_a, bool normal_video);

std::vector<Index> row_argmax(const Matrix& m);

namespace ad {
using IntentionVars = IntentionTensors<Var>;

IntentionVars bind(Tape& tape, const IntentionTensors<Matrix>& params, bool trainable);

struct KinematicVars {
  Var x_p, x_v, x_a, x_int;
};
KinematicVars kinematic_features(Var x_f, const IntentionVars& p);
Var intention_logits(Var x_int, const IntentionVars& p);

struct ConfidenceVars {
  Var w_int;  // T x 1
  Var q_a;
};
ConfidenceVars confidence_weight(Var x_int, Var q_int, const Matrix& z);

Var loss_cst(Var x_int, const std::vector<ContrastivePair>& pairs, double temperature);
}  // namespace ad

}  // namespace lasvad
