#include "lasvad/iam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lasvad/error.hpp"

namespace lasvad {

void IntentionParams::validate() const {
  if (gate_v_kernel.rows() != 3 || gate_a_kernel.rows() != 3) throw ConfigError("iam: gate kernels must have size 3");
  if (gate_v_kernel.cols() != position_dim() || gate_a_kernel.cols() != position_dim()) {
    throw ConfigError("iam: gate kernels must be depthwise over d_p channels");
  }
  if (w1.rows() != intention_dim()) throw ConfigError("iam: classifier input must be D_int = 3 d_p");
  bool finite = true;
  for_each([&](const char*, const Matrix& m) { finite = finite && m.allFinite(); });
  if (!finite) throw NumericError("iam: non-finite parameter");
}

IntentionParams IntentionParams::initialize(Index dim, Index hidden_dim, int num_classes, Rng& rng) {
  const Index dp = dim / 3;
  if (dp < 1) throw ConfigError("iam: D must be >= 3");
  IntentionParams p;
  p.w_pos = rng.normal_matrix(dim, dp, 1.0 / std::sqrt(static_cast<double>(dim)));
  p.b_pos = Matrix::Zero(1, dp);
  p.gate_v_kernel = rng.normal_matrix(3, dp, 1.0 / std::sqrt(3.0));
  p.gate_v_bias = Matrix::Zero(1, dp);
  p.gate_a_kernel = rng.normal_matrix(3, dp, 1.0 / std::sqrt(3.0));
  p.gate_a_bias = Matrix::Zero(1, dp);
  p.w1 = rng.normal_matrix(3 * dp, hidden_dim, 1.0 / std::sqrt(static_cast<double>(3 * dp)));
  p.b1 = Matrix::Zero(1, hidden_dim);
  p.w2 = Matrix::Zero(hidden_dim, num_classes);
  p.b2 = Matrix::Zero(1, num_classes);
  p.validate();
  return p;
}

IntentionPrototypes IntentionPrototypes::initialize(int num_classes, Index intention_dim, double alpha, double beta,
                                                    Rng& rng) {
  IntentionPrototypes protos;
  protos.z = rng.normal_matrix(num_classes, intention_dim, 1.0);
  for (Index r = 0; r < protos.z.rows(); ++r) protos.z.row(r).normalize();
  protos.alpha = alpha;
  protos.beta = beta;
  return protos;
}

std::vector<Index> row_argmax(const Matrix& m) {
  std::vector<Index> out(static_cast<std::size_t>(m.rows()));
  for (Index r = 0; r < m.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < m.cols(); ++c) {
      if (m(r, c) > m(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

Kinematics kinematic_features(const Matrix& x_f, const IntentionParams& params) {
  params.validate();
  ad::Tape tape;
  const ad::IntentionVars p = ad::bind(tape, params, false);
  const ad::KinematicVars k = ad::kinematic_features(tape.constant(x_f), p);
  return {k.x_p.value(), k.x_v.value(), k.x_a.value(), k.x_int.value()};
}

Matrix intention_logits(const Matrix& x_int, const IntentionParams& params) {
  ad::Tape tape;
  const ad::IntentionVars p = ad::bind(tape, params, false);
  return ad::intention_logits(tape.constant(x_int), p).value();
}

ConfidenceWeighted confidence_weight(const Matrix& x_int, const Matrix& q_int, const Matrix& z) {
  ad::Tape tape;
  const ad::ConfidenceVars c = ad::confidence_weight(tape.constant(x_int), tape.constant(q_int), z);
  return {c.w_int.value().col(0), c.q_a.value()};
}

Matrix update_prototypes(const Matrix& z, const Matrix& x_int, const Matrix& q_a, double alpha, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ArgumentError("update_prototypes: beta must be in [0,1]");
  if (x_int.rows() != q_a.rows() || q_a.cols() != z.rows() || x_int.cols() != z.cols()) {
    throw ArgumentError("update_prototypes: shape mismatch");
  }
  Matrix out = z;
  for (Index c = 0; c < z.rows(); ++c) {
    RowVector center = RowVector::Zero(z.cols());
    Index count = 0;
    for (Index t = 0; t < x_int.rows(); ++t) {
      if (q_a(t, c) > alpha) {
        center += x_int.row(t);
        ++count;
      }
    }
    if (count == 0) continue;
    center /= static_cast<double>(count);
    out.row(c) = (1.0 - beta) * z.row(c) + beta * center;
  }
  return out;
}

std::vector<ContrastivePair> sample_contrastive_pairs(const Matrix& x_int, std::span<const int> labels,
                                                      int max_negatives) {
  const Index n = x_int.rows();
  if (static_cast<Index>(labels.size()) != n) throw ArgumentError("sample_contrastive_pairs: label count mismatch");
  if (max_negatives < 1) throw ArgumentError("sample_contrastive_pairs: M must be >= 1");
  Matrix unit = x_int;
  for (Index r = 0; r < n; ++r) {
    const double norm = unit.row(r).norm();
    if (norm > 0.0) unit.row(r) /= norm;
  }
  const Matrix cosine = unit * unit.transpose();

  std::vector<ContrastivePair> out;
  std::vector<Index> candidates;
  for (Index t = 0; t < n; ++t) {
    const int label = labels[static_cast<std::size_t>(t)];
    Index positive = -1;
    candidates.clear();
    for (Index j = 0; j < n; ++j) {
      if (j == t) continue;
      if (labels[static_cast<std::size_t>(j)] == label) {
        if (positive < 0 || cosine(t, j) < cosine(t, positive)) positive = j;
      } else {
        candidates.push_back(j);
      }
    }
    if (positive < 0 || candidates.empty()) continue;
    const auto keep = std::min<std::size_t>(static_cast<std::size_t>(max_negatives), candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [&](Index a, Index b) { return cosine(t, a) > cosine(t, b) || (cosine(t, a) == cosine(t, b) && a < b); });
    candidates.resize(keep);
    out.push_back({t, positive, candidates});
  }
  return out;
}

double loss_cst(const Matrix& x_int, const std::vector<ContrastivePair>& pairs, double temperature) {
  ad::Tape tape;
  return ad::loss_cst(tape.constant(x_int), pairs, temperature).scalar();
}

std::vector<int> intention_frame_labels(const Matrix& q_a, bool normal_video) {
  std::vector<int> out(static_cast<std::size_t>(q_a.rows()), 0);
  if (normal_video) return out;
  const std::vector<Index> best = row_argmax(q_a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(best[i]);
  return out;
}

namespace ad {

IntentionVars bind(Tape& tape, const IntentionTensors<Matrix>& params, bool trainable) {
  return params.map([&](const char*, const Matrix& m) { return trainable ? tape.variable(m) : tape.constant(m); });
}

KinematicVars kinematic_features(Var x_f, const IntentionVars& p) {
  KinematicVars k;
  k.x_p = add_row(matmul(x_f, p.w_pos), p.b_pos);
  Var v_diff = temporal_absdiff(k.x_p);
  k.x_v = hadamard(sigmoid(depthwise_conv3(v_diff, p.gate_v_kernel, p.gate_v_bias)), v_diff);
  Var a_diff = temporal_absdiff(k.x_v);
  k.x_a = hadamard(sigmoid(depthwise_conv3(a_diff, p.gate_a_kernel, p.gate_a_bias)), a_diff);
  const Var parts[] = {k.x_p, k.x_v, k.x_a};
  k.x_int = concat_cols(parts);
  return k;
}

Var intention_logits(Var x_int, const IntentionVars& p) {
  return add_row(matmul(relu(add_row(matmul(x_int, p.w1), p.b1)), p.w2), p.b2);
}

ConfidenceVars confidence_weight(Var x_int, Var q_int, const Matrix& z) {
  if (q_int.cols() != z.rows() || x_int.cols() != z.cols() || x_int.rows() != q_int.rows()) {
    throw ArgumentError("confidence_weight: shape mismatch between X_int, q_int and Z");
  }
  const std::vector<Index> best = row_argmax(q_int.value());
  ConfidenceVars c;
  c.w_int = cosine_to_reference(x_int, z, best);
  c.q_a = row_softmax(mul_col(q_int, c.w_int));
  return c;
}

Var loss_cst(Var x_int, const std::vector<ContrastivePair>& pairs, double temperature) {
  if (!(temperature > 0.0)) throw ArgumentError("loss_cst: temperature must be positive");
  Tape& tape = *x_int.tape();
  if (pairs.empty()) return tape.constant(Matrix::Zero(1, 1));
  Var unit = l2_normalize_rows(x_int);
  const Matrix& u = unit.value();
  const double inv_t = 1.0 / temperature;
  const double inv_n = 1.0 / static_cast<double>(pairs.size());

  double total = 0.0;
  std::vector<Vector> weights;
  weights.reserve(pairs.size());
  for (const ContrastivePair& p : pairs) {
    const auto anchor = u.row(p.anchor);
    const double s_pos = anchor.dot(u.row(p.positive)) * inv_t;
    Vector s_neg(static_cast<Index>(p.negatives.size()));
    for (std::size_t i = 0; i < p.negatives.size(); ++i) s_neg(static_cast<Index>(i)) = anchor.dot(u.row(p.negatives[i])) * inv_t;
    const double m = s_neg.maxCoeff();
    const Vector e = (s_neg.array() - m).exp();
    const double lse = m + std::log(e.sum());
    total += -(s_pos - lse);
    weights.push_back(e / e.sum());
  }
  return tape.record(Matrix::Constant(1, 1, total * inv_n), {unit},
                     [unit, pairs, weights, inv_t, inv_n](Tape& t, const Matrix& g) {
                       const Matrix& uv = unit.value();
                       Matrix du = Matrix::Zero(uv.rows(), uv.cols());
                       const double s = g(0, 0) * inv_n * inv_t;
                       for (std::size_t k = 0; k < pairs.size(); ++k) {
                         const ContrastivePair& p = pairs[k];
                         du.row(p.anchor) -= s * uv.row(p.positive);
                         du.row(p.positive) -= s * uv.row(p.anchor);
                         for (std::size_t i = 0; i < p.negatives.size(); ++i) {
                           const double w = weights[k](static_cast<Index>(i));
                           du.row(p.anchor) += s * w * uv.row(p.negatives[i]);
                           du.row(p.negatives[i]) += s * w * uv.row(p.anchor);
                         }
                       }
                       t.accumulate(unit, du);
                     });
}

}  // namespace ad
}  // namespace lasvad
