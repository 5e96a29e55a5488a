#include "lasvad/heads.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lasvad/error.hpp"

namespace lasvad {

void HeadParams::validate() const {
  if (!(temp_sim > 0.0)) throw ConfigError("heads: temp_sim must be positive");
  if (w_binary.cols() != 2) throw ConfigError("heads: binary head must have 2 outputs");
  bool finite = true;
  for_each([&](const char*, const Matrix& m) { finite = finite && m.allFinite(); });
  if (!finite) throw NumericError("heads: non-finite parameter");
}

HeadParams HeadParams::initialize(Index dim, int num_classes, double temp_sim) {
  HeadParams p;
  p.w_binary = Matrix::Zero(dim, 2);
  p.b_binary = Matrix::Zero(1, 2);
  p.w_multi = Matrix::Zero(dim, num_classes);
  p.b_multi = Matrix::Zero(1, num_classes);
  p.temp_sim = temp_sim;
  p.validate();
  return p;
}

Matrix fuse_text_bank(const Matrix& names, const Matrix& attributes) {
  if (names.rows() != attributes.rows() || names.cols() != attributes.cols()) {
    throw AlignmentError("fuse_text_bank: name and attribute embeddings differ in shape");
  }
  ad::Tape tape;
  ad::Var fused = ad::add(ad::l2_normalize_rows(tape.constant(names)), ad::l2_normalize_rows(tape.constant(attributes)));
  return ad::l2_normalize_rows(fused).value();
}

Matrix fuse_text_bank(const TextBank& bank) { return fuse_text_bank(bank.names, bank.attributes); }

Matrix align_scores(const Matrix& x_f, const Matrix& x_text, double temp_sim) {
  ad::Tape tape;
  return ad::align_scores(tape.constant(x_f), tape.constant(x_text), temp_sim).value();
}

BinaryAndMulticlass classify_frames(const Matrix& x_f, const HeadParams& params) {
  params.validate();
  ad::Tape tape;
  const ad::HeadVars p = ad::bind(tape, params, false);
  ad::Var x = tape.constant(x_f);
  return {ad::classify_binary(x, p).value(), ad::classify_multiclass(x, p).value()};
}

Index mil_k(Index frames) {
  if (frames < 1) throw ArgumentError("mil_k: T must be >= 1");
  return std::max<Index>(frames / 16, 1);
}

double topk_pool(std::span<const double> column, Index k) {
  if (k < 1 || k > static_cast<Index>(column.size())) {
    throw ArgumentError("topk_pool: K=" + std::to_string(k) + " outside [1, " + std::to_string(column.size()) + "]");
  }
  std::vector<double> v(column.begin(), column.end());
  std::partial_sort(v.begin(), v.begin() + k, v.end(), std::greater<>());
  double s = 0.0;
  for (Index i = 0; i < k; ++i) s += v[static_cast<std::size_t>(i)];
  return s / static_cast<double>(k);
}

RowVector video_scores(const Matrix& p_f) {
  ad::Tape tape;
  return ad::topk_mean_cols(tape.constant(p_f), mil_k(p_f.rows())).value();
}

double loss_ags(const RowVector& p_b, int y) {
  ad::Tape tape;
  return ad::loss_ags(tape.constant(p_b), y).scalar();
}

double loss_fg(const RowVector& p_v, int g) {
  ad::Tape tape;
  return ad::loss_fg(tape.constant(p_v), g).scalar();
}

double loss_aux(const Matrix& pseudo, const Matrix& q_m) {
  ad::Tape tape;
  return ad::loss_aux(pseudo, tape.constant(q_m)).scalar();
}

double loss_reg(const Matrix& p_f, const Matrix& q_b) {
  ad::Tape tape;
  return ad::loss_reg(tape.constant(p_f), tape.constant(q_b)).scalar();
}

double total_loss(const LossComponents& parts, double lambda, double lambda_cst) {
  return parts.ags + parts.fg + parts.aux + lambda * parts.reg + lambda_cst * parts.cst;
}

namespace ad {

HeadVars bind(Tape& tape, const HeadTensors<Matrix>& params, bool trainable) {
  return params.map([&](const char*, const Matrix& m) { return trainable ? tape.variable(m) : tape.constant(m); });
}

Var align_scores(Var x_f, Var x_text, double temp_sim) {
  if (!(temp_sim > 0.0)) throw ArgumentError("align_scores: temp_sim must be positive");
  Var cosine = matmul_nt(l2_normalize_rows(x_f), l2_normalize_rows(x_text));
  return row_softmax(scale(cosine, 1.0 / temp_sim));
}

Var classify_binary(Var x_f, const HeadVars& p) { return sigmoid(add_row(matmul(x_f, p.w_binary), p.b_binary)); }

Var classify_multiclass(Var x_f, const HeadVars& p) {
  return row_softmax(add_row(matmul(x_f, p.w_multi), p.b_multi));
}

Var fuse_predictions(Var q_m, Var q_a, Var q_l) { return scale(add(add(q_m, q_a), q_l), 1.0 / 3.0); }

Var loss_ags(Var p_b, int y) {
  if (p_b.rows() != 1 || p_b.cols() != 2) throw ArgumentError("loss_ags: p_b must be 1x2");
  if (y != 0 && y != 1) throw ArgumentError("loss_ags: y must be 0 or 1");
  return neg_log_clamped(element(p_b, 0, y), kLogClamp);
}

Var loss_fg(Var p_v, int g) {
  if (p_v.rows() != 1 || g < 0 || g >= p_v.cols()) throw ArgumentError("loss_fg: category out of range");
  return neg_log_clamped(element(p_v, 0, g), kLogClamp);
}

Var loss_aux(const Matrix& pseudo, Var q_m) {
  if (pseudo.rows() != q_m.rows() || pseudo.cols() != q_m.cols()) {
    throw ArgumentError("loss_aux: pseudo-label shape does not match q_m");
  }
  Var diff = abs(sub(q_m, q_m.tape()->constant(pseudo)));
  return scale(sum(diff), 1.0 / static_cast<double>(q_m.rows()));
}

Var loss_reg(Var p_f, Var q_b) {
  if (p_f.rows() != q_b.rows() || q_b.cols() != 2) throw ArgumentError("loss_reg: shape mismatch");
  // |1 - p_f[:,0] - q_b[:,1]|
  Var gap = abs(add_scalar(scale(add(cols(p_f, 0, 1), cols(q_b, 1, 1)), -1.0), 1.0));
  return scale(sum(gap), 1.0 / static_cast<double>(p_f.rows()));
}

}  // namespace ad
}  // namespace lasvad
