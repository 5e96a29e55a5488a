#include "lasvad/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lasvad/error.hpp"

namespace lasvad {

void BackboneParams::validate() const {
  const Index d = dim();
  if (window_length < 2) throw ConfigError("backbone: window_length must be >= 2");
  if (window_stride < 1 || window_stride > window_length) {
    throw ConfigError("backbone: window_stride must be in [1, window_length]");
  }
  if (head_count < 1 || d % head_count != 0) {
    throw ConfigError("backbone: head_count " + std::to_string(head_count) + " does not divide D=" + std::to_string(d));
  }
  bool finite = true;
  for_each([&](const char*, const Matrix& m) { finite = finite && m.allFinite(); });
  if (!finite) throw NumericError("backbone: non-finite parameter");
}

BackboneParams BackboneParams::initialize(Index dim, Index ff_dim, int window_length, int window_stride,
                                          int head_count, Rng& rng) {
  BackboneParams p;
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  p.wq = rng.normal_matrix(dim, dim, s);
  p.wk = rng.normal_matrix(dim, dim, s);
  p.wv = rng.normal_matrix(dim, dim, s);
  p.wo = Matrix::Zero(dim, dim);
  p.bq = p.bk = p.bv = p.bo = Matrix::Zero(1, dim);
  p.ln1_gain = p.ln2_gain = Matrix::Ones(1, dim);
  p.ln1_bias = p.ln2_bias = Matrix::Zero(1, dim);
  p.ff_w1 = rng.normal_matrix(dim, ff_dim, s);
  p.ff_b1 = Matrix::Zero(1, ff_dim);
  p.ff_w2 = Matrix::Zero(ff_dim, dim);
  p.ff_b2 = Matrix::Zero(1, dim);
  p.gcn_w = rng.normal_matrix(dim, dim, kGcnInitScale * s);
  p.window_length = window_length;
  p.window_stride = window_stride;
  p.head_count = head_count;
  p.validate();
  return p;
}

std::vector<WindowSpan> window_layout(Index frames, int length, int stride) {
  if (frames < 1) throw ArgumentError("window_layout: need T >= 1");
  if (length < 2 || stride < 1 || stride > length) {
    throw ArgumentError("window_layout: need length >= 2 and 1 <= stride <= length");
  }
  std::vector<WindowSpan> out;
  if (frames <= length) {
    out.push_back({0, frames});
    return out;
  }
  Index start = 0;
  while (start + length < frames) {
    out.push_back({start, length});
    start += stride;
  }
  const Index last = frames - length;
  if (out.empty() || out.back().start != last) out.push_back({last, length});
  return out;
}

Matrix windowed_attention(const Matrix& x_video, const BackboneParams& params) {
  params.validate();
  ad::Tape tape;
  const ad::BackboneVars p = ad::bind(tape, params, false);
  return ad::windowed_attention(tape.constant(x_video), p, params.window_length, params.window_stride,
                                params.head_count)
      .value();
}

Matrix similarity_gcn(const Matrix& x_h, const Matrix& w) {
  ad::Tape tape;
  return ad::similarity_gcn(tape.constant(x_h), tape.constant(w)).value();
}

Matrix backbone_forward(const Matrix& x_video, const BackboneParams& params) {
  params.validate();
  ad::Tape tape;
  const ad::BackboneVars p = ad::bind(tape, params, false);
  ad::Var xh = ad::windowed_attention(tape.constant(x_video), p, params.window_length, params.window_stride,
                                      params.head_count);
  return ad::similarity_gcn(xh, p.gcn_w).value();
}

namespace ad {

BackboneVars bind(Tape& tape, const BackboneTensors<Matrix>& params, bool trainable) {
  return params.map([&](const char*, const Matrix& m) { return trainable ? tape.variable(m) : tape.constant(m); });
}

Var encoder_block(Var x, const BackboneVars& p, int head_count) {
  const Index d = x.cols();
  const Index head_dim = d / head_count;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Var normed = layer_norm(x, p.ln1_gain, p.ln1_bias);
  Var q = add_row(matmul(normed, p.wq), p.bq);
  Var k = add_row(matmul(normed, p.wk), p.bk);
  Var v = add_row(matmul(normed, p.wv), p.bv);
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(head_count));
  for (int h = 0; h < head_count; ++h) {
    const Index off = h * head_dim;
    Var scores = scale(matmul_nt(cols(q, off, head_dim), cols(k, off, head_dim)), inv_sqrt);
    heads.push_back(matmul(row_softmax(scores), cols(v, off, head_dim)));
  }
  Var attended = add_row(matmul(concat_cols(heads), p.wo), p.bo);
  Var h1 = add(x, attended);

  Var ff = gelu(add_row(matmul(layer_norm(h1, p.ln2_gain, p.ln2_bias), p.ff_w1), p.ff_b1));
  return add(h1, add_row(matmul(ff, p.ff_w2), p.ff_b2));
}

Var windowed_attention(Var x_video, const BackboneVars& p, int window_length, int window_stride, int head_count) {
  if (!x_video.value().allFinite()) throw NumericError("windowed_attention: non-finite input");
  const Index frames = x_video.rows();
  const std::vector<WindowSpan> spans = window_layout(frames, window_length, window_stride);
  if (spans.size() == 1) return encoder_block(x_video, p, head_count);
  std::vector<Var> outputs;
  std::vector<Index> starts;
  for (const WindowSpan& s : spans) {
    outputs.push_back(encoder_block(rows(x_video, s.start, s.length), p, head_count));
    starts.push_back(s.start);
  }
  return overlap_average(outputs, starts, frames);
}

Var similarity_gcn(Var x_h, Var w) {
  Var unit = l2_normalize_rows(x_h);
  Var adjacency = row_softmax(matmul_nt(unit, unit));
  return gelu(matmul(matmul(adjacency, x_h), w));
}

}  // namespace ad
}  // namespace lasvad
