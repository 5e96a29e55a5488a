#pragma once

// Temporal backbone: a windowed pre-norm transformer encoder block followed by
// a cosine-similarity graph convolution, X_f = GELU(rowSoftmax(A) X_h W).

#include <vector>

#include "lasvad/autodiff.hpp"
#include "lasvad/random.hpp"

namespace lasvad {

#define LASVAD_BACKBONE_TENSORS(X) \
  X(wq) X(bq) X(wk) X(bk) X(wv) X(bv) X(wo) X(bo) \
  X(ln1_gain) X(ln1_bias) X(ln2_gain) X(ln2_bias) \
  X(ff_w1) X(ff_b1) X(ff_w2) X(ff_b2) X(gcn_w)

template <class T>
struct BackboneTensors {
#define LASVAD_DECLARE(name) T name;
  LASVAD_BACKBONE_TENSORS(LASVAD_DECLARE)
#undef LASVAD_DECLARE

  template <class F>
  void for_each(F&& f) {
#define LASVAD_VISIT(name) f(#name, name);
    LASVAD_BACKBONE_TENSORS(LASVAD_VISIT)
#undef LASVAD_VISIT
  }
  template <class F>
  void for_each(F&& f) const {
#define LASVAD_VISIT(name) f(#name, name);
    LASVAD_BACKBONE_TENSORS(LASVAD_VISIT)
#undef LASVAD_VISIT
  }
  template <class F>
  auto map(F&& f) const -> BackboneTensors<decltype(f("", wq))> {
    BackboneTensors<decltype(f("", wq))> out;
#define LASVAD_MAP(name) out.name = f(#name, name);
    LASVAD_BACKBONE_TENSORS(LASVAD_MAP)
#undef LASVAD_MAP
    return out;
  }
};

struct WindowSpan {
  Index start = 0;
  Index length = 0;
};

inline constexpr double kGcnInitScale = 0.01;

struct BackboneParams : BackboneTensors<Matrix> {
  int window_length = 64;
  int window_stride = 32;
  int head_count = 4;

  Index dim() const { return wq.rows(); }
  void validate() const;

  // Query/key/value and first feed-forward weights ~ N(0, 1/fan_in). The last
  // projection of each residual branch (wo, ff_w2) starts at zero, so the block
  // is the identity at initialisation. gcn_w ~ N(0, (kGcnInitScale^2)/D): a
  // small random projection carries no text alignment but is cheap to reorient.
  // Layer norms start at identity, biases at zero. D_ff = ff_dim.
  static BackboneParams initialize(Index dim, Index ff_dim, int window_length, int window_stride, int head_count,
                                   Rng& rng);
};

// Windows of uniform length placed every `stride` rows; the last one is shifted
// left to end at T. T <= length gives one window [0, T).
std::vector<WindowSpan> window_layout(Index frames, int length, int stride);

// One encoder block applied independently inside every window; overlapping
// rows are the mean of the windows covering them.
Matrix windowed_attention(const Matrix& x_video, const BackboneParams& params);
Matrix similarity_gcn(const Matrix& x_h, const Matrix& w);

// Full backbone, X_video -> X_f.
Matrix backbone_forward(const Matrix& x_video, const BackboneParams& params);

namespace ad {
using BackboneVars = BackboneTensors<Var>;

BackboneVars bind(Tape& tape, const BackboneTensors<Matrix>& params, bool trainable);

Var encoder_block(Var x, const BackboneVars& p, int head_count);
Var windowed_attention(Var x_video, const BackboneVars& p, int window_length, int window_stride, int head_count);
Var similarity_gcn(Var x_h, Var w);
}  // namespace ad

}  // namespace lasvad
