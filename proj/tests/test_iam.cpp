#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "lasvad/error.hpp"
#include "lasvad/iam.hpp"
#include "support.hpp"

namespace lasvad {
namespace {

using testing::gradient_relative_error;

// D = 6, d_p = 2, X_p = first two columns of X_f, zero gates.
IntentionParams passthrough_params(int classes) {
  Rng rng(0);
  IntentionParams p = IntentionParams::initialize(6, 6, classes, rng);
  p.w_pos.setZero();
  p.w_pos(0, 0) = 1.0;
  p.w_pos(1, 1) = 1.0;
  p.gate_v_kernel.setZero();
  p.gate_a_kernel.setZero();
  return p;
}

Matrix embed_position(const Matrix& x_p) {
  Matrix x = Matrix::Zero(x_p.rows(), 6);
  x.leftCols(2) = x_p;
  return x;
}

TEST(Kinematics, HandComputedVelocity) {
  Matrix x_p(3, 2);
  x_p << 1, 2, 4, 6, 5, 7;
  const Kinematics k = kinematic_features(embed_position(x_p), passthrough_params(3));
  Matrix expected(3, 2);
  expected << 0, 0, 1.5, 2, 0.5, 0.5;
  EXPECT_LT((k.x_v - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(k.x_p, x_p);
  // Acceleration is |diff| of X_v gated at 0.5.
  Matrix acc(3, 2);
  acc << 0, 0, 0.75, 1.0, 0.5, 0.75;
  EXPECT_LT((k.x_a - acc).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(k.x_int.cols(), 6);
}

TEST(Kinematics, ConstantPositionHasNoMotion) {
  Rng rng(1);
  IntentionParams p = IntentionParams::initialize(9, 9, 3, rng);
  p.gate_v_bias = rng.normal_matrix(1, 3, 1.0);
  const Matrix x = rng.normal_matrix(1, 9, 1.0).replicate(7, 1);
  const Kinematics k = kinematic_features(x, p);
  EXPECT_TRUE(k.x_v.isZero(0.0));
  EXPECT_TRUE(k.x_a.isZero(0.0));
}

TEST(Kinematics, SingleFrameIsPositionOnly) {
  Rng rng(2);
  const IntentionParams p = IntentionParams::initialize(9, 9, 3, rng);
  const Kinematics k = kinematic_features(rng.normal_matrix(1, 9, 1.0), p);
  EXPECT_EQ(k.x_int.rows(), 1);
  EXPECT_EQ(k.x_int.leftCols(3), k.x_p);
  EXPECT_TRUE(k.x_int.rightCols(6).isZero(0.0));
}

TEST(IntentionLogits, ZeroWeightsGiveBias) {
  Rng rng(3);
  IntentionParams p = IntentionParams::initialize(6, 4, 3, rng);
  p.w1.setZero();
  p.w2.setZero();
  p.b2 << 0.1, -0.2, 0.3;
  const Matrix q = intention_logits(rng.normal_matrix(5, 6, 1.0), p);
  for (Index t = 0; t < 5; ++t) EXPECT_EQ(q.row(t), p.b2.row(0));
}

TEST(IntentionLogits, Shape) {
  Rng rng(4);
  const IntentionParams p = IntentionParams::initialize(6, 4, 3, rng);
  const Matrix q = intention_logits(rng.normal_matrix(5, 6, 1.0), p);
  EXPECT_EQ(q.rows(), 5);
  EXPECT_EQ(q.cols(), 3);
}

TEST(IntentionLogits, DominantColumnWins) {
  Rng rng(5);
  IntentionParams p = IntentionParams::initialize(6, 4, 3, rng);
  p.w1 = rng.normal_matrix(6, 4, 1.0).cwiseAbs();
  p.w2.setZero();
  p.w2.col(1).setConstant(100.0);
  const Matrix q = intention_logits(rng.normal_matrix(5, 6, 1.0).cwiseAbs(), p);
  for (Index c : row_argmax(q)) EXPECT_EQ(c, 1);
}

TEST(ConfidenceWeight, SelfAlignedFrameKeepsLogits) {
  Rng rng(6);
  const Matrix z = rng.normal_matrix(3, 6, 1.0);
  Matrix q_int(1, 3);
  q_int << 0.2, 1.5, -0.3;
  const ConfidenceWeighted out = confidence_weight(z.row(1), q_int, z);
  EXPECT_NEAR(out.w_int(0), 1.0, 1e-14);
  const Eigen::RowVectorXd e = q_int.array().exp();
  EXPECT_LT((out.q_a - e / e.sum()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ConfidenceWeight, ZeroWeightGivesUniform) {
  Matrix z(2, 2);
  z << 1, 0, 0, 1;
  Matrix x(1, 2), q(1, 2);
  x << 0, 1;  // orthogonal to Z[0]
  q << 2, 1;
  const ConfidenceWeighted out = confidence_weight(x, q, z);
  EXPECT_EQ(out.w_int(0), 0.0);
  EXPECT_TRUE((out.q_a.array() == 0.5).all());
  const ConfidenceWeighted zero = confidence_weight(Matrix::Zero(1, 2), q, z);
  EXPECT_EQ(zero.w_int(0), 0.0);
}

TEST(ConfidenceWeight, OppositeFrameFlipsOrdering) {
  Rng rng(7);
  const Matrix z = rng.normal_matrix(4, 6, 1.0);
  Matrix q_int(1, 4);
  q_int << 0.5, 2.0, -1.0, 0.1;
  const ConfidenceWeighted out = confidence_weight(-z.row(1), q_int, z);
  EXPECT_NEAR(out.w_int(0), -1.0, 1e-14);
  const Eigen::RowVectorXd e = (-q_int).array().exp();
  EXPECT_LT((out.q_a - e / e.sum()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(row_argmax(out.q_a)[0], 2);
}

TEST(Prototypes, MomentumExamples) {
  Matrix z = Matrix::Zero(2, 2);
  Matrix x = Matrix::Ones(2, 2);
  Matrix qa(2, 2);
  qa << 0.1, 0.9, 0.2, 0.8;
  Matrix out = update_prototypes(z, x, qa, 0.5, 0.1);
  EXPECT_EQ(out.row(0), z.row(0));
  EXPECT_NEAR(out(1, 0), 0.1, 1e-16);
  EXPECT_NEAR(out(1, 1), 0.1, 1e-16);
  out = update_prototypes(z, x, qa, 0.5, 1.0);
  EXPECT_EQ(out.row(1), x.row(0));
  EXPECT_THROW(update_prototypes(z, x, qa, 0.5, 1.5), ArgumentError);
}

TEST(Contrastive, OnlyCandidatesAvailable) {
  Matrix x(3, 2);
  x << 1, 0, 0.9, std::sqrt(1 - 0.81), 0.1, std::sqrt(1 - 0.01);
  const std::vector<int> labels{1, 1, 2};
  const auto pairs = sample_contrastive_pairs(x, labels, 16);
  ASSERT_FALSE(pairs.empty());
  EXPECT_EQ(pairs[0].anchor, 0);
  EXPECT_EQ(pairs[0].positive, 1);
  EXPECT_EQ(pairs[0].negatives, std::vector<Index>{2});
  // Frame 2 has no same-label peer and is excluded.
  for (const auto& p : pairs) EXPECT_NE(p.anchor, 2);
}

TEST(Contrastive, SingleLabelExcludesEverything) {
  Rng rng(8);
  const std::vector<int> labels(6, 3);
  EXPECT_TRUE(sample_contrastive_pairs(rng.normal_matrix(6, 4, 1.0), labels, 2).empty());
}

TEST(Contrastive, NegativesClampedToAvailability) {
  Rng rng(9);
  const std::vector<int> labels{0, 0, 1};
  const auto pairs = sample_contrastive_pairs(rng.normal_matrix(3, 4, 1.0), labels, 2);
  ASSERT_EQ(pairs.size(), 2u);
  for (const auto& p : pairs) EXPECT_EQ(p.negatives.size(), 1u);
}

TEST(Contrastive, LossExamples) {
  Matrix x(3, 2);
  x << 1, 0, 0, 1, 0, 1;
  EXPECT_NEAR(loss_cst(x, {{0, 1, {2}}}), 0.0, 1e-15);
  Matrix y(3, 2);
  y << 1, 0, 1, 0, 0, 1;
  EXPECT_NEAR(loss_cst(y, {{0, 1, {2}}}), -1.0, 1e-15);
  EXPECT_EQ(loss_cst(y, {}), 0.0);
}

TEST(Contrastive, FrameLabelsForceNormalVideos) {
  Rng rng(10);
  const Matrix qa = testing::random_simplex_rows(rng, 7, 4);
  const auto labels = intention_frame_labels(qa, true);
  EXPECT_TRUE(std::all_of(labels.begin(), labels.end(), [](int l) { return l == 0; }));
  const auto argmax = row_argmax(qa);
  const auto abnormal = intention_frame_labels(qa, false);
  for (std::size_t t = 0; t < argmax.size(); ++t) EXPECT_EQ(abnormal[t], argmax[t]);
}

// Property: X_v and X_a keep T rows and start with a zero row.
TEST(IamProperty, MotionRowsStartAtZeroOver100Cases) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Index d = rng.integer(3, 14), t = rng.integer(1, 25);
    IntentionParams p = IntentionParams::initialize(d, rng.integer(1, 8), 3, rng);
    p.for_each([&](const char*, Matrix& m) { m += rng.normal_matrix(m.rows(), m.cols(), 0.5); });
    const Kinematics k = kinematic_features(rng.normal_matrix(t, d, 1.0), p);
    ASSERT_EQ(k.x_v.rows(), t);
    ASSERT_EQ(k.x_a.rows(), t);
    ASSERT_EQ(k.x_int.cols(), 3 * (d / 3));
    ASSERT_TRUE(k.x_v.row(0).isZero(0.0));
    ASSERT_TRUE(k.x_a.row(0).isZero(0.0));
  }
}

TEST(IamProperty, ConfidenceBoundsAndArgmaxOver100Cases) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const Index t = rng.integer(1, 20), d = rng.integer(2, 10), c = rng.integer(2, 6);
    const Matrix x = rng.normal_matrix(t, d, 1.0), q = rng.normal_matrix(t, c, 2.0), z = rng.normal_matrix(c, d, 1.0);
    const ConfidenceWeighted out = confidence_weight(x, q, z);
    const auto q_arg = row_argmax(q);
    const auto a_arg = row_argmax(out.q_a);
    for (Index r = 0; r < t; ++r) {
      const double w = out.w_int(r);
      ASSERT_GE(w, -1.0 - 1e-12);
      ASSERT_LE(w, 1.0 + 1e-12);
      ASSERT_NEAR(out.q_a.row(r).sum(), 1.0, 1e-6);
      ASSERT_GE(out.q_a.row(r).minCoeff(), 0.0);
      // Positive weight keeps the ordering; negative weight reverses it.
      for (Index i = 0; i < c; ++i) {
        for (Index j = 0; j < c; ++j) {
          if (q(r, i) > q(r, j) && w > 1e-9) ASSERT_GE(out.q_a(r, i), out.q_a(r, j));
          if (q(r, i) > q(r, j) && w < -1e-9) ASSERT_LE(out.q_a(r, i), out.q_a(r, j));
        }
      }
      if (w > 1e-9) ASSERT_EQ(a_arg[static_cast<std::size_t>(r)], q_arg[static_cast<std::size_t>(r)]);
    }
  }
}

TEST(IamProperty, PrototypeUpdateIsConvexOver100Cases) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Index t = rng.integer(1, 20), d = rng.integer(2, 9), c = rng.integer(2, 5);
    const Matrix z = rng.normal_matrix(c, d, 1.0), x = rng.normal_matrix(t, d, 1.0);
    const Matrix qa = testing::random_simplex_rows(rng, t, c);
    const double alpha = rng.uniform(0.05, 0.9), beta = rng.uniform();
    const Matrix out = update_prototypes(z, x, qa, alpha, beta);
    for (Index k = 0; k < c; ++k) {
      RowVector center = RowVector::Zero(d);
      Index count = 0;
      for (Index r = 0; r < t; ++r) {
        if (qa(r, k) > alpha) center += x.row(r), ++count;
      }
      if (count == 0) {
        ASSERT_EQ(out.row(k), z.row(k));
        continue;
      }
      center /= static_cast<double>(count);
      for (Index j = 0; j < d; ++j) {
        const double lo = std::min(z(k, j), center(j)), hi = std::max(z(k, j), center(j));
        ASSERT_GE(out(k, j), lo - 1e-12);
        ASSERT_LE(out(k, j), hi + 1e-12);
      }
    }
  }
}

// Exhaustive check of the pair rule on small pools.
TEST(IamProperty, ContrastivePairsMatchBruteForceOver100Cases) {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    const Index t = rng.integer(1, 20), d = rng.integer(2, 6);
    const int m = static_cast<int>(rng.integer(1, 6));
    const Matrix x = rng.normal_matrix(t, d, 1.0);
    std::vector<int> labels(static_cast<std::size_t>(t));
    for (int& l : labels) l = static_cast<int>(rng.integer(0, 2));
    const auto pairs = sample_contrastive_pairs(x, labels, m);
    Matrix unit = x;
    for (Index r = 0; r < t; ++r) unit.row(r).normalize();
    const Matrix cosine = unit * unit.transpose();
    std::size_t expected_count = 0;
    for (Index a = 0; a < t; ++a) {
      bool same = false, diff = false;
      for (Index j = 0; j < t; ++j) {
        if (j == a) continue;
        (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(a)] ? same : diff) = true;
      }
      expected_count += (same && diff) ? 1 : 0;
    }
    ASSERT_EQ(pairs.size(), expected_count);
    for (const ContrastivePair& p : pairs) {
      const int label = labels[static_cast<std::size_t>(p.anchor)];
      ASSERT_NE(p.positive, p.anchor);
      ASSERT_EQ(labels[static_cast<std::size_t>(p.positive)], label);
      for (Index j = 0; j < t; ++j) {
        if (j != p.anchor && labels[static_cast<std::size_t>(j)] == label) {
          ASSERT_LE(cosine(p.anchor, p.positive), cosine(p.anchor, j) + 1e-12);
        }
      }
      Index available = 0;
      for (Index j = 0; j < t; ++j) available += labels[static_cast<std::size_t>(j)] != label;
      ASSERT_EQ(static_cast<Index>(p.negatives.size()), std::min<Index>(m, available));
      for (std::size_t i = 0; i < p.negatives.size(); ++i) {
        ASSERT_NE(labels[static_cast<std::size_t>(p.negatives[i])], label);
        if (i > 0) ASSERT_GE(cosine(p.anchor, p.negatives[i - 1]), cosine(p.anchor, p.negatives[i]));
      }
      // No excluded different-label frame beats the weakest kept negative.
      const double weakest = cosine(p.anchor, p.negatives.back());
      for (Index j = 0; j < t; ++j) {
        if (labels[static_cast<std::size_t>(j)] == label) continue;
        if (std::find(p.negatives.begin(), p.negatives.end(), j) != p.negatives.end()) continue;
        ASSERT_LE(cosine(p.anchor, j), weakest + 1e-12);
      }
    }
  }
}

TEST(IamGradient, ContrastiveLossWrtIntentionFeatures) {
  Rng rng(15);
  const Matrix x = rng.normal_matrix(12, 6, 1.0);
  std::vector<int> labels(12);
  for (int& l : labels) l = static_cast<int>(rng.integer(0, 2));
  const auto pairs = sample_contrastive_pairs(x, labels, 4);
  ASSERT_FALSE(pairs.empty());
  for (double temperature : {1.0, 0.3}) {
    EXPECT_LT(gradient_relative_error(x, [&](ad::Tape&, ad::Var v) { return ad::loss_cst(v, pairs, temperature); }),
              1e-4);
    ad::Tape tape;
    EXPECT_NEAR(ad::loss_cst(tape.constant(x), pairs, temperature).value()(0, 0), loss_cst(x, pairs, temperature),
                1e-13);
  }
}

TEST(IamGradient, KinematicsLogitsAndConfidenceWrtParameters) {
  Rng rng(16);
  IntentionParams params = IntentionParams::initialize(9, 5, 3, rng);
  params.for_each([&](const char*, Matrix& m) { m = rng.normal_matrix(m.rows(), m.cols(), 0.6); });
  const Matrix x_f = rng.normal_matrix(8, 9, 1.0);
  const Matrix z = rng.normal_matrix(3, 9, 1.0);
  const Matrix probe = rng.normal_matrix(8, 3, 1.0);
  const auto loss = [&](ad::Tape& tape, ad::Var xf, const ad::IntentionVars& p) {
    const ad::KinematicVars k = ad::kinematic_features(xf, p);
    const ad::Var q = ad::intention_logits(k.x_int, p);
    const ad::ConfidenceVars cw = ad::confidence_weight(k.x_int, q, z);
    return ad::sum(ad::hadamard(cw.q_a, tape.constant(probe)));
  };
  EXPECT_LT(gradient_relative_error(x_f,
                                    [&](ad::Tape& tape, ad::Var v) {
                                      return loss(tape, v, ad::bind(tape, params, false));
                                    }),
            1e-4);
  params.for_each([&](const char* name, const Matrix& m) {
    const double err = gradient_relative_error(m, [&](ad::Tape& tape, ad::Var v) {
      ad::IntentionVars p = ad::bind(tape, params, false);
      p.for_each([&](const char* n, ad::Var& slot) {
        if (std::string(n) == name) slot = v;
      });
      return loss(tape, tape.constant(x_f), p);
    });
    EXPECT_LT(err, 1e-4) << name;
  });
}

}  // namespace
}  // namespace lasvad
