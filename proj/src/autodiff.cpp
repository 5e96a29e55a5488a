#include "lasvad/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lasvad/error.hpp"

namespace lasvad::ad {

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw ArgumentError("autodiff: operands recorded on different tapes");
}

void require_same_shape(Var a, Var b, const char* op) {
  require_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ArgumentError(std::string("autodiff: shape mismatch in ") + op + " (" +
                        std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                        std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
  }
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

const Matrix& Var::value() const { return tape_->value(*this); }
const Matrix& Var::grad() const { return tape_->grad(*this); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backward backward) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw ArgumentError("autodiff: parent recorded on a different tape");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(backward) : nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::grad(Var v) {
  Node& n = nodes_[v.id_];
  // Never touched by backward: report zeros of the right shape.
  if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw ArgumentError("autodiff: backward on a foreign variable");
  if (root.rows() != 1 || root.cols() != 1) throw ArgumentError("autodiff: backward needs a scalar root");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[root.id_].requires_grad) return;
  nodes_[root.id_].grad = Matrix::Ones(1, 1);
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    const Matrix upstream = n.grad;
    n.backward(*this, upstream);
  }
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) throw ArgumentError("autodiff: matmul inner dimension mismatch");
  return a.tape()->record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g * b.value().transpose());
    t.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.cols()) throw ArgumentError("autodiff: matmul_nt inner dimension mismatch");
  return a.tape()->record(a.value() * b.value().transpose(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g * b.value());
    t.accumulate(b, g.transpose() * a.value());
  });
}

Var transpose(Var a) {
  return a.tape()->record(a.value().transpose(), {a},
                          [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var hadamard(Var a, Var b) {
  require_same_shape(a, b, "hadamard");
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(b.value()));
    t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var scale(Var a, double s) {
  return a.tape()->record(a.value() * s, {a}, [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var add_scalar(Var a, double s) {
  return a.tape()->record((a.value().array() + s).matrix(), {a},
                          [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var add_row(Var a, Var row) {
  require_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw ArgumentError("autodiff: add_row shape mismatch");
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return a.tape()->record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(row, g.colwise().sum());
  });
}

Var mul_row(Var a, Var row) {
  require_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw ArgumentError("autodiff: mul_row shape mismatch");
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return a.tape()->record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, (g.array().rowwise() * row.value().row(0).array()).matrix());
    t.accumulate(row, g.cwiseProduct(a.value()).colwise().sum());
  });
}

Var mul_col(Var a, Var col) {
  require_same_tape(a, col);
  if (col.cols() != 1 || col.rows() != a.rows()) throw ArgumentError("autodiff: mul_col shape mismatch");
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  return a.tape()->record(std::move(out), {a, col}, [a, col](Tape& t, const Matrix& g) {
    t.accumulate(a, (g.array().colwise() * col.value().col(0).array()).matrix());
    t.accumulate(col, g.cwiseProduct(a.value()).rowwise().sum());
  });
}

Var sigmoid(Var a) {
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  Var result = a.tape()->record(out, {a}, [a, out](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(out.cwiseProduct((1.0 - out.array()).matrix())));
  });
  return result;
}

Var relu(Var a) {
  return a.tape()->record(a.value().cwiseMax(0.0), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(a.value().unaryExpr([](double x) { return x > 0 ? 1.0 : 0.0; })));
  });
}

Var gelu(Var a) {
  Matrix out = a.value().unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    const Matrix d = a.value().unaryExpr([](double x) {
      return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
    });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var abs(Var a) {
  return a.tape()->record(a.value().cwiseAbs(), {a}, [a](Tape& t, const Matrix& g) {
    const Matrix s = a.value().unaryExpr([](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
    t.accumulate(a, g.cwiseProduct(s));
  });
}

Var neg_log_clamped(Var a, double eps) {
  Matrix out = a.value().unaryExpr([eps](double x) { return -std::log(std::max(x, eps)); });
  return a.tape()->record(std::move(out), {a}, [a, eps](Tape& t, const Matrix& g) {
    const Matrix d = a.value().unaryExpr([eps](double x) { return x > eps ? -1.0 / x : 0.0; });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var row_softmax(Var a) {
  Matrix out(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    const double m = a.value().row(r).maxCoeff();
    out.row(r) = (a.value().row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return a.tape()->record(out, {a}, [a, out](Tape& t, const Matrix& g) {
    // d/dx softmax: s * (g - <g, s>)
    const Vector dots = g.cwiseProduct(out).rowwise().sum();
    Matrix da = out.cwiseProduct((g.colwise() - dots));
    t.accumulate(a, da);
  });
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  require_same_tape(a, gain);
  require_same_tape(a, bias);
  const Index n = a.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw ArgumentError("autodiff: layer_norm parameter shape mismatch");
  }
  Matrix xhat(a.rows(), n);
  Vector inv_std(a.rows());
  for (Index r = 0; r < a.rows(); ++r) {
    const double mu = a.value().row(r).mean();
    const double var = (a.value().row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (a.value().row(r).array() - mu) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return a.tape()->record(std::move(out), {a, gain, bias},
                          [a, gain, bias, xhat, inv_std, n](Tape& t, const Matrix& g) {
                            t.accumulate(bias, g.colwise().sum());
                            t.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
                            const Matrix gx = g.array().rowwise() * gain.value().row(0).array();
                            Matrix da(gx.rows(), n);
                            for (Index r = 0; r < gx.rows(); ++r) {
                              const double m1 = gx.row(r).mean();
                              const double m2 = gx.row(r).dot(xhat.row(r)) / static_cast<double>(n);
                              da.row(r) = inv_std(r) * (gx.row(r).array() - m1 - xhat.row(r).array() * m2);
                            }
                            t.accumulate(a, da);
                          });
}

Var l2_normalize_rows(Var a) {
  Vector norms = a.value().rowwise().norm();
  for (Index r = 0; r < norms.size(); ++r) {
    if (!(norms(r) > 0.0)) {
      throw DegenerateInputError("cosine normalisation of zero row " + std::to_string(r));
    }
  }
  Matrix out = a.value().array().colwise() / norms.array();
  return a.tape()->record(out, {a}, [a, out, norms](Tape& t, const Matrix& g) {
    const Vector dots = g.cwiseProduct(out).rowwise().sum();
    Matrix da = g - (out.array().colwise() * dots.array()).matrix();
    da = da.array().colwise() / norms.array();
    t.accumulate(a, da);
  });
}

Var rows(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ArgumentError("autodiff: row slice out of range");
  const Index total = a.rows();
  return a.tape()->record(a.value().middleRows(start, count), {a},
                          [a, start, count, total](Tape& t, const Matrix& g) {
                            Matrix da = Matrix::Zero(total, g.cols());
                            da.middleRows(start, count) = g;
                            t.accumulate(a, da);
                          });
}

Var cols(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ArgumentError("autodiff: column slice out of range");
  const Index total = a.cols();
  return a.tape()->record(a.value().middleCols(start, count), {a},
                          [a, start, count, total](Tape& t, const Matrix& g) {
                            Matrix da = Matrix::Zero(g.rows(), total);
                            da.middleCols(start, count) = g;
                            t.accumulate(a, da);
                          });
}

Var element(Var a, Index row, Index col) {
  if (row < 0 || col < 0 || row >= a.rows() || col >= a.cols()) throw ArgumentError("autodiff: element out of range");
  const Index r = a.rows(), c = a.cols();
  return a.tape()->record(Matrix::Constant(1, 1, a.value()(row, col)), {a},
                          [a, row, col, r, c](Tape& t, const Matrix& g) {
                            Matrix da = Matrix::Zero(r, c);
                            da(row, col) = g(0, 0);
                            t.accumulate(a, da);
                          });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("autodiff: concat_cols of nothing");
  const Index r = parts[0].rows();
  Index total = 0;
  for (const Var& p : parts) {
    if (p.rows() != r) throw ArgumentError("autodiff: concat_cols row mismatch");
    total += p.cols();
  }
  Matrix out(r, total);
  std::vector<Index> offsets;
  Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].tape()->record(std::move(out), parts, [ps, offsets](Tape& t, const Matrix& g) {
    for (std::size_t i = 0; i < ps.size(); ++i) t.accumulate(ps[i], g.middleCols(offsets[i], ps[i].cols()));
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("autodiff: concat_rows of nothing");
  const Index c = parts[0].cols();
  Index total = 0;
  for (const Var& p : parts) {
    if (p.cols() != c) throw ArgumentError("autodiff: concat_rows column mismatch");
    total += p.rows();
  }
  Matrix out(total, c);
  std::vector<Index> offsets;
  Index off = 0;
  for (const Var& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    offsets.push_back(off);
    off += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].tape()->record(std::move(out), parts, [ps, offsets](Tape& t, const Matrix& g) {
    for (std::size_t i = 0; i < ps.size(); ++i) t.accumulate(ps[i], g.middleRows(offsets[i], ps[i].rows()));
  });
}

Var sum(Var a) {
  const Index r = a.rows(), c = a.cols();
  return a.tape()->record(Matrix::Constant(1, 1, a.value().sum()), {a},
                          [a, r, c](Tape& t, const Matrix& g) { t.accumulate(a, Matrix::Constant(r, c, g(0, 0))); });
}

Var mean(Var a) {
  const Index r = a.rows(), c = a.cols();
  const double n = static_cast<double>(r * c);
  return a.tape()->record(Matrix::Constant(1, 1, a.value().sum() / n), {a}, [a, r, c, n](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(r, c, g(0, 0) / n));
  });
}

Var topk_mean_cols(Var a, Index k) {
  const Index n = a.rows();
  if (k < 1 || k > n) throw ArgumentError("top-k pooling needs 1 <= K <= T (K=" + std::to_string(k) +
                                          ", T=" + std::to_string(n) + ")");
  Matrix out(1, a.cols());
  std::vector<std::vector<Index>> chosen(static_cast<std::size_t>(a.cols()));
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index c = 0; c < a.cols(); ++c) {
    std::iota(order.begin(), order.end(), Index{0});
    const auto column = a.value().col(c);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index i, Index j) {
      return column(i) > column(j) || (column(i) == column(j) && i < j);
    });
    double s = 0.0;
    for (Index i = 0; i < k; ++i) s += column(order[static_cast<std::size_t>(i)]);
    out(0, c) = s / static_cast<double>(k);
    chosen[static_cast<std::size_t>(c)].assign(order.begin(), order.begin() + k);
  }
  const Index cols_n = a.cols();
  return a.tape()->record(std::move(out), {a}, [a, chosen, k, n, cols_n](Tape& t, const Matrix& g) {
    Matrix da = Matrix::Zero(n, cols_n);
    for (Index c = 0; c < cols_n; ++c) {
      for (Index i : chosen[static_cast<std::size_t>(c)]) da(i, c) += g(0, c) / static_cast<double>(k);
    }
    t.accumulate(a, da);
  });
}

Var overlap_average(std::span<const Var> parts, std::span<const Index> starts, Index total_rows) {
  if (parts.empty() || parts.size() != starts.size()) throw ArgumentError("autodiff: overlap_average arity mismatch");
  const Index c = parts[0].cols();
  Matrix out = Matrix::Zero(total_rows, c);
  Vector count = Vector::Zero(total_rows);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].cols() != c || starts[i] < 0 || starts[i] + parts[i].rows() > total_rows) {
      throw ArgumentError("autodiff: overlap_average window out of range");
    }
    out.middleRows(starts[i], parts[i].rows()) += parts[i].value();
    count.segment(starts[i], parts[i].rows()).array() += 1.0;
  }
  for (Index r = 0; r < total_rows; ++r) {
    if (count(r) == 0.0) throw ArgumentError("autodiff: overlap_average leaves row " + std::to_string(r) + " uncovered");
    out.row(r) /= count(r);
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  std::vector<Index> st(starts.begin(), starts.end());
  return parts[0].tape()->record(std::move(out), parts, [ps, st, count](Tape& t, const Matrix& g) {
    const Matrix scaled = g.array().colwise() / count.array();
    for (std::size_t i = 0; i < ps.size(); ++i) t.accumulate(ps[i], scaled.middleRows(st[i], ps[i].rows()));
  });
}

Var temporal_absdiff(Var a) {
  const Index n = a.rows(), c = a.cols();
  Matrix diff = Matrix::Zero(n, c);
  if (n > 1) diff.bottomRows(n - 1) = a.value().bottomRows(n - 1) - a.value().topRows(n - 1);
  Matrix out = diff.cwiseAbs();
  return a.tape()->record(std::move(out), {a}, [a, diff, n, c](Tape& t, const Matrix& g) {
    const Matrix gs = g.cwiseProduct(diff.unaryExpr([](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }));
    Matrix da = Matrix::Zero(n, c);
    if (n > 1) {
      da.bottomRows(n - 1) += gs.bottomRows(n - 1);
      da.topRows(n - 1) -= gs.bottomRows(n - 1);
    }
    t.accumulate(a, da);
  });
}

Var depthwise_conv3(Var a, Var kernel, Var bias) {
  require_same_tape(a, kernel);
  require_same_tape(a, bias);
  const Index n = a.rows(), c = a.cols();
  if (kernel.rows() != 3 || kernel.cols() != c || bias.rows() != 1 || bias.cols() != c) {
    throw ArgumentError("autodiff: depthwise_conv3 parameter shape mismatch");
  }
  const Matrix& x = a.value();
  const Matrix& w = kernel.value();
  Matrix out(n, c);
  for (Index t = 0; t < n; ++t) {
    out.row(t) = bias.value().row(0) + x.row(t).cwiseProduct(w.row(1));
    if (t > 0) out.row(t) += x.row(t - 1).cwiseProduct(w.row(0));
    if (t + 1 < n) out.row(t) += x.row(t + 1).cwiseProduct(w.row(2));
  }
  return a.tape()->record(std::move(out), {a, kernel, bias}, [a, kernel, bias, n, c](Tape& tp, const Matrix& g) {
    const Matrix& xv = a.value();
    const Matrix& wv = kernel.value();
    Matrix dx = Matrix::Zero(n, c);
    Matrix dw = Matrix::Zero(3, c);
    for (Index t = 0; t < n; ++t) {
      dx.row(t) += g.row(t).cwiseProduct(wv.row(1));
      dw.row(1) += g.row(t).cwiseProduct(xv.row(t));
      if (t > 0) {
        dx.row(t - 1) += g.row(t).cwiseProduct(wv.row(0));
        dw.row(0) += g.row(t).cwiseProduct(xv.row(t - 1));
      }
      if (t + 1 < n) {
        dx.row(t + 1) += g.row(t).cwiseProduct(wv.row(2));
        dw.row(2) += g.row(t).cwiseProduct(xv.row(t + 1));
      }
    }
    tp.accumulate(a, dx);
    tp.accumulate(kernel, dw);
    tp.accumulate(bias, g.colwise().sum());
  });
}

Var cosine_to_reference(Var a, const Matrix& reference, std::span<const Index> index) {
  const Index n = a.rows();
  if (static_cast<Index>(index.size()) != n || reference.cols() != a.cols()) {
    throw ArgumentError("autodiff: cosine_to_reference shape mismatch");
  }
  Matrix ref_unit(n, a.cols());
  Vector norms = a.value().rowwise().norm();
  Matrix out(n, 1);
  for (Index t = 0; t < n; ++t) {
    const auto z = reference.row(index[static_cast<std::size_t>(t)]);
    const double zn = z.norm();
    if (!(zn > 0.0)) throw DegenerateInputError("prototype row " + std::to_string(index[static_cast<std::size_t>(t)]) + " is zero");
    ref_unit.row(t) = z / zn;
    out(t, 0) = norms(t) > 0.0 ? a.value().row(t).dot(ref_unit.row(t)) / norms(t) : 0.0;
  }
  return a.tape()->record(out, {a}, [a, ref_unit, norms, out](Tape& t, const Matrix& g) {
    Matrix da = Matrix::Zero(a.rows(), a.cols());
    for (Index r = 0; r < a.rows(); ++r) {
      if (!(norms(r) > 0.0)) continue;
      const RowVector xhat = a.value().row(r) / norms(r);
      da.row(r) = g(r, 0) * (ref_unit.row(r) - out(r, 0) * xhat) / norms(r);
    }
    t.accumulate(a, da);
  });
}

}  // namespace lasvad::ad
