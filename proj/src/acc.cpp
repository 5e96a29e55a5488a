#include "lasvad/acc.hpp"

#include <algorithm>
#include <json.hpp>
#include <string>

#include "lasvad/error.hpp"

namespace lasvad {

Matrix frame_similarity(const Matrix& x_f) {
  Matrix unit = x_f;
  for (Index r = 0; r < unit.rows(); ++r) {
    const double norm = unit.row(r).norm();
    if (!(norm > 0.0)) throw DegenerateInputError("frame_similarity: zero feature row " + std::to_string(r));
    unit.row(r) /= norm;
  }
  Matrix a = unit * unit.transpose();
  // Exact symmetry and unit diagonal regardless of summation order.
  for (Index i = 0; i < a.rows(); ++i) {
    a(i, i) = 1.0;
    for (Index j = i + 1; j < a.cols(); ++j) a(j, i) = a(i, j);
  }
  return a;
}

Matrix rectify(const Matrix& a_v, const Matrix& q_l, double eta) {
  if (!(eta >= 0.0)) throw ArgumentError("rectify: eta must be >= 0");
  if (a_v.rows() != a_v.cols() || q_l.rows() != a_v.rows()) throw ArgumentError("rectify: shape mismatch");
  const Index n = a_v.rows();
  Matrix out(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double consistency = q_l.row(i).cwiseMin(q_l.row(j)).maxCoeff();
      out(i, j) = a_v(i, j) * (1.0 + eta * consistency);
    }
  }
  return out;
}

BoolMatrix binarize(const Matrix& a_hat, double tau) { return (a_hat.array() > tau).matrix(); }

std::vector<Component> connected_components(const BoolMatrix& adjacency) {
  if (adjacency.rows() != adjacency.cols()) throw ArgumentError("connected_components: adjacency must be square");
  const Index n = adjacency.rows();
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<Component> out;
  std::vector<Index> stack;
  for (Index root = 0; root < n; ++root) {
    if (seen[static_cast<std::size_t>(root)]) continue;
    Component comp;
    stack.push_back(root);
    seen[static_cast<std::size_t>(root)] = 1;
    while (!stack.empty()) {
      const Index v = stack.back();
      stack.pop_back();
      comp.push_back(v);
      for (Index u = n; u-- > 0;) {
        if (seen[static_cast<std::size_t>(u)]) continue;
        if (adjacency(v, u) || adjacency(u, v)) {
          seen[static_cast<std::size_t>(u)] = 1;
          stack.push_back(u);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

ComponentSet build_component_set(std::vector<Component> components, const Matrix& x_f, const Matrix& p_f) {
  if (x_f.rows() != p_f.rows()) throw ArgumentError("build_component_set: X_f and p_f differ in T");
  ComponentSet set;
  const auto r = static_cast<Index>(components.size());
  set.prototypes = Matrix::Zero(r, x_f.cols());
  set.class_scores = Matrix::Zero(r, p_f.cols());
  std::vector<char> covered(static_cast<std::size_t>(x_f.rows()), 0);
  for (Index i = 0; i < r; ++i) {
    const Component& comp = components[static_cast<std::size_t>(i)];
    if (comp.empty()) throw ArgumentError("build_component_set: empty component");
    for (Index t : comp) {
      if (t < 0 || t >= x_f.rows() || covered[static_cast<std::size_t>(t)]) {
        throw ArgumentError("build_component_set: components do not partition the frames");
      }
      covered[static_cast<std::size_t>(t)] = 1;
      set.prototypes.row(i) += x_f.row(t);
      set.class_scores.row(i) += p_f.row(t);
    }
    set.prototypes.row(i) /= static_cast<double>(comp.size());
    set.class_scores.row(i) /= static_cast<double>(comp.size());
  }
  if (std::find(covered.begin(), covered.end(), 0) != covered.end()) {
    throw ArgumentError("build_component_set: components do not cover every frame");
  }
  set.components = std::move(components);
  return set;
}

Matrix pseudo_labels(const ComponentSet& set, const Matrix& x_f, bool soft) {
  const Index r = set.prototypes.rows();
  Matrix proto_unit = set.prototypes;
  for (Index i = 0; i < r; ++i) {
    const double norm = proto_unit.row(i).norm();
    if (norm > 0.0) proto_unit.row(i) /= norm;
  }
  Matrix labels = Matrix::Zero(x_f.rows(), set.class_scores.cols());
  for (Index t = 0; t < x_f.rows(); ++t) {
    const double norm = x_f.row(t).norm();
    if (!(norm > 0.0)) throw DegenerateInputError("pseudo_labels: zero feature row " + std::to_string(t));
    const RowVector unit = x_f.row(t) / norm;
    Index best = 0;
    double best_sim = unit.dot(proto_unit.row(0));
    for (Index i = 1; i < r; ++i) {
      const double sim = unit.dot(proto_unit.row(i));
      if (sim > best_sim) {
        best_sim = sim;
        best = i;
      }
    }
    if (soft) {
      const RowVector s = set.class_scores.row(best);
      labels.row(t) = s / s.sum();
    } else {
      Index cls = 0;
      set.class_scores.row(best).maxCoeff(&cls);
      labels(t, cls) = 1.0;
    }
  }
  return labels;
}

AccResult anomaly_connected_components(const Matrix& x_f, const Matrix& q_l, const Matrix& p_f,
                                       const AccOptions& options) {
  const Matrix a_hat = rectify(frame_similarity(x_f), q_l, options.eta);
  AccResult result;
  result.set = build_component_set(connected_components(binarize(a_hat, options.tau)), x_f, p_f);
  result.labels = pseudo_labels(result.set, x_f, options.soft);
  return result;
}

void write_component_dump(std::ostream& out, const std::string& video_id, const std::vector<Component>& components) {
  nlohmann::json comps = nlohmann::json::array();
  for (const Component& c : components) comps.push_back(c);
  nlohmann::ordered_json line;
  line["video_id"] = video_id;
  line["components"] = std::move(comps);
  out << line.dump() << '\n';
}

}  // namespace lasvad
