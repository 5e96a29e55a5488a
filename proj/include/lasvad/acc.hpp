#pragma once

// Anomaly-connected components: rectified frame-similarity graph, DFS
// components, component prototypes and frame-level pseudo-labels.

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "lasvad/autodiff.hpp"

namespace lasvad {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;
using Component = std::vector<Index>;

struct ComponentSet {
  std::vector<Component> components;  // disjoint, covering, ordered by smallest index
  Matrix prototypes;                  // r x D, mean X_f per component
  Matrix class_scores;                // r x (C+1), mean p_f per component
};

// Cosine similarity between every pair of rows.
Matrix frame_similarity(const Matrix& x_f);

// A_hat[i,j] = A_v[i,j] * (1 + eta * max_c min(q_l[i,c], q_l[j,c])).
Matrix rectify(const Matrix& a_v, const Matrix& q_l, double eta);

// Strict threshold: A_hat > tau.
BoolMatrix binarize(const Matrix& a_hat, double tau);

// Maximal connected components of the undirected graph (adjacency OR its transpose),
// found by iterative depth-first search.
std::vector<Component> connected_components(const BoolMatrix& adjacency);

ComponentSet build_component_set(std::vector<Component> components, const Matrix& x_f, const Matrix& p_f);

// Each frame takes the class of the component prototype nearest in cosine
// (ties to the lowest component index). Hard labels are one-hot at the argmax
// of that component's mean p_f; soft labels are the mean p_f renormalised.
Matrix pseudo_labels(const ComponentSet& set, const Matrix& x_f, bool soft = false);

struct AccOptions {
  double eta = 0.5;
  double tau = 0.9;
  bool soft = false;
};

struct AccResult {
  ComponentSet set;
  Matrix labels;  // T x (C+1)
};

AccResult anomaly_connected_components(const Matrix& x_f, const Matrix& q_l, const Matrix& p_f, const AccOptions& options);

// {"video_id": ..., "components": [[indices]...]} as a single JSON line.
void write_component_dump(std::ostream& out, const std::string& video_id, const std::vector<Component>& components);

}  // namespace lasvad
