#pragma once

// Shared fixtures and oracles for the unit and acceptance suites.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lasvad/trainer.hpp"

namespace lasvad::testing {

Matrix random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0);

// Rows on the simplex with a random temperature.
Matrix random_simplex_rows(Rng& rng, Index rows, Index cols);

TextBank random_text_bank(Rng& rng, int num_categories, Index dim);

// A fresh scratch directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

// ||analytic - numeric|| / max(||analytic||, ||numeric||) for the gradient of
// the scalar f at x. When both norms are below `floor` the gradient is zero up
// to differencing noise (e.g. a softmax shift) and the absolute error is returned.
double gradient_relative_error(const Matrix& x, const std::function<ad::Var(ad::Tape&, ad::Var)>& f,
                               double step = 1e-6, double floor = 1e-8);

struct GroupError {
  std::string name;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
  double absolute_error = 0.0;  // ||a - n||
  double relative_error = 0.0;  // ||a - n|| / max(||a||, ||n||), 0 when both vanish
};

// Tiny model (T=12, D=9, C=2) with every parameter randomised so all paths
// carry gradient; one normal and one abnormal video; pseudo-labels and
// contrastive pairs fixed from an initial forward pass. Compares the analytic
// gradient of L_all (lambda 0.3, lambda_cst 1, L_aux on) with central
// differences, one entry per learnable tensor.
std::vector<GroupError> gradient_check_full_loss(std::uint64_t seed, double step = 1e-6);

}  // namespace lasvad::testing
