#include "support.hpp"

#include <atomic>
#include <cmath>

#include <unistd.h>

#include "lasvad/random.hpp"

namespace lasvad::testing {

namespace fs = std::filesystem;

Matrix random_matrix(Rng& rng, Index rows, Index cols, double scale) { return rng.normal_matrix(rows, cols, scale); }

Matrix random_simplex_rows(Rng& rng, Index rows, Index cols) {
  Matrix logits = rng.normal_matrix(rows, cols, rng.uniform(0.2, 4.0));
  Matrix out(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const Eigen::RowVectorXd e = (logits.row(r).array() - logits.row(r).maxCoeff()).exp();
    out.row(r) = e / e.sum();
  }
  return out;
}

TextBank random_text_bank(Rng& rng, int num_categories, Index dim) {
  TextBank bank;
  bank.names = rng.normal_matrix(num_categories + 1, dim, 1.0);
  bank.attributes = rng.normal_matrix(num_categories + 1, dim, 1.0);
  bank.category_names.push_back("normal");
  for (int c = 1; c <= num_categories; ++c) bank.category_names.push_back("anomaly_" + std::to_string(c));
  return bank;
}

fs::path scratch_dir(const std::string& name) {
  static std::atomic<int> counter{0};
  const fs::path dir = fs::temp_directory_path() /
                       ("lasvad_test_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

double gradient_relative_error(const Matrix& x, const std::function<ad::Var(ad::Tape&, ad::Var)>& f,
                               double step, double floor) {
  ad::Tape tape;
  const ad::Var v = tape.variable(x);
  const ad::Var out = f(tape, v);
  tape.backward(out);
  const Matrix analytic = tape.grad(v);
  const auto eval = [&](const Matrix& at) {
    ad::Tape t;
    return f(t, t.constant(at)).value()(0, 0);
  };
  Matrix numeric(x.rows(), x.cols());
  Matrix probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double keep = probe.data()[i];
    probe.data()[i] = keep + step;
    const double up = eval(probe);
    probe.data()[i] = keep - step;
    const double down = eval(probe);
    probe.data()[i] = keep;
    numeric.data()[i] = (up - down) / (2.0 * step);
  }
  const double denom = std::max(analytic.norm(), numeric.norm());
  const double diff = (analytic - numeric).norm();
  return denom < floor ? diff : diff / denom;
}

namespace {

struct Fixture {
  TrainConfig config;
  Model model;
  std::vector<TrainingVideo> videos;
  Batch batch;
  BatchTargets targets;
};

Fixture make_fixture(std::uint64_t seed) {
  Rng rng(seed);
  Fixture f;
  f.config.lambda = 0.3;
  f.config.lambda_cst = 1.0;
  f.config.M = 4;
  f.config.head_count = 3;
  f.config.window_length = 8;
  f.config.window_stride = 4;
  f.config.tau = 0.5;
  const TextBank bank = random_text_bank(rng, 2, 9);
  f.model = Model::initialize(model_shape(f.config, 9, 2), bank, 0.5, 0.1, seed + 1);
  // Zero-initialised heads would silence whole branches of the graph.
  f.model.for_each_parameter([&](const std::string&, Matrix& m) { m += rng.normal_matrix(m.rows(), m.cols(), 0.3); });
  f.model.prototypes.z = rng.normal_matrix(f.model.prototypes.z.rows(), f.model.prototypes.z.cols(), 1.0);
  f.videos.push_back({"normal", rng.normal_matrix(12, 9, 1.0), 0, 0});
  f.videos.push_back({"abnormal", rng.normal_matrix(12, 9, 1.0), 1, 2});
  for (const TrainingVideo& v : f.videos) f.batch.push_back(&v);

  ad::Tape tape;
  const ModelVars vars = bind(tape, f.model, false);
  f.targets = compute_targets(forward_batch(tape, vars, f.model, f.batch), f.batch, f.config);
  return f;
}

double loss_value(const Fixture& f, const Model& model) {
  ad::Tape tape;
  const ModelVars vars = bind(tape, model, false);
  const auto forwards = forward_batch(tape, vars, model, f.batch);
  return assemble_loss(tape, forwards, f.batch, f.targets, f.config, 1.0).total.scalar();
}

}  // namespace

std::vector<GroupError> gradient_check_full_loss(std::uint64_t seed, double step) {
  Fixture f = make_fixture(seed);

  ad::Tape tape;
  const ModelVars vars = bind(tape, f.model, true);
  const auto forwards = forward_batch(tape, vars, f.model, f.batch);
  const BatchLoss loss = assemble_loss(tape, forwards, f.batch, f.targets, f.config, 1.0);
  tape.backward(loss.total);
  std::vector<Matrix> analytic;
  vars.backbone.for_each([&](const char*, const ad::Var& v) { analytic.push_back(tape.grad(v)); });
  vars.heads.for_each([&](const char*, const ad::Var& v) { analytic.push_back(tape.grad(v)); });
  vars.intention.for_each([&](const char*, const ad::Var& v) { analytic.push_back(tape.grad(v)); });

  std::vector<GroupError> out;
  std::size_t group = 0;
  Model probe = f.model;
  probe.for_each_parameter([&](const std::string& name, Matrix& m) {
    Matrix numeric(m.rows(), m.cols());
    for (Index i = 0; i < m.size(); ++i) {
      const double saved = m(i);
      m(i) = saved + step;
      const double up = loss_value(f, probe);
      m(i) = saved - step;
      const double down = loss_value(f, probe);
      m(i) = saved;
      numeric(i) = (up - down) / (2.0 * step);
    }
    const Matrix& a = analytic[group++];
    GroupError e;
    e.name = name;
    e.analytic_norm = a.norm();
    e.numeric_norm = numeric.norm();
    const double denom = std::max(e.analytic_norm, e.numeric_norm);
    e.absolute_error = (a - numeric).norm();
    e.relative_error = denom == 0.0 ? 0.0 : e.absolute_error / denom;
    out.push_back(e);
  });
  return out;
}

}  // namespace lasvad::testing
