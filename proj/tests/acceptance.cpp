// One PASS/FAIL line per acceptance criterion; exit status is the failure count.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "lasvad/acc.hpp"
#include "lasvad/heads.hpp"
#include "lasvad/inference.hpp"
#include "lasvad/synth.hpp"
#include "lasvad/trainer.hpp"
#include "support.hpp"

namespace {

using namespace lasvad;
namespace fs = std::filesystem;

// Tolerances and budgets.
constexpr double kTopkTolerance = 1e-9;
constexpr double kTopkBudgetSeconds = 5.0;
constexpr double kComponentsBudgetSeconds = 10.0;
constexpr double kRectifyEta = 0.5;
constexpr double kGradientTolerance = 1e-4;
constexpr double kVanishingGradientNorm = 1e-8;  // below this a group is compared absolutely
constexpr double kGradientBudgetSeconds = 60.0;
constexpr double kMetricTolerance = 1e-12;
constexpr double kTrainedAucMin = 0.85;
constexpr double kTrainedMapAt05Min = 0.30;
constexpr double kUntrainedAucMax = 0.65;
constexpr double kEndToEndBudgetSeconds = 600.0;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome topk_oracle() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(1);
  double worst = 0.0;
  int cases = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int t = static_cast<int>(rng.integer(1, 8));
    std::vector<double> v(static_cast<std::size_t>(t));
    for (double& x : v) x = rng.uniform();
    const int k = static_cast<int>(rng.integer(1, std::min(3, t)));
    double best = -1e300;
    for (unsigned mask = 0; mask < (1u << t); ++mask) {
      if (std::popcount(mask) != k) continue;
      double s = 0.0;
      for (int i = 0; i < t; ++i) {
        if (mask & (1u << i)) s += v[static_cast<std::size_t>(i)];
      }
      best = std::max(best, s / k);
    }
    worst = std::max(worst, std::abs(topk_pool(v, k) - best));
    ++cases;
  }
  const double elapsed = seconds_since(start);
  return {worst <= kTopkTolerance && elapsed < kTopkBudgetSeconds && cases == 1000,
          fmt("%.0f cases, max |diff| %.2e, %.3f s", cases, worst, elapsed)};
}

Outcome components_oracle() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(2);
  const double densities[] = {0.05, 0.2, 0.5};
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = rng.integer(1, 32);
    const double density = densities[trial % 3];
    BoolMatrix a = BoolMatrix::Constant(n, n, false);
    for (Index i = 0; i < n; ++i) {
      a(i, i) = true;
      for (Index j = i + 1; j < n; ++j) a(i, j) = a(j, i) = rng.uniform() < density;
    }
    Eigen::MatrixXi r = a.cast<int>();
    for (Index step = 1; step < n; step *= 2) r = (r * r).cwiseMin(1);
    std::vector<Index> closure_class(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      Index lowest = i;
      for (Index j = 0; j < n; ++j) {
        if (r(i, j)) lowest = std::min(lowest, j);
      }
      closure_class[static_cast<std::size_t>(i)] = lowest;
    }
    std::vector<Index> dfs_class(static_cast<std::size_t>(n), -1);
    for (const Component& c : connected_components(a)) {
      const Index lowest = *std::min_element(c.begin(), c.end());
      for (Index v : c) {
        if (dfs_class[static_cast<std::size_t>(v)] != -1) ++mismatches;
        dfs_class[static_cast<std::size_t>(v)] = lowest;
      }
    }
    if (dfs_class != closure_class) ++mismatches;
  }
  const double elapsed = seconds_since(start);
  return {mismatches == 0 && elapsed < kComponentsBudgetSeconds,
          fmt("200 graphs, %.0f mismatches, %.3f s", mismatches, elapsed)};
}

Outcome rectification_bounds() {
  Rng rng(3);
  bool identity = true;
  double lo = 1e300, hi = -1e300;
  for (int trial = 0; trial < 100; ++trial) {
    const Index t = rng.integer(2, 24), d = rng.integer(3, 12);
    const Matrix x_f = rng.normal_matrix(t, d, 1.0);
    const Matrix q_l = align_scores(x_f, rng.normal_matrix(rng.integer(2, 5), d, 1.0), 0.07);
    const Matrix a_v = frame_similarity(x_f);
    const Matrix same = rectify(a_v, q_l, 0.0);
    identity = identity && std::equal(same.data(), same.data() + same.size(), a_v.data(),
                                      [](double p, double q) { return std::bit_cast<std::uint64_t>(p) ==
                                                                      std::bit_cast<std::uint64_t>(q); });
    const Matrix r = rectify(a_v, q_l, kRectifyEta);
    for (Index i = 0; i < a_v.size(); ++i) {
      if (a_v.data()[i] == 0.0) continue;
      const double ratio = r.data()[i] / a_v.data()[i];
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
  }
  return {identity && lo >= 1.0 && hi <= 1.0 + kRectifyEta,
          std::string(identity ? "eta=0 bit-identical" : "eta=0 differs") + fmt(", ratio in [%.6f, %.6f]", lo, hi)};
}

Outcome gradient_verification() {
  const auto start = std::chrono::steady_clock::now();
  const auto groups = testing::gradient_check_full_loss(7);
  const double elapsed = seconds_since(start);
  double worst = 0.0;
  std::string worst_name, vanishing;
  bool pass = true;
  for (const auto& g : groups) {
    if (std::max(g.analytic_norm, g.numeric_norm) < kVanishingGradientNorm) {
      vanishing += (vanishing.empty() ? "" : ",") + g.name;
      pass = pass && g.absolute_error < kVanishingGradientNorm;
      continue;
    }
    if (g.relative_error > worst) worst = g.relative_error, worst_name = g.name;
    pass = pass && g.relative_error < kGradientTolerance;
  }
  return {pass && elapsed < kGradientBudgetSeconds,
          fmt("%.0f groups, max rel err %.2e", static_cast<double>(groups.size()), worst) + " (" + worst_name + ")" +
              (vanishing.empty() ? "" : ", zero-gradient groups " + vanishing) + fmt(", %.2f s", elapsed)};
}

Outcome metric_oracles() {
  const double ap = frame_ap(std::vector<double>{0.9, 0.8, 0.7}, std::vector<int>{1, 0, 1});
  const double perfect = frame_auc(std::vector<double>{0.9, 0.8, 0.1}, std::vector<int>{1, 1, 0});
  const double inverted = frame_auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 0});
  const double tied = frame_auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<int>{1, 0, 1, 0});
  const double iou = temporal_iou({10, 19}, {15, 24});
  const AnomalyInstance a{0, 9, 1, 0.9}, b{1, 8, 1, 0.8};
  const auto kept = nms({a, b}, 0.5);
  const bool pass = std::abs(ap - 5.0 / 6.0) <= kMetricTolerance && perfect == 1.0 && inverted == 0.0 &&
                    tied == 0.5 && std::abs(iou - 1.0 / 3.0) <= kMetricTolerance && kept == std::vector{a};
  return {pass, fmt("AP %.15f, AUC %.1f/%.1f/%.1f", ap, perfect, inverted, tied) +
                    fmt(", IoU %.15f, NMS kept %.0f", iou, static_cast<double>(kept.size()))};
}

struct EndToEnd {
  Outcome synthetic;
  Outcome determinism;
};

EndToEnd end_to_end() {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir = testing::scratch_dir("acceptance");
  SynthConfig s;
  s.n_videos = 60;
  s.num_categories = 3;
  s.dim = 24;
  s.t_min = 64;
  s.t_max = 128;
  s.anomaly_ratio = 0.5;
  s.snr = 8.0;
  s.seed = 7;
  const SynthCorpus corpus = generate_synthetic_corpus(s, dir / "corpus");
  std::vector<VideoRecord> train_records, test_records;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    (i % 3 == 2 ? test_records : train_records).push_back(corpus.records[i]);
  }
  write_manifest(dir / "corpus" / "train.jsonl", train_records);
  write_manifest(dir / "corpus" / "test.jsonl", test_records);
  const std::vector<VideoRecord> held_out = read_manifest(dir / "corpus" / "test.jsonl");

  TrainConfig config;
  config.batch_size = 8;
  config.learning_rate = 2e-4;
  config.epochs = 10;
  config.seed = 7;

  const TextBank bank = load_text_bank(text_bank_paths(corpus.text_bank_prefix));
  const EvalReport untrained = evaluate(infer(initial_state(config, bank), held_out), held_out);

  const TrainOutputs run = train(config, dir / "corpus" / "train.jsonl", corpus.text_bank_prefix, dir / "run_a");
  const TrainState state = load_checkpoint(run.checkpoint);
  const auto predictions = infer(state, held_out);
  const EvalReport trained = evaluate(predictions, held_out);
  const double elapsed = seconds_since(start);

  EndToEnd out;
  const double map05 = trained.map_at.at(0.5);
  out.synthetic.pass = trained.frame_auc >= kTrainedAucMin && map05 >= kTrainedMapAt05Min &&
                       untrained.frame_auc <= kUntrainedAucMax && elapsed < kEndToEndBudgetSeconds;
  out.synthetic.detail = fmt("trained AUC %.4f, mAP@0.5 %.4f, AVG %.4f", trained.frame_auc, map05, trained.avg_map) +
                         fmt(", untrained AUC %.4f, %.1f s", untrained.frame_auc, elapsed);

  const TrainOutputs again = train(config, dir / "corpus" / "train.jsonl", corpus.text_bank_prefix, dir / "run_b");
  std::ostringstream first, second;
  write_predictions(first, predictions);
  write_predictions(second, infer(load_checkpoint(again.checkpoint), held_out));
  const bool logs_equal = !slurp(run.log).empty() && slurp(run.log) == slurp(again.log);
  const bool infer_equal = first.str() == second.str();
  out.determinism.pass = logs_equal && infer_equal;
  out.determinism.detail = std::string("step logs ") + (logs_equal ? "identical" : "differ") + ", infer output " +
                           (infer_equal ? "byte-identical" : "differs");
  return out;
}

// Runs the property and gradient suites of the unit-test binary.
Outcome invariant_suite() {
  const std::string cmd = std::string(LASVAD_UNIT_TESTS) +
                          " --gtest_filter='*Property*:*Gradient*' --gtest_brief=1 > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  const bool pass = WIFEXITED(status) && WEXITSTATUS(status) == 0;
  return {pass, pass ? "all property suites passed" : "property suite failures (run lasvad_tests for details)"};
}

}  // namespace

int main() {
  int failures = 0;
  const auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };
  report(1, "top-K pooling oracle", topk_oracle);
  report(2, "connected-components oracle", components_oracle);
  report(3, "rectification identity and bounds", rectification_bounds);
  report(4, "gradient verification", gradient_verification);
  report(5, "metric oracles", metric_oracles);
  EndToEnd e2e;
  try {
    e2e = end_to_end();
  } catch (const std::exception& e) {
    e2e.synthetic = {false, std::string("exception: ") + e.what()};
    e2e.determinism = e2e.synthetic;
  }
  report(6, "synthetic end-to-end", [&] { return e2e.synthetic; });
  report(7, "determinism", [&] { return e2e.determinism; });
  report(8, "invariant suite", invariant_suite);
  return failures;
}
