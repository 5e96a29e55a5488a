#include "lasvad/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "lasvad/error.hpp"
#include "lasvad/heads.hpp"
#include "lasvad/random.hpp"

namespace lasvad {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

Matrix stack_rows(const std::vector<Matrix>& parts) {
  Index rows = 0;
  for (const Matrix& m : parts) rows += m.rows();
  Matrix out(rows, parts.empty() ? 0 : parts.front().cols());
  Index at = 0;
  for (const Matrix& m : parts) {
    out.middleRows(at, m.rows()) = m;
    at += m.rows();
  }
  return out;
}

std::vector<ad::Var> parameter_vars(const ModelVars& vars) {
  std::vector<ad::Var> out;
  vars.backbone.for_each([&](const char*, const ad::Var& v) { out.push_back(v); });
  vars.heads.for_each([&](const char*, const ad::Var& v) { out.push_back(v); });
  vars.intention.for_each([&](const char*, const ad::Var& v) { out.push_back(v); });
  return out;
}

void check_finite(const char* name, double v, int epoch, int step) {
  if (!std::isfinite(v)) {
    throw NumericError("non-finite " + std::string(name) + " at epoch " + std::to_string(epoch) + ", step " +
                       std::to_string(step));
  }
}

std::uint64_t shuffle_seed(std::uint64_t seed, int epoch) {
  return seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch) + 1u;
}

}  // namespace

Matrix subsample_frames(const Matrix& features, Index max_frames) {
  const Index t = features.rows();
  if (max_frames < 1) throw ArgumentError("subsample_frames: max_frames must be >= 1");
  if (t <= max_frames) return features;
  Matrix out(max_frames, features.cols());
  for (Index i = 0; i < max_frames; ++i) out.row(i) = features.row(i * t / max_frames);
  return out;
}

std::vector<TrainingVideo> load_training_videos(const std::vector<VideoRecord>& records, Index max_frames) {
  std::vector<TrainingVideo> out;
  out.reserve(records.size());
  for (const VideoRecord& r : records) {
    const FeatureSequence seq = load_video(r);
    if (!out.empty() && seq.dim() != out.front().features.cols()) {
      throw ConfigError("video " + r.video_id + " has D=" + std::to_string(seq.dim()) + " but the corpus uses D=" +
                        std::to_string(out.front().features.cols()));
    }
    out.push_back({r.video_id, subsample_frames(seq.as_double(), max_frames), r.y, r.g});
  }
  return out;
}

ModelShape model_shape(const TrainConfig& c, Index dim, int num_categories) {
  ModelShape s;
  s.dim = dim;
  s.num_categories = num_categories;
  s.head_count = c.head_count;
  s.window_length = c.window_length;
  s.window_stride = c.effective_stride();
  s.ff_dim = c.ff_dim;
  s.intent_hidden = c.intent_hidden;
  s.temp_sim = c.temp_sim;
  return s;
}

TrainState initial_state(const TrainConfig& config, const TextBank& bank) {
  config.validate();
  TrainState state;
  state.config = config;
  state.model = Model::initialize(model_shape(config, bank.dim(), bank.num_categories()), bank, config.alpha,
                                  config.beta, config.seed);
  state.category_names = bank.category_names;
  return state;
}

std::vector<VideoForward> forward_batch(ad::Tape& tape, const ModelVars& vars, const Model& model, const Batch& batch) {
  std::vector<VideoForward> out;
  out.reserve(batch.size());
  for (const TrainingVideo* v : batch) out.push_back(forward_video(tape, vars, model, v->features));
  return out;
}

BatchTargets compute_targets(const std::vector<VideoForward>& forwards, const Batch& batch, const TrainConfig& config) {
  BatchTargets t;
  const AccOptions acc{config.eta, config.tau, config.soft_pseudo_labels};
  std::vector<Matrix> pool;
  std::vector<int> labels;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const VideoForward& f = forwards[i];
    t.pseudo.push_back(anomaly_connected_components(f.x_f.value(), f.q_l.value(), f.p_f.value(), acc).labels);
    pool.push_back(f.x_int.value());
    const std::vector<int> l = intention_frame_labels(f.q_a.value(), batch[i]->y == 0);
    labels.insert(labels.end(), l.begin(), l.end());
  }
  t.pairs = sample_contrastive_pairs(stack_rows(pool), labels, config.M);
  return t;
}

BatchLoss assemble_loss(ad::Tape& tape, const std::vector<VideoForward>& forwards, const Batch& batch,
                        const BatchTargets& targets, const TrainConfig& config, double aux_weight) {
  if (batch.empty()) throw ArgumentError("assemble_loss: empty batch");
  std::vector<ad::Var> ags, fg, aux, reg, x_int;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const VideoForward& f = forwards[i];
    const Index k = mil_k(f.p_f.rows());
    ags.push_back(ad::loss_ags(ad::topk_mean_cols(f.q_b, k), batch[i]->y));
    fg.push_back(ad::loss_fg(ad::topk_mean_cols(f.p_f, k), batch[i]->g));
    aux.push_back(ad::loss_aux(targets.pseudo[i], f.q_m));
    reg.push_back(ad::loss_reg(f.p_f, f.q_b));
    x_int.push_back(f.x_int);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  auto batch_mean = [&](const std::vector<ad::Var>& parts) { return ad::scale(ad::sum(ad::concat_rows(parts)), inv); };
  BatchLoss l;
  l.ags = batch_mean(ags);
  l.fg = batch_mean(fg);
  l.aux = batch_mean(aux);
  l.reg = batch_mean(reg);
  l.cst = ad::loss_cst(ad::concat_rows(x_int), targets.pairs, config.cst_temperature);
  l.total = ad::add(ad::add(l.ags, l.fg), ad::scale(l.aux, aux_weight));
  l.total = ad::add(l.total, ad::scale(l.reg, config.lambda));
  l.total = ad::add(l.total, ad::scale(l.cst, config.lambda_cst));
  (void)tape;
  return l;
}

nlohmann::ordered_json step_json(const StepRecord& r) {
  ordered_json j;
  j["type"] = "step";
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["aux_active"] = r.aux_active;
  j["L_ags"] = r.parts.ags;
  j["L_fg"] = r.parts.fg;
  j["L_aux"] = r.parts.aux;
  j["L_reg"] = r.parts.reg;
  j["L_cst"] = r.parts.cst;
  j["L_all"] = r.total;
  return j;
}

StepRecord train_step(TrainState& state, const Batch& batch, int epoch, int step) {
  const TrainConfig& cfg = state.config;
  Model& model = state.model;
  ad::Tape tape;
  const ModelVars vars = bind(tape, model, true);
  const std::vector<VideoForward> forwards = forward_batch(tape, vars, model, batch);
  const BatchTargets targets = compute_targets(forwards, batch, cfg);
  const bool aux_active = epoch >= cfg.acc_warmup_epochs;
  const BatchLoss loss = assemble_loss(tape, forwards, batch, targets, cfg, aux_active ? 1.0 : 0.0);

  StepRecord rec;
  rec.epoch = epoch;
  rec.step = step;
  rec.aux_active = aux_active;
  rec.parts = {loss.ags.scalar(), loss.fg.scalar(), loss.aux.scalar(), loss.reg.scalar(), loss.cst.scalar()};
  rec.total = loss.total.scalar();
  check_finite("L_ags", rec.parts.ags, epoch, step);
  check_finite("L_fg", rec.parts.fg, epoch, step);
  check_finite("L_aux", rec.parts.aux, epoch, step);
  check_finite("L_reg", rec.parts.reg, epoch, step);
  check_finite("L_cst", rec.parts.cst, epoch, step);
  check_finite("L_all", rec.total, epoch, step);

  tape.backward(loss.total);
  const std::vector<ad::Var> params = parameter_vars(vars);
  std::vector<Matrix*> targets_ptr;
  model.for_each_parameter([&](const std::string&, Matrix& m) { targets_ptr.push_back(&m); });
  std::vector<Matrix> grads;
  grads.reserve(params.size());
  for (const ad::Var& p : params) grads.push_back(tape.grad(p));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].allFinite()) throw NumericError("non-finite gradient at epoch " + std::to_string(epoch));
  }
  adamw_step(targets_ptr, grads, state.optimizer,
             {cfg.learning_rate, cfg.weight_decay, 0.9, 0.999, 1e-8});

  std::vector<Matrix> x_int, q_a;
  for (const VideoForward& f : forwards) {
    x_int.push_back(f.x_int.value());
    q_a.push_back(f.q_a.value());
  }
  model.prototypes.z =
      update_prototypes(model.prototypes.z, stack_rows(x_int), stack_rows(q_a), model.prototypes.alpha,
                        model.prototypes.beta);
  return rec;
}

std::vector<StepRecord> run_training(TrainState& state, const std::vector<TrainingVideo>& videos, std::ostream* log) {
  if (videos.empty()) throw ValidationError("training needs at least one video");
  for (const TrainingVideo& v : videos) {
    if (v.features.cols() != state.model.shape.dim) {
      throw ConfigError("video " + v.video_id + " has D=" + std::to_string(v.features.cols()) +
                        " but the text bank has D=" + std::to_string(state.model.shape.dim));
    }
  }
  const TrainConfig& cfg = state.config;
  std::vector<StepRecord> records;
  int step = static_cast<int>(state.optimizer.step);
  for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(videos.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(shuffle_seed(cfg.seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1))]);
    }
    LossComponents sum;
    double total = 0.0;
    int steps = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      Batch batch;
      for (std::size_t j = at; j < std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size)); ++j) {
        batch.push_back(&videos[order[j]]);
      }
      const StepRecord r = train_step(state, batch, epoch, step++);
      records.push_back(r);
      if (log != nullptr) *log << step_json(r).dump() << '\n';
      sum.ags += r.parts.ags;
      sum.fg += r.parts.fg;
      sum.aux += r.parts.aux;
      sum.reg += r.parts.reg;
      sum.cst += r.parts.cst;
      total += r.total;
      ++steps;
    }
    state.epoch = epoch + 1;
    if (log != nullptr) {
      const double n = static_cast<double>(steps);
      ordered_json e;
      e["type"] = "epoch";
      e["epoch"] = epoch;
      e["steps"] = steps;
      e["L_ags"] = sum.ags / n;
      e["L_fg"] = sum.fg / n;
      e["L_aux"] = sum.aux / n;
      e["L_reg"] = sum.reg / n;
      e["L_cst"] = sum.cst / n;
      e["L_all"] = total / n;
      *log << e.dump() << '\n';
      log->flush();
    }
  }
  return records;
}

TrainOutputs train(const TrainConfig& config, const fs::path& manifest, const fs::path& text_bank_prefix,
                   const fs::path& out_dir) {
  config.validate();
  const std::vector<VideoRecord> records = read_manifest(manifest);
  const TextBank bank = load_text_bank(text_bank_paths(text_bank_prefix));
  for (const VideoRecord& r : records) {
    if (r.g > bank.num_categories()) {
      throw ValidationError("video " + r.video_id + " has category " + std::to_string(r.g) + " but the text bank has C=" +
                            std::to_string(bank.num_categories()));
    }
  }
  const std::vector<TrainingVideo> videos = load_training_videos(records, config.max_frames);
  TrainState state = initial_state(config, bank);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  TrainOutputs out;
  out.checkpoint = out_dir / "checkpoint.lasc";
  out.log = out_dir / "train_log.jsonl";
  std::ofstream log(out.log, std::ios::trunc);
  if (!log) throw IoError("cannot write " + out.log.string());
  out.steps = run_training(state, videos, &log);
  save_checkpoint(out.checkpoint, state);
  return out;
}

InstanceOptions instance_options(const TrainConfig& c) {
  InstanceOptions o;
  o.theta_v = c.theta_v;
  o.theta_s = c.theta_s;
  o.merge_gap = c.merge_gap;
  o.margin_ratio = c.margin_ratio;
  o.nms_iou = c.nms_iou;
  return o;
}

VideoPrediction predict_video(const Model& model, const std::string& video_id, const Matrix& features,
                              const InstanceOptions& options) {
  const VideoOutputs out = predict(model, features);
  return {video_id, coarse_scores(out.predictions.p_f, out.predictions.q_b),
          detect_instances(out.predictions.p_f, options)};
}

std::vector<VideoPrediction> infer(const TrainState& state, const std::vector<VideoRecord>& records,
                                   std::ostream* components) {
  const InstanceOptions options = instance_options(state.config);
  const AccOptions acc{state.config.eta, state.config.tau, state.config.soft_pseudo_labels};
  std::vector<VideoPrediction> out;
  out.reserve(records.size());
  for (const VideoRecord& r : records) {
    const Matrix features = load_video(r).as_double();
    const VideoOutputs vo = predict(state.model, features);
    out.push_back({r.video_id, coarse_scores(vo.predictions.p_f, vo.predictions.q_b),
                   detect_instances(vo.predictions.p_f, options)});
    if (components != nullptr) {
      const AccResult res = anomaly_connected_components(vo.x_f, vo.predictions.q_l, vo.predictions.p_f, acc);
      write_component_dump(*components, r.video_id, res.set.components);
    }
  }
  return out;
}

void write_predictions(std::ostream& out, const std::vector<VideoPrediction>& predictions) {
  for (const VideoPrediction& p : predictions) {
    ordered_json j;
    j["video_id"] = p.video_id;
    j["coarse"] = std::vector<double>(p.coarse.data(), p.coarse.data() + p.coarse.size());
    ordered_json inst = ordered_json::array();
    for (const AnomalyInstance& a : p.instances) inst.push_back({a.start, a.end, a.category, a.confidence});
    j["instances"] = std::move(inst);
    out << j.dump() << '\n';
  }
}

void write_predictions(const fs::path& path, const std::vector<VideoPrediction>& predictions) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write predictions " + path.string());
  write_predictions(f, predictions);
  if (!f) throw IoError("failed writing predictions " + path.string());
}

std::vector<VideoPrediction> read_predictions(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open predictions " + path.string());
  std::vector<VideoPrediction> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(f, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      VideoPrediction p;
      p.video_id = j.at("video_id").get<std::string>();
      const auto coarse = j.at("coarse").get<std::vector<double>>();
      p.coarse = Eigen::Map<const Vector>(coarse.data(), static_cast<Index>(coarse.size()));
      for (const auto& a : j.at("instances")) {
        if (!a.is_array() || a.size() != 4) throw ParseError("instance must be [start, end, category, confidence]");
        p.instances.push_back({a[0].get<Index>(), a[1].get<Index>(), a[2].get<int>(), a[3].get<double>()});
      }
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

std::vector<int> frame_labels(const VideoRecord& record, Index frames) {
  std::vector<int> labels(static_cast<std::size_t>(frames), 0);
  for (const GroundTruthInstance& g : record.instances) {
    if (g.start < 0 || g.end < g.start || g.end >= frames) {
      throw ValidationError("video " + record.video_id + ": ground-truth instance outside [0, " +
                            std::to_string(frames) + ")");
    }
    for (int t = g.start; t <= g.end; ++t) labels[static_cast<std::size_t>(t)] = 1;
  }
  return labels;
}

EvalReport evaluate(const std::vector<VideoPrediction>& predictions, const std::vector<VideoRecord>& records) {
  std::unordered_map<std::string, const VideoPrediction*> by_id;
  for (const VideoPrediction& p : predictions) by_id.emplace(p.video_id, &p);
  std::string missing;
  for (const VideoRecord& r : records) {
    if (by_id.count(r.video_id) == 0) missing += (missing.empty() ? "" : ", ") + r.video_id;
  }
  if (!missing.empty()) throw ValidationError("predictions missing for: " + missing);

  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<VideoDetections> detections;
  std::vector<VideoGroundTruth> truth;
  for (const VideoRecord& r : records) {
    const VideoPrediction& p = *by_id.at(r.video_id);
    const std::vector<int> l = frame_labels(r, p.coarse.size());
    scores.insert(scores.end(), p.coarse.data(), p.coarse.data() + p.coarse.size());
    labels.insert(labels.end(), l.begin(), l.end());
    detections.push_back({r.video_id, p.instances});
    truth.push_back({r.video_id, r.instances});
  }
  EvalReport report;
  report.frame_auc = frame_auc(scores, labels);
  report.frame_ap = frame_ap(scores, labels);
  const MapResult m = map_at_iou(detections, truth);
  report.map_at = m.map_at;
  report.avg_map = m.avg_map;
  return report;
}

namespace {
std::string threshold_key(double t) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << t;
  return os.str();
}
}  // namespace

nlohmann::ordered_json report_json(const EvalReport& report) {
  ordered_json j;
  j["frame_ap"] = report.frame_ap;
  j["frame_auc"] = report.frame_auc;
  ordered_json m = ordered_json::object();
  for (const auto& [t, v] : report.map_at) m[threshold_key(t)] = v;
  j["map"] = std::move(m);
  j["avg_map"] = report.avg_map;
  return j;
}

std::string report_table(const EvalReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << std::left << std::setw(12) << "metric" << std::right << std::setw(10) << "value" << '\n';
  os << std::left << std::setw(12) << "frame_AP" << std::right << std::setw(10) << report.frame_ap << '\n';
  os << std::left << std::setw(12) << "frame_AUC" << std::right << std::setw(10) << report.frame_auc << '\n';
  for (const auto& [t, v] : report.map_at) {
    os << std::left << std::setw(12) << ("mAP@" + threshold_key(t)) << std::right << std::setw(10) << v << '\n';
  }
  os << std::left << std::setw(12) << "AVG" << std::right << std::setw(10) << report.avg_map << '\n';
  return os.str();
}

void write_curves(const std::vector<VideoPrediction>& predictions, const std::vector<VideoRecord>& records,
                  const fs::path& out_dir) {
  std::unordered_map<std::string, const VideoPrediction*> by_id;
  for (const VideoPrediction& p : predictions) by_id.emplace(p.video_id, &p);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  for (const VideoRecord& r : records) {
    auto it = by_id.find(r.video_id);
    if (it == by_id.end()) throw ValidationError("predictions missing for: " + r.video_id);
    const VideoPrediction& p = *it->second;
    const std::vector<int> labels = frame_labels(r, p.coarse.size());
    const fs::path path = out_dir / (r.video_id + ".csv");
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << "frame,coarse,ground_truth\n";
    f << std::setprecision(17);
    for (Index t = 0; t < p.coarse.size(); ++t) f << t << ',' << p.coarse(t) << ',' << labels[static_cast<std::size_t>(t)] << '\n';
  }
}

}  // namespace lasvad
