#include "lasvad/model.hpp"

#include "lasvad/error.hpp"
#include "lasvad/random.hpp"

namespace lasvad {

Model Model::initialize(const ModelShape& shape, const TextBank& bank, double alpha, double beta, std::uint64_t seed) {
  if (bank.dim() != shape.dim) {
    throw ConfigError("text bank D=" + std::to_string(bank.dim()) + " differs from feature D=" + std::to_string(shape.dim));
  }
  if (bank.num_categories() != shape.num_categories) throw ConfigError("text bank category count differs from model");
  Model m;
  m.shape = shape;
  if (m.shape.ff_dim == 0) m.shape.ff_dim = 4 * shape.dim;
  if (m.shape.intent_hidden == 0) m.shape.intent_hidden = 3 * (shape.dim / 3);
  Rng rng(seed);
  m.backbone = BackboneParams::initialize(shape.dim, m.shape.ff_dim, shape.window_length, shape.window_stride,
                                          shape.head_count, rng);
  m.heads = HeadParams::initialize(shape.dim, shape.num_classes(), shape.temp_sim);
  m.intention = IntentionParams::initialize(shape.dim, m.shape.intent_hidden, shape.num_classes(), rng);
  m.prototypes = IntentionPrototypes::initialize(shape.num_classes(), m.intention.intention_dim(), alpha, beta, rng);
  m.text = fuse_text_bank(bank);
  return m;
}

void Model::for_each_parameter(const std::function<void(const std::string&, Matrix&)>& f) {
  backbone.for_each([&](const char* n, Matrix& m) { f(std::string("backbone.") + n, m); });
  heads.for_each([&](const char* n, Matrix& m) { f(std::string("heads.") + n, m); });
  intention.for_each([&](const char* n, Matrix& m) { f(std::string("intention.") + n, m); });
}

void Model::for_each_parameter(const std::function<void(const std::string&, const Matrix&)>& f) const {
  backbone.for_each([&](const char* n, const Matrix& m) { f(std::string("backbone.") + n, m); });
  heads.for_each([&](const char* n, const Matrix& m) { f(std::string("heads.") + n, m); });
  intention.for_each([&](const char* n, const Matrix& m) { f(std::string("intention.") + n, m); });
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for_each_parameter([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

ModelVars bind(ad::Tape& tape, const Model& model, bool trainable) {
  return {ad::bind(tape, model.backbone, trainable), ad::bind(tape, model.heads, trainable),
          ad::bind(tape, model.intention, trainable), tape.constant(model.text)};
}

VideoForward forward_video(ad::Tape& tape, const ModelVars& vars, const Model& model, const Matrix& features) {
  if (features.cols() != model.shape.dim) {
    throw ConfigError("feature D=" + std::to_string(features.cols()) + " but model expects D=" +
                      std::to_string(model.shape.dim));
  }
  VideoForward f;
  f.x_h = ad::windowed_attention(tape.constant(features), vars.backbone, model.backbone.window_length,
                                 model.backbone.window_stride, model.backbone.head_count);
  f.x_f = ad::similarity_gcn(f.x_h, vars.backbone.gcn_w);
  f.q_l = ad::align_scores(f.x_f, vars.text, model.heads.temp_sim);
  f.q_b = ad::classify_binary(f.x_f, vars.heads);
  f.q_m = ad::classify_multiclass(f.x_f, vars.heads);
  f.x_int = ad::kinematic_features(f.x_f, vars.intention).x_int;
  f.q_int = ad::intention_logits(f.x_int, vars.intention);
  const ad::ConfidenceVars conf = ad::confidence_weight(f.x_int, f.q_int, model.prototypes.z);
  f.w_int = conf.w_int;
  f.q_a = conf.q_a;
  f.p_f = ad::fuse_predictions(f.q_m, f.q_a, f.q_l);
  return f;
}

VideoOutputs predict(const Model& model, const Matrix& features) {
  ad::Tape tape;
  const ModelVars vars = bind(tape, model, false);
  const VideoForward f = forward_video(tape, vars, model, features);
  VideoOutputs out;
  out.x_f = f.x_f.value();
  out.x_int = f.x_int.value();
  out.predictions = {f.q_b.value(), f.q_m.value(), f.q_l.value(), f.q_a.value(), f.p_f.value()};
  return out;
}

}  // namespace lasvad
