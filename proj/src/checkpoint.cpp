#include "lasvad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "lasvad/error.hpp"

namespace lasvad {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'L', 'A', 'S', 'C'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f64(std::string& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw TruncationError("checkpoint: unexpected end of file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void put_tensor(std::string& out, const std::string& name, const Matrix& m) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
  }
}

}  // namespace

void save_checkpoint(const fs::path& path, const TrainState& state) {
  const Model& model = state.model;
  json meta;
  meta["config"] = state.config.to_map();
  meta["epoch"] = state.epoch;
  meta["optimizer_step"] = state.optimizer.step;
  meta["category_names"] = state.category_names;
  meta["shape"] = {{"dim", model.shape.dim},
                   {"num_categories", model.shape.num_categories},
                   {"head_count", model.shape.head_count},
                   {"window_length", model.shape.window_length},
                   {"window_stride", model.shape.window_stride},
                   {"ff_dim", model.shape.ff_dim},
                   {"intent_hidden", model.shape.intent_hidden},
                   {"temp_sim", model.shape.temp_sim}};
  meta["prototypes"] = {{"alpha", model.prototypes.alpha}, {"beta", model.prototypes.beta}};

  std::vector<std::pair<std::string, const Matrix*>> tensors;
  model.for_each_parameter([&](const std::string& n, const Matrix& m) { tensors.emplace_back("param." + n, &m); });
  std::size_t i = 0;
  model.for_each_parameter([&](const std::string& n, const Matrix&) {
    if (i < state.optimizer.m.size()) {
      tensors.emplace_back("adam_m." + n, &state.optimizer.m[i]);
      tensors.emplace_back("adam_v." + n, &state.optimizer.v[i]);
    }
    ++i;
  });
  tensors.emplace_back("prototypes.z", &model.prototypes.z);
  tensors.emplace_back("text", &model.text);

  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  const std::string meta_text = meta.dump();
  put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
  out += meta_text;
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) put_tensor(out, name, *m);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing checkpoint " + path.string());
}

TrainState load_checkpoint(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  }
  Reader in(bytes);
  in.str(4);
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }

  json meta;
  try {
    meta = json::parse(in.str(in.u32()));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": corrupt checkpoint metadata: " + e.what());
  }

  std::map<std::string, Matrix> tensors;
  const std::uint32_t count = in.u32();
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name = in.str(in.u32());
    const std::uint32_t rows = in.u32();
    const std::uint32_t cols = in.u32();
    Matrix m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = in.f64();
    }
    tensors.emplace(name, std::move(m));
  }
  if (!in.done()) throw FormatError(path.string() + ": trailing bytes after checkpoint");

  auto take = [&](const std::string& name) -> Matrix {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError(path.string() + ": missing tensor " + name);
    return it->second;
  };

  TrainState state;
  try {
    state.config = TrainConfig::from_map(meta.at("config").get<std::map<std::string, std::string>>());
    state.epoch = meta.at("epoch").get<int>();
    state.optimizer.step = meta.at("optimizer_step").get<std::int64_t>();
    state.category_names = meta.at("category_names").get<std::vector<std::string>>();
    const json& s = meta.at("shape");
    ModelShape& shape = state.model.shape;
    shape.dim = s.at("dim").get<Index>();
    shape.num_categories = s.at("num_categories").get<int>();
    shape.head_count = s.at("head_count").get<int>();
    shape.window_length = s.at("window_length").get<int>();
    shape.window_stride = s.at("window_stride").get<int>();
    shape.ff_dim = s.at("ff_dim").get<Index>();
    shape.intent_hidden = s.at("intent_hidden").get<Index>();
    shape.temp_sim = s.at("temp_sim").get<double>();
    state.model.prototypes.alpha = meta.at("prototypes").at("alpha").get<double>();
    state.model.prototypes.beta = meta.at("prototypes").at("beta").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": incomplete checkpoint metadata: " + e.what());
  }

  Model& model = state.model;
  model.for_each_parameter([&](const std::string& n, Matrix& m) { m = take("param." + n); });
  if (tensors.count("adam_m.backbone.wq") != 0) {
    model.for_each_parameter([&](const std::string& n, Matrix&) {
      state.optimizer.m.push_back(take("adam_m." + n));
      state.optimizer.v.push_back(take("adam_v." + n));
    });
  }
  model.prototypes.z = take("prototypes.z");
  model.text = take("text");
  model.backbone.window_length = model.shape.window_length;
  model.backbone.window_stride = model.shape.window_stride;
  model.backbone.head_count = model.shape.head_count;
  model.heads.temp_sim = model.shape.temp_sim;
  if (model.backbone.dim() != model.shape.dim || model.text.rows() != model.shape.num_classes()) {
    throw FormatError(path.string() + ": tensor shapes disagree with recorded model shape");
  }
  return state;
}

}  // namespace lasvad
