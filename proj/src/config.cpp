#include "lasvad/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <variant>

#include "lasvad/error.hpp"

namespace lasvad {

namespace fs = std::filesystem;

namespace {

using Field = std::variant<double TrainConfig::*, int TrainConfig::*, std::uint64_t TrainConfig::*, bool TrainConfig::*>;

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"learning_rate", &TrainConfig::learning_rate},
      {"batch_size", &TrainConfig::batch_size},
      {"epochs", &TrainConfig::epochs},
      {"lambda", &TrainConfig::lambda},
      {"lambda_cst", &TrainConfig::lambda_cst},
      {"eta", &TrainConfig::eta},
      {"tau", &TrainConfig::tau},
      {"beta", &TrainConfig::beta},
      {"alpha", &TrainConfig::alpha},
      {"M", &TrainConfig::M},
      {"temp_sim", &TrainConfig::temp_sim},
      {"window_length", &TrainConfig::window_length},
      {"window_stride", &TrainConfig::window_stride},
      {"head_count", &TrainConfig::head_count},
      {"nms_iou", &TrainConfig::nms_iou},
      {"theta_v", &TrainConfig::theta_v},
      {"theta_s", &TrainConfig::theta_s},
      {"max_frames", &TrainConfig::max_frames},
      {"seed", &TrainConfig::seed},
      {"weight_decay", &TrainConfig::weight_decay},
      {"acc_warmup_epochs", &TrainConfig::acc_warmup_epochs},
      {"cst_temperature", &TrainConfig::cst_temperature},
      {"soft_pseudo_labels", &TrainConfig::soft_pseudo_labels},
      {"merge_gap", &TrainConfig::merge_gap},
      {"margin_ratio", &TrainConfig::margin_ratio},
      {"ff_dim", &TrainConfig::ff_dim},
      {"intent_hidden", &TrainConfig::intent_hidden},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

std::string format_double(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

void require_unit(const char* name, double v, bool closed) {
  const bool ok = closed ? (v >= 0.0 && v <= 1.0) : (v > 0.0 && v < 1.0);
  if (!ok) throw ConfigError(std::string("config: ") + name + " must lie in " + (closed ? "[0,1]" : "(0,1)"));
}

}  // namespace

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [k, f] : fields()) out.push_back(k);
    return out;
  }();
  return names;
}

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  const auto& table = fields();
  const auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == key; });
  if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(this->*member)>;
        if constexpr (std::is_same_v<T, double>) {
          this->*member = parse_double(key, value);
        } else if constexpr (std::is_same_v<T, bool>) {
          this->*member = parse_bool(key, value);
        } else {
          this->*member = parse_int<T>(key, value);
        }
      },
      it->second);
}

std::string TrainConfig::get(const std::string& key) const {
  const auto& table = fields();
  const auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == key; });
  if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
  return std::visit(
      [&](auto member) -> std::string {
        using T = std::remove_cvref_t<decltype(this->*member)>;
        if constexpr (std::is_same_v<T, double>) {
          return format_double(this->*member);
        } else if constexpr (std::is_same_v<T, bool>) {
          return this->*member ? "true" : "false";
        } else {
          return std::to_string(this->*member);
        }
      },
      it->second);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("config: learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("config: batch_size must be positive");
  if (epochs < 0) throw ConfigError("config: epochs must be >= 0");
  if (lambda < 0.0 || lambda_cst < 0.0) throw ConfigError("config: loss weights must be >= 0");
  if (eta < 0.0) throw ConfigError("config: eta must be >= 0");
  require_unit("tau", tau, false);
  require_unit("theta_v", theta_v, false);
  require_unit("theta_s", theta_s, false);
  require_unit("nms_iou", nms_iou, false);
  require_unit("alpha", alpha, false);
  require_unit("beta", beta, true);
  if (M < 1) throw ConfigError("config: M must be >= 1");
  if (!(temp_sim > 0.0) || !(cst_temperature > 0.0)) throw ConfigError("config: temperatures must be positive");
  if (window_length < 2) throw ConfigError("config: window_length must be >= 2");
  if (window_stride < 0 || window_stride > window_length) {
    throw ConfigError("config: window_stride must be in [0, window_length]");
  }
  if (head_count < 1) throw ConfigError("config: head_count must be >= 1");
  if (max_frames < 1) throw ConfigError("config: max_frames must be >= 1");
  if (weight_decay < 0.0) throw ConfigError("config: weight_decay must be >= 0");
  if (acc_warmup_epochs < 0) throw ConfigError("config: acc_warmup_epochs must be >= 0");
  if (merge_gap < 0) throw ConfigError("config: merge_gap must be >= 0");
  if (!(margin_ratio > 0.0)) throw ConfigError("config: margin_ratio must be positive");
  if (ff_dim < 0 || intent_hidden < 0) throw ConfigError("config: layer widths must be >= 0");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  std::map<std::string, std::string> out;
  for (const auto& k : keys()) out[k] = get(k);
  return out;
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& values) {
  TrainConfig c;
  for (const auto& [k, v] : values) c.set(k, v);
  return c;
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(path.string() + ":" + std::to_string(number) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

TrainConfig load_train_config(const fs::path& path) {
  TrainConfig c = TrainConfig::from_map(read_key_values(path));
  c.validate();
  return c;
}

SynthConfig synth_config_from_map(const std::map<std::string, std::string>& values) {
  SynthConfig c;
  for (const auto& [k, v] : values) {
    if (k == "n_videos") {
      c.n_videos = parse_int<int>(k, v);
    } else if (k == "C" || k == "num_categories") {
      c.num_categories = parse_int<int>(k, v);
    } else if (k == "D" || k == "dim") {
      c.dim = parse_int<int>(k, v);
    } else if (k == "T_min") {
      c.t_min = parse_int<int>(k, v);
    } else if (k == "T_max") {
      c.t_max = parse_int<int>(k, v);
    } else if (k == "anomaly_ratio") {
      c.anomaly_ratio = parse_double(k, v);
    } else if (k == "snr") {
      c.snr = parse_double(k, v);
    } else if (k == "seed") {
      c.seed = parse_int<std::uint64_t>(k, v);
    } else {
      throw ConfigError("synth config: unknown key '" + k + "'");
    }
  }
  c.validate();
  return c;
}

SynthConfig load_synth_config(const fs::path& path) { return synth_config_from_map(read_key_values(path)); }

}  // namespace lasvad
