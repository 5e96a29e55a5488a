#include "lasvad/data_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "lasvad/error.hpp"

namespace lasvad {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<char, 4> kMagic = {'L', 'A', 'S', 'F'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<unsigned char, 4> b = {static_cast<unsigned char>(v & 0xFFu),
                                          static_cast<unsigned char>((v >> 8) & 0xFFu),
                                          static_cast<unsigned char>((v >> 16) & 0xFFu),
                                          static_cast<unsigned char>((v >> 24) & 0xFFu)};
  out.write(reinterpret_cast<const char*>(b.data()), 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::vector<unsigned char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Matrix read_bank_matrix(const fs::path& path) {
  const FeatureSequence seq = read_feature_file(path);
  return seq.as_double();
}

}  // namespace

TextBankPaths text_bank_paths(const fs::path& prefix) {
  const std::string p = prefix.string();
  return {fs::path(p + ".names.lasf"), fs::path(p + ".attrs.lasf"), fs::path(p + ".labels.txt")};
}

VideoRecord parse_manifest_line(const std::string& line, std::size_t line_number) {
  const std::string where = "manifest line " + std::to_string(line_number);
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(where + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
  VideoRecord rec;
  try {
    rec.video_id = j.at("video_id").get<std::string>();
    rec.feature_path = j.at("feature_path").get<std::string>();
    rec.y = j.at("y").get<int>();
    rec.g = j.at("g").get<int>();
    if (j.contains("instances")) {
      for (const auto& inst : j.at("instances")) {
        if (!inst.is_array() || inst.size() != 3) throw ParseError(where + ": instance must be [start,end,category]");
        rec.instances.push_back({inst[0].get<int>(), inst[1].get<int>(), inst[2].get<int>()});
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  if (rec.y != 0 && rec.y != 1) throw ValidationError(where + ": y must be 0 or 1");
  if (rec.g < 0) throw ValidationError(where + ": g must be non-negative");
  if ((rec.y == 0) != (rec.g == 0)) {
    throw ValidationError(where + ": label inconsistency (y=" + std::to_string(rec.y) +
                          ", g=" + std::to_string(rec.g) + "); y=0 iff g=0");
  }
  for (const auto& inst : rec.instances) {
    if (inst.start < 0 || inst.end < inst.start || inst.category < 1) {
      throw ValidationError(where + ": invalid instance [" + std::to_string(inst.start) + "," +
                            std::to_string(inst.end) + "," + std::to_string(inst.category) + "]");
    }
  }
  return rec;
}

std::vector<VideoRecord> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  std::vector<VideoRecord> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    VideoRecord rec = parse_manifest_line(line, number);
    const fs::path fp(rec.feature_path);
    rec.resolved_path = fp.is_absolute() ? fp : base / fp;
    out.push_back(std::move(rec));
  }
  return out;
}

void write_manifest(const fs::path& path, const std::vector<VideoRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  for (const auto& r : records) {
    json j = {{"video_id", r.video_id}, {"feature_path", r.feature_path}, {"y", r.y}, {"g", r.g}};
    if (!r.instances.empty()) {
      json insts = json::array();
      for (const auto& i : r.instances) insts.push_back({i.start, i.end, i.category});
      j["instances"] = insts;
    }
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

FeatureSequence read_feature_file(const fs::path& path) {
  const std::vector<unsigned char> bytes = slurp(path);
  const std::string where = path.string();
  if (bytes.size() < 16) throw TruncationError(where + ": header shorter than 16 bytes");
  if (std::memcmp(bytes.data(), kMagic.data(), 4) != 0) throw FormatError(where + ": bad magic (expected LASF)");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kLasfVersion) throw FormatError(where + ": unsupported LASF version " + std::to_string(version));
  const std::uint32_t t = get_u32(bytes.data() + 8);
  const std::uint32_t d = get_u32(bytes.data() + 12);
  const std::uint64_t payload = static_cast<std::uint64_t>(t) * d * 4u;
  if (bytes.size() - 16 < payload) {
    throw TruncationError(where + ": payload has " + std::to_string(bytes.size() - 16) + " bytes, header declares " +
                          std::to_string(payload));
  }
  if (bytes.size() - 16 > payload) throw FormatError(where + ": trailing bytes after payload");
  if (t < 1 || d < 3) throw ValidationError(where + ": need T >= 1 and D >= 3");

  FeatureSequence seq;
  seq.video_id = path.stem().string();
  seq.features.resize(t, d);
  const unsigned char* p = bytes.data() + 16;
  float* dst = seq.features.data();
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(t) * d; ++i, p += 4) {
    dst[i] = std::bit_cast<float>(get_u32(p));
    if (!std::isfinite(dst[i])) throw ValidationError(where + ": non-finite value at flat index " + std::to_string(i));
  }
  return seq;
}

void write_feature_file(const fs::path& path, const FloatMatrix& features) {
  if (features.rows() < 1 || features.cols() < 3) throw ValidationError("feature matrix needs T >= 1 and D >= 3");
  if (!features.allFinite()) throw ValidationError("feature matrix contains non-finite values");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic.data(), 4);
  put_u32(out, kLasfVersion);
  put_u32(out, static_cast<std::uint32_t>(features.rows()));
  put_u32(out, static_cast<std::uint32_t>(features.cols()));
  const float* src = features.data();
  for (Index i = 0; i < features.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(src[i]));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_feature_file(const fs::path& path, const FeatureSequence& sequence) {
  write_feature_file(path, sequence.features);
}

FeatureSequence load_video(const VideoRecord& record) {
  FeatureSequence seq = read_feature_file(record.resolved_path.empty() ? fs::path(record.feature_path)
                                                                       : record.resolved_path);
  seq.video_id = record.video_id;
  for (const auto& inst : record.instances) {
    if (inst.end >= seq.frames()) {
      throw ValidationError(record.video_id + ": instance end " + std::to_string(inst.end) + " outside T=" +
                            std::to_string(seq.frames()));
    }
  }
  return seq;
}

TextBank load_text_bank(const fs::path& name_path, const fs::path& attr_path, const fs::path& labels_path) {
  TextBank bank;
  bank.names = read_bank_matrix(name_path);
  bank.attributes = read_bank_matrix(attr_path);
  std::ifstream in(labels_path);
  if (!in) throw IoError("cannot open labels " + labels_path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bank.category_names.push_back(line);
  }
  while (!bank.category_names.empty() && bank.category_names.back().empty()) bank.category_names.pop_back();

  const auto n = bank.names.rows();
  if (bank.attributes.rows() != n || static_cast<Index>(bank.category_names.size()) != n) {
    throw AlignmentError("text bank rows disagree: names " + std::to_string(n) + ", attributes " +
                         std::to_string(bank.attributes.rows()) + ", labels " +
                         std::to_string(bank.category_names.size()));
  }
  if (bank.attributes.cols() != bank.names.cols()) throw AlignmentError("text bank embedding dimensions disagree");
  for (Index r = 0; r < n; ++r) {
    if (bank.names.row(r).squaredNorm() == 0.0) throw ValidationError("zero row " + std::to_string(r) + " in name embeddings");
    if (bank.attributes.row(r).squaredNorm() == 0.0) {
      throw ValidationError("zero row " + std::to_string(r) + " in attribute embeddings");
    }
  }
  return bank;
}

TextBank load_text_bank(const TextBankPaths& paths) { return load_text_bank(paths.names, paths.attributes, paths.labels); }

void write_text_bank(const TextBankPaths& paths, const TextBank& bank) {
  write_feature_file(paths.names, FloatMatrix(bank.names.cast<float>()));
  write_feature_file(paths.attributes, FloatMatrix(bank.attributes.cast<float>()));
  std::ofstream out(paths.labels);
  if (!out) throw IoError("cannot write " + paths.labels.string());
  for (const auto& name : bank.category_names) out << name << '\n';
}

}  // namespace lasvad
