#pragma once

// On-disk formats: LASF feature matrices, JSON-lines manifests, text banks.
//
// LASF layout: "LASF" magic, then little-endian u32 version (=1), u32 T, u32 D,
// then T*D IEEE-754 binary32 values in row-major order.

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lasvad/autodiff.hpp"

namespace lasvad {

using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::uint32_t kLasfVersion = 1;

struct FeatureSequence {
  std::string video_id;
  FloatMatrix features;  // T x D

  Index frames() const { return features.rows(); }
  Index dim() const { return features.cols(); }
  Matrix as_double() const { return features.cast<double>(); }
};

// Ground-truth temporal instance, inclusive bounds.
struct GroundTruthInstance {
  int start = 0;
  int end = 0;
  int category = 0;

  bool operator==(const GroundTruthInstance&) const = default;
};

struct VideoRecord {
  std::string video_id;
  std::string feature_path;               // as written in the manifest
  std::filesystem::path resolved_path;    // relative paths resolved against the manifest directory
  int y = 0;
  int g = 0;
  std::vector<GroundTruthInstance> instances;
};

struct TextBank {
  Matrix names;       // (C+1) x D
  Matrix attributes;  // (C+1) x D
  std::vector<std::string> category_names;

  int num_categories() const { return static_cast<int>(names.rows()) - 1; }
  Index dim() const { return names.cols(); }
};

struct TextBankPaths {
  std::filesystem::path names;
  std::filesystem::path attributes;
  std::filesystem::path labels;
};

// <prefix>.names.lasf, <prefix>.attrs.lasf, <prefix>.labels.txt
TextBankPaths text_bank_paths(const std::filesystem::path& prefix);

std::vector<VideoRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<VideoRecord>& records);

// Parses one manifest line; line_number is only used in error messages.
VideoRecord parse_manifest_line(const std::string& line, std::size_t line_number);

FeatureSequence read_feature_file(const std::filesystem::path& path);
void write_feature_file(const std::filesystem::path& path, const FloatMatrix& features);
void write_feature_file(const std::filesystem::path& path, const FeatureSequence& sequence);

// Loads the feature matrix of one manifest record and checks the declared instances fit.
FeatureSequence load_video(const VideoRecord& record);

TextBank load_text_bank(const std::filesystem::path& name_path, const std::filesystem::path& attr_path,
                        const std::filesystem::path& labels_path);
TextBank load_text_bank(const TextBankPaths& paths);
void write_text_bank(const TextBankPaths& paths, const TextBank& bank);

}  // namespace lasvad
