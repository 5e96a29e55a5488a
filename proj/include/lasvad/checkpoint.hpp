#pragma once

// Self-describing training state on disk.
//
// Layout (little-endian): "LASC", u32 version, u32 n, n bytes of JSON metadata
// (config, model shape, epoch, optimizer step, category names), u32 tensor
// count, then per tensor: u32 name length, name, u32 rows, u32 cols and
// rows*cols binary64 values in row-major order.

#include <filesystem>
#include <string>
#include <vector>

#include "lasvad/config.hpp"
#include "lasvad/model.hpp"
#include "lasvad/optimizer.hpp"

namespace lasvad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainState {
  TrainConfig config;
  Model model;
  AdamWState optimizer;
  int epoch = 0;  // completed epochs
  std::vector<std::string> category_names;
};

void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace lasvad
