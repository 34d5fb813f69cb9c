#pragma once

// LFCKPT1 parameter checkpoints: magic "LFCKPT1", then per parameter
// u32 name length, UTF-8 name, u32 rank, u32 dims, f64 values (all LE).

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lexfusion/binary_io.hpp"
#include "lexfusion/tape.hpp"

namespace lexfusion {

struct NamedTensor {
  std::string name;
  Tensor value;
};

void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter* const> params);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Loads values into existing parameters by name. Every parameter must be
/// present with a matching shape; extra entries in the file are an error.
void restore_checkpoint(const std::filesystem::path& path, std::span<Parameter* const> params);

}  // namespace lexfusion
