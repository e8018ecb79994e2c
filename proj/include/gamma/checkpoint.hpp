#pragma once

// Checkpoint format:
//
//   "GAMMACKPT1\n"
//   u32 config_len, config text (ModelConfig::to_text())
//   u32 param_count
//   per parameter: u32 name_len, name, u32 rows, u32 cols,
//                  rows*cols little-endian IEEE-754 float32 (row-major)
//
// All integers are little-endian.

#include "gamma/model.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace gammakg {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

std::string serialize_checkpoint(GammaModel& model);
void save_checkpoint(GammaModel& model, const std::filesystem::path& path);

/// Model configuration stored in a checkpoint.
ModelConfig checkpoint_config(const std::string& bytes);

/// Loads weights into `model`; throws ConfigMismatchError when the stored
/// configuration or parameter shapes differ.
void load_checkpoint_into(GammaModel& model, const std::string& bytes);
void load_checkpoint_into(GammaModel& model, const std::filesystem::path& path);

GammaModel model_from_checkpoint(const std::string& bytes);
GammaModel model_from_checkpoint(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

/// Parses `key = value` model lines (the to_text() format).
ModelConfig parse_model_config_text(const std::string& text);

}  // namespace gammakg
