// SPDX-License-Identifier: Apache-2.0
//
// Task-arithmetic merging over named weight maps, with a minimal
// safetensors reader and writer.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lcdoc/util.hpp"

namespace lcdoc {

enum class DType { F16, BF16, F32, F64 };

std::string to_string(DType dtype);
DType dtype_from_string(const std::string& s);
std::size_t dtype_size(DType dtype);

/// Values are held as doubles whatever the storage precision; saving
/// converts back to `dtype`.
struct Tensor {
  DType dtype = DType::F32;
  std::vector<std::int64_t> shape;
  std::vector<double> values;

  std::size_t numel() const;
  bool operator==(const Tensor&) const = default;
};

using WeightMap = std::map<std::string, Tensor>;

/// Elementwise trained - base. Key or shape mismatches throw naming the key.
WeightMap task_vector(const WeightMap& trained, const WeightMap& base);

/// Elementwise target + alpha * vector. alpha == 0 returns target unchanged.
WeightMap apply_task_vector(const WeightMap& target, const WeightMap& vector, double alpha);

WeightMap load_safetensors(const std::filesystem::path& path);
void save_safetensors(const std::filesystem::path& path, const WeightMap& weights,
                      const std::map<std::string, std::string>& metadata = {});

/// Parses a safetensors byte buffer; used by load_safetensors.
WeightMap parse_safetensors(std::string_view bytes);
std::string serialize_safetensors(const WeightMap& weights,
                                  const std::map<std::string, std::string>& metadata = {});

/// Named scaling factors. "default" applies when a recipe names neither an
/// alpha nor a preset.
struct MergePresets {
  std::map<std::string, double> alphas;

  static MergePresets builtin();
  /// JSON object {name: alpha, ...}; must contain "default".
  static MergePresets load(const std::filesystem::path& path);

  double alpha_for(const std::optional<std::string>& preset) const;
};

struct MergeRecipe {
  std::filesystem::path target;
  std::filesystem::path base;
  std::filesystem::path trained;
  std::optional<double> alpha;
  std::optional<std::string> preset;
  std::filesystem::path output_path;

  static MergeRecipe from_json(const json& j, const std::filesystem::path& relative_to = {});
  double resolve_alpha(const MergePresets& presets) const;
};

struct MergeSummary {
  double alpha = 0.0;
  std::size_t tensors = 0;
  std::size_t elements = 0;
};

MergeSummary run_merge(const MergeRecipe& recipe, const MergePresets& presets);

}  // namespace lcdoc
