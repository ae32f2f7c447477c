// SPDX-License-Identifier: Apache-2.0
//
// Small helpers shared by every pipeline stage: seeded randomness, stable
// hashing, JSONL I/O and text utilities.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace lcdoc {

using json = nlohmann::json;

/// Seeded generator with platform-independent draws.
///
/// std::uniform_int_distribution and std::shuffle are implementation
/// defined, so pipelines that must be byte-reproducible go through here.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform integer in [lo, hi] (inclusive).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n);

  /// Uniform real in [0, 1).
  double uniform01();

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[index(i)]);
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    shuffle(std::span<T>(values));
  }

  /// k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
  std::mt19937_64 engine_;
};

std::uint64_t fnv1a64(std::string_view data);

/// Mixes a base seed with a label into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

/// 16 lowercase hex digits of fnv1a64; used for short deterministic tags.
std::string short_hash(std::string_view data);

std::string sha256_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Calls `fn(line_number, record)` for each non-blank line (1-based numbers).
/// Malformed JSON throws std::runtime_error naming the file and line.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn);

/// One compact JSON object per line, keys sorted.
std::string to_jsonl(const std::vector<json>& records);

/// Heuristic text token count: ceil(utf8 bytes / 4).
std::int64_t estimate_text_tokens(std::string_view text);

std::vector<std::string> split_words(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string trim(std::string_view text);
std::string to_lower_ascii(std::string_view text);
bool starts_with_icase(std::string_view text, std::string_view prefix);

/// Splits on newlines, trims, drops empty lines and leading list markers
/// such as "1.", "2)", "-", "*".
std::vector<std::string> parse_list_lines(std::string_view text);

/// First (optionally signed, optionally fractional) number in `text`.
std::optional<double> first_number(std::string_view text);

}  // namespace lcdoc
