// SPDX-License-Identifier: Apache-2.0
//
// Image token accounting and dynamic resolution fitting.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lcdoc {

struct TokenBudget {
  std::int64_t max_sequence_tokens = 131072;
  std::int64_t patch_size = 28;
  std::int64_t min_side = 616;
  std::int64_t max_side = 840;

  void validate() const;

  /// Named presets: "cpt-short", "cpt-long", "sft-short", "sft-long"
  /// (patch 28, 128K / 336K), and the same names prefixed "qwen-"
  /// (patch 32, 128K / 256K).
  static TokenBudget preset(const std::string& name);
};

/// Thrown when an example cannot fit even at the smallest allowed side.
/// Callers must drop or re-stage the example; nothing is ever truncated.
class DoesNotFitError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// ceil(width / patch) * ceil(height / patch).
std::int64_t estimate_image_tokens(std::int64_t width_px, std::int64_t height_px,
                                   std::int64_t patch_size);

/// Largest side s (a patch multiple, round-down(min_side) <= s <= max_side)
/// with page_count * (s / patch)^2 + text_tokens <= max_sequence_tokens.
/// Pages are budgeted as squares of side s.
std::int64_t fit_resolution(std::int64_t page_count, std::int64_t text_tokens,
                            const TokenBudget& budget);

struct FittedContext {
  std::int64_t side = 0;
  std::int64_t image_tokens = 0;
  std::int64_t text_tokens = 0;
  std::int64_t total() const { return image_tokens + text_tokens; }
};

/// fit_resolution plus the resulting token total. Text-only contexts
/// (page_count == 0) fit iff text_tokens <= max_sequence_tokens.
FittedContext fit_context(std::int64_t page_count, std::int64_t text_tokens,
                          const TokenBudget& budget);

}  // namespace lcdoc
