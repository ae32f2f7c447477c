// SPDX-License-Identifier: Apache-2.0

#include "lcdoc/tokens.hpp"

#include <fmt/format.h>

namespace lcdoc {

namespace {

constexpr std::int64_t kK = 1024;

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace

void TokenBudget::validate() const {
  if (max_sequence_tokens <= 0 || patch_size <= 0 || min_side <= 0 || max_side <= 0) {
    throw std::invalid_argument("token budget values must be positive");
  }
  if (min_side > max_side) {
    throw std::invalid_argument(
        fmt::format("token budget min_side {} > max_side {}", min_side, max_side));
  }
}

TokenBudget TokenBudget::preset(const std::string& name) {
  if (name == "cpt-short") return {128 * kK, 28, 616, 840};
  if (name == "cpt-long") return {336 * kK, 28, 616, 840};
  if (name == "sft-short") return {128 * kK, 28, 728, 1400};
  if (name == "sft-long") return {336 * kK, 28, 728, 1400};
  if (name == "qwen-cpt-short") return {128 * kK, 32, 616, 840};
  if (name == "qwen-cpt-long") return {256 * kK, 32, 616, 840};
  if (name == "qwen-sft-short") return {128 * kK, 32, 728, 1400};
  if (name == "qwen-sft-long") return {256 * kK, 32, 728, 1400};
  throw std::invalid_argument(fmt::format("unknown token budget preset '{}'", name));
}

std::int64_t estimate_image_tokens(std::int64_t width_px, std::int64_t height_px,
                                   std::int64_t patch_size) {
  if (width_px <= 0 || height_px <= 0 || patch_size <= 0) {
    throw std::invalid_argument(fmt::format(
        "estimate_image_tokens needs positive inputs (got {}x{}, patch {})", width_px, height_px,
        patch_size));
  }
  return ceil_div(width_px, patch_size) * ceil_div(height_px, patch_size);
}

std::int64_t fit_resolution(std::int64_t page_count, std::int64_t text_tokens,
                            const TokenBudget& budget) {
  budget.validate();
  if (page_count < 1) throw std::invalid_argument("fit_resolution needs page_count >= 1");
  if (text_tokens < 0) throw std::invalid_argument("text token estimate must be >= 0");

  const std::int64_t min_units = budget.min_side / budget.patch_size;
  const std::int64_t max_units = budget.max_side / budget.patch_size;
  for (std::int64_t units = max_units; units >= min_units && units > 0; --units) {
    if (page_count * units * units + text_tokens <= budget.max_sequence_tokens) {
      return units * budget.patch_size;
    }
  }
  throw DoesNotFitError(fmt::format(
      "example does not fit: {} pages at side {} plus {} text tokens exceeds {} tokens",
      page_count, min_units * budget.patch_size, text_tokens, budget.max_sequence_tokens));
}

FittedContext fit_context(std::int64_t page_count, std::int64_t text_tokens,
                          const TokenBudget& budget) {
  FittedContext out;
  out.text_tokens = text_tokens;
  if (page_count == 0) {
    if (text_tokens > budget.max_sequence_tokens) {
      throw DoesNotFitError(fmt::format("text-only example of {} tokens exceeds {}", text_tokens,
                                        budget.max_sequence_tokens));
    }
    return out;
  }
  out.side = fit_resolution(page_count, text_tokens, budget);
  const std::int64_t units = out.side / budget.patch_size;
  out.image_tokens = page_count * units * units;
  return out;
}

}  // namespace lcdoc
