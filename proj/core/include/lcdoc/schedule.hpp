// SPDX-License-Identifier: Apache-2.0
//
// Stage splitting, curriculum ordering, order-preserving sequence packing
// and page-index injection.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcdoc/message.hpp"

namespace lcdoc {

struct ScheduleItem {
  std::string example_id;
  std::int64_t page_count = 0;
  std::int64_t token_estimate = 0;
  std::int64_t assistant_tokens = 0;
  std::string task_kind;

  static ScheduleItem from_example(const TrainingExample& ex);
};

json to_json(const ScheduleItem& item);
ScheduleItem schedule_item_from_json(const json& j);

inline constexpr std::int64_t kPseudoPageTokens = 1024;

/// Page count used for length bucketing. Text-only items count one
/// pseudo-page per 1024 tokens (rounded up).
std::int64_t curriculum_pages(const ScheduleItem& item);

struct StagePlan {
  Stage stage = Stage::short_stage;
  std::int64_t max_pages = kShortStageMaxPages;
  std::int64_t pack_budget_tokens = 131072;

  /// family "mistral": 128K short / 336K long; "qwen": 128K / 256K.
  static StagePlan defaults(Stage stage, const std::string& family = "mistral");
};

struct StageSplit {
  std::vector<ScheduleItem> short_items;
  std::vector<ScheduleItem> long_items;
  std::vector<ScheduleItem> dropped;
};

/// <= 104 pages short, 105..336 long, beyond that dropped with a warning.
StageSplit split_stages(const std::vector<ScheduleItem>& items);

enum class CurriculumKind { none, length, length_difficulty };

std::string to_string(CurriculumKind kind);
CurriculumKind curriculum_kind_from_string(const std::string& s);

struct CurriculumConfig {
  CurriculumKind kind = CurriculumKind::none;
  std::int64_t bucket_width = 16;
  double mix_fraction = 0.1;  // length_difficulty only
  std::uint64_t seed = 0;
};

/// Rank of a task in the difficulty curriculum; throws on unknown kinds.
int task_difficulty_rank(const std::string& task_kind);

std::vector<ScheduleItem> order_curriculum(std::vector<ScheduleItem> items,
                                           const CurriculumConfig& config);

struct PackedSequence {
  std::string pack_id;
  std::vector<std::string> example_ids;
  std::int64_t total_tokens = 0;
  std::int64_t assistant_tokens = 0;
  std::int64_t budget = 0;
  std::optional<Stage> stage;
};

json to_json(const PackedSequence& pack);

/// Greedy, order-preserving. Throws DoesNotFitError naming the first
/// example whose estimate exceeds the budget; nothing is truncated.
std::vector<PackedSequence> pack_sequences(const std::vector<ScheduleItem>& items,
                                           std::int64_t budget,
                                           std::optional<Stage> stage = std::nullopt);

/// Marker text placed before image i (1-based).
std::string page_index_marker(std::int64_t i);

/// Places "Page {i}:\n" before every image, numbering images across the
/// whole conversation. Existing markers are replaced, so the operation is
/// idempotent. token_estimate is adjusted by the marker text.
TrainingExample inject_page_indices(TrainingExample example);

}  // namespace lcdoc
