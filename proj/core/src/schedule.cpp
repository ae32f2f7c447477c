// SPDX-License-Identifier: Apache-2.0

#include "lcdoc/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <regex>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "lcdoc/tokens.hpp"

namespace lcdoc {

ScheduleItem ScheduleItem::from_example(const TrainingExample& ex) {
  return ScheduleItem{ex.example_id, ex.page_count(), ex.token_estimate, ex.assistant_tokens,
                      ex.task_kind};
}

json to_json(const ScheduleItem& item) {
  return json{{"example_id", item.example_id},
              {"page_count", item.page_count},
              {"token_estimate", item.token_estimate},
              {"assistant_tokens", item.assistant_tokens},
              {"task_kind", item.task_kind}};
}

ScheduleItem schedule_item_from_json(const json& j) {
  ScheduleItem item;
  item.example_id = j.at("example_id").get<std::string>();
  item.page_count = j.at("page_count").get<std::int64_t>();
  item.token_estimate = j.at("token_estimate").get<std::int64_t>();
  item.assistant_tokens = j.value("assistant_tokens", std::int64_t{0});
  item.task_kind = j.value("task_kind", "");
  return item;
}

std::int64_t curriculum_pages(const ScheduleItem& item) {
  if (item.page_count > 0) return item.page_count;
  return (item.token_estimate + kPseudoPageTokens - 1) / kPseudoPageTokens;
}

StagePlan StagePlan::defaults(Stage stage, const std::string& family) {
  if (family != "mistral" && family != "qwen") {
    throw std::invalid_argument(fmt::format("unknown model family '{}'", family));
  }
  if (stage == Stage::short_stage) return StagePlan{stage, kShortStageMaxPages, 131072};
  return StagePlan{stage, kLongStageMaxPages, family == "qwen" ? 262144 : 344064};
}

StageSplit split_stages(const std::vector<ScheduleItem>& items) {
  StageSplit out;
  for (const auto& item : items) {
    const auto stage = stage_for_pages(item.page_count);
    if (!stage) {
      spdlog::warn("dropping {}: {} pages exceeds the long stage limit of {}", item.example_id,
                   item.page_count, kLongStageMaxPages);
      out.dropped.push_back(item);
    } else if (*stage == Stage::short_stage) {
      out.short_items.push_back(item);
    } else {
      out.long_items.push_back(item);
    }
  }
  return out;
}

std::string to_string(CurriculumKind kind) {
  switch (kind) {
    case CurriculumKind::none: return "none";
    case CurriculumKind::length: return "length";
    case CurriculumKind::length_difficulty: return "length-difficulty";
  }
  return "none";
}

CurriculumKind curriculum_kind_from_string(const std::string& s) {
  if (s == "none") return CurriculumKind::none;
  if (s == "length") return CurriculumKind::length;
  if (s == "length-difficulty" || s == "length_difficulty") return CurriculumKind::length_difficulty;
  throw std::invalid_argument(fmt::format("unknown curriculum '{}'", s));
}

int task_difficulty_rank(const std::string& task_kind) {
  static const std::map<std::string, int> ranks{{"lc_text", 0},
                                                {"fim", 1},
                                                {"unshuffle", 2},
                                                {"retrieval_key", 3},
                                                {"retrieval_position", 3},
                                                {"counting", 4}};
  auto it = ranks.find(task_kind);
  if (it == ranks.end()) {
    throw std::invalid_argument(
        fmt::format("task kind '{}' has no place in the difficulty curriculum", task_kind));
  }
  return it->second;
}

namespace {

void length_order(std::vector<ScheduleItem>& items, std::int64_t width, Rng& rng) {
  std::map<std::int64_t, std::vector<ScheduleItem>> buckets;
  for (auto& item : items) buckets[curriculum_pages(item) / width].push_back(std::move(item));
  items.clear();
  for (auto& [_, bucket] : buckets) {
    rng.shuffle(bucket);
    for (auto& item : bucket) items.push_back(std::move(item));
  }
}

}  // namespace

std::vector<ScheduleItem> order_curriculum(std::vector<ScheduleItem> items,
                                           const CurriculumConfig& config) {
  if (config.bucket_width < 1) throw std::invalid_argument("bucket width must be >= 1");
  if (!(config.mix_fraction >= 0.0 && config.mix_fraction <= 1.0)) {
    throw std::invalid_argument(
        fmt::format("mix fraction must lie in [0, 1], got {}", config.mix_fraction));
  }
  Rng rng(config.seed);
  switch (config.kind) {
    case CurriculumKind::none:
      rng.shuffle(items);
      return items;
    case CurriculumKind::length:
      length_order(items, config.bucket_width, rng);
      return items;
    case CurriculumKind::length_difficulty: {
      std::map<int, std::vector<ScheduleItem>> by_task;
      for (auto& item : items) by_task[task_difficulty_rank(item.task_kind)].push_back(item);
      std::vector<ScheduleItem> ordered;
      for (auto& [_, group] : by_task) {
        length_order(group, config.bucket_width, rng);
        for (auto& item : group) ordered.push_back(std::move(item));
      }
      const auto n = ordered.size();
      const auto k = static_cast<std::size_t>(std::llround(config.mix_fraction * static_cast<double>(n)));
      if (k == 0) return ordered;
      auto picks = rng.sample_without_replacement(n, k);
      std::vector<bool> picked(n, false);
      for (auto i : picks) picked[i] = true;
      std::vector<ScheduleItem> rest;
      for (std::size_t i = 0; i < n; ++i) {
        if (!picked[i]) rest.push_back(ordered[i]);
      }
      for (auto i : picks) {
        const auto pos = rng.index(rest.size() + 1);
        rest.insert(rest.begin() + static_cast<std::ptrdiff_t>(pos), ordered[i]);
      }
      return rest;
    }
  }
  return items;
}

json to_json(const PackedSequence& p) {
  json j{{"pack_id", p.pack_id},
         {"example_ids", p.example_ids},
         {"total_tokens", p.total_tokens},
         {"assistant_tokens", p.assistant_tokens},
         {"budget", p.budget}};
  j["stage"] = p.stage ? json(to_string(*p.stage)) : json(nullptr);
  return j;
}

std::vector<PackedSequence> pack_sequences(const std::vector<ScheduleItem>& items,
                                           std::int64_t budget, std::optional<Stage> stage) {
  if (budget <= 0) throw std::invalid_argument("pack budget must be positive");
  for (const auto& item : items) {
    if (item.token_estimate < 0) {
      throw std::invalid_argument(
          fmt::format("example {} has a negative token estimate", item.example_id));
    }
    if (item.token_estimate > budget) {
      throw DoesNotFitError(fmt::format("example {} needs {} tokens, over the pack budget of {}",
                                        item.example_id, item.token_estimate, budget));
    }
  }
  const std::string prefix = stage ? to_string(*stage) : "pack";
  std::vector<PackedSequence> packs;
  auto open = [&] {
    PackedSequence p;
    p.pack_id = fmt::format("{}-{:06d}", prefix, packs.size());
    p.budget = budget;
    p.stage = stage;
    packs.push_back(std::move(p));
  };
  for (const auto& item : items) {
    if (packs.empty() || packs.back().total_tokens + item.token_estimate > budget) open();
    auto& p = packs.back();
    p.example_ids.push_back(item.example_id);
    p.total_tokens += item.token_estimate;
    p.assistant_tokens += item.assistant_tokens;
  }
  return packs;
}

std::string page_index_marker(std::int64_t i) { return fmt::format("Page {}:\n", i); }

TrainingExample inject_page_indices(TrainingExample example) {
  static const std::regex marker_re(R"(Page [0-9]+:\n)");
  std::int64_t removed = 0;
  std::int64_t added = 0;
  std::int64_t page = 0;
  for (auto& message : example.messages) {
    std::vector<ContentItem> out;
    const auto& items = message.content;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& item = items[i];
      if (item.is_text() && i + 1 < items.size() && items[i + 1].is_image() &&
          std::regex_match(item.text, marker_re)) {
        removed += estimate_text_tokens(item.text);
        continue;
      }
      if (item.is_image()) {
        auto marker = page_index_marker(++page);
        added += estimate_text_tokens(marker);
        out.push_back(ContentItem::make_text(std::move(marker)));
      }
      out.push_back(item);
    }
    message.content = std::move(out);
  }
  example.token_estimate += added - removed;
  return example;
}

}  // namespace lcdoc
