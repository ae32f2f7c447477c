// SPDX-License-Identifier: Apache-2.0
//
// Multimodal conversation types shared by the generation client and every
// example builder.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcdoc/util.hpp"

namespace lcdoc {

enum class Role { system, user, assistant };

std::string to_string(Role role);
Role role_from_string(const std::string& s);

/// One element of a message body: either text or a page image.
struct ContentItem {
  enum class Kind { text, image };

  Kind kind = Kind::text;
  std::string text;       // kind == text
  std::string image_ref;  // kind == image
  std::string page_id;    // optional provenance for images

  static ContentItem make_text(std::string t) {
    return ContentItem{Kind::text, std::move(t), {}, {}};
  }
  static ContentItem make_image(std::string ref, std::string page = {}) {
    return ContentItem{Kind::image, {}, std::move(ref), std::move(page)};
  }

  bool is_text() const { return kind == Kind::text; }
  bool is_image() const { return kind == Kind::image; }

  bool operator==(const ContentItem&) const = default;
};

struct Message {
  Role role = Role::user;
  std::vector<ContentItem> content;

  static Message text(Role role, std::string t) {
    return Message{role, {ContentItem::make_text(std::move(t))}};
  }

  /// Concatenation of the text items, joined by newlines.
  std::string joined_text() const;
  std::size_t image_count() const;

  bool operator==(const Message&) const = default;
};

/// A page as referenced from an example, independent of the corpus.
struct PageRef {
  std::string page_id;
  std::string doc_id;
  std::int64_t index = 0;
  std::string image_ref;

  bool operator==(const PageRef&) const = default;
};

enum class Stage { short_stage, long_stage };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& s);

/// Stage for an example with `page_count` pages; nullopt when it exceeds
/// the long stage.
std::optional<Stage> stage_for_pages(std::int64_t page_count);

inline constexpr std::int64_t kShortStageMaxPages = 104;
inline constexpr std::int64_t kLongStageMaxPages = 336;

/// A multimodal training conversation with provenance.
struct TrainingExample {
  std::string example_id;
  std::string pipeline;
  std::string task_kind;  // CPT task name, "lc_text", or "sft"
  std::vector<Message> messages;
  std::vector<PageRef> page_refs;
  std::vector<bool> origin_marks;  // parallel to page_refs; true = question page
  std::int64_t token_estimate = 0;
  std::int64_t assistant_tokens = 0;
  std::optional<Stage> stage;
  std::optional<std::uint64_t> seed;
  std::optional<json> trace;

  std::int64_t page_count() const;
};

json to_json(const ContentItem& item);
ContentItem content_item_from_json(const json& j);
json to_json(const Message& message);
Message message_from_json(const json& j);
json to_json(const PageRef& ref);
PageRef page_ref_from_json(const json& j);
json to_json(const TrainingExample& example);
TrainingExample training_example_from_json(const json& j);

std::vector<TrainingExample> load_training_examples(const std::filesystem::path& path);
std::string training_examples_to_jsonl(const std::vector<TrainingExample>& examples);

/// Token estimate of the assistant turns.
std::int64_t count_assistant_tokens(const std::vector<Message>& messages);

}  // namespace lcdoc
