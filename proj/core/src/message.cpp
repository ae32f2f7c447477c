// SPDX-License-Identifier: Apache-2.0

#include "lcdoc/message.hpp"

#include <stdexcept>

#include <fmt/format.h>

namespace lcdoc {

std::string to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(const std::string& s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw std::invalid_argument(fmt::format("unknown role '{}'", s));
}

std::string Message::joined_text() const {
  std::string out;
  for (const auto& item : content) {
    if (!item.is_text()) continue;
    if (!out.empty()) out += '\n';
    out += item.text;
  }
  return out;
}

std::size_t Message::image_count() const {
  std::size_t n = 0;
  for (const auto& item : content) n += item.is_image() ? 1 : 0;
  return n;
}

std::string to_string(Stage stage) {
  return stage == Stage::short_stage ? "short" : "long";
}

Stage stage_from_string(const std::string& s) {
  if (s == "short") return Stage::short_stage;
  if (s == "long") return Stage::long_stage;
  throw std::invalid_argument(fmt::format("unknown stage '{}'", s));
}

std::optional<Stage> stage_for_pages(std::int64_t page_count) {
  if (page_count <= kShortStageMaxPages) return Stage::short_stage;
  if (page_count <= kLongStageMaxPages) return Stage::long_stage;
  return std::nullopt;
}

std::int64_t TrainingExample::page_count() const {
  std::int64_t n = 0;
  for (const auto& m : messages) n += static_cast<std::int64_t>(m.image_count());
  return n;
}

json to_json(const ContentItem& item) {
  if (item.is_text()) {
    return json{{"type", "text"}, {"text", item.text}};
  }
  json j{{"type", "image"}, {"image_ref", item.image_ref}};
  if (!item.page_id.empty()) j["page_id"] = item.page_id;
  return j;
}

ContentItem content_item_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "text") return ContentItem::make_text(j.at("text").get<std::string>());
  if (type == "image") {
    return ContentItem::make_image(j.at("image_ref").get<std::string>(),
                                   j.value("page_id", std::string{}));
  }
  throw std::invalid_argument(fmt::format("unknown content type '{}'", type));
}

json to_json(const Message& message) {
  json content = json::array();
  for (const auto& item : message.content) content.push_back(to_json(item));
  return json{{"role", to_string(message.role)}, {"content", content}};
}

Message message_from_json(const json& j) {
  Message m;
  m.role = role_from_string(j.at("role").get<std::string>());
  for (const auto& item : j.at("content")) m.content.push_back(content_item_from_json(item));
  return m;
}

json to_json(const PageRef& ref) {
  return json{{"page_id", ref.page_id},
              {"doc_id", ref.doc_id},
              {"index", ref.index},
              {"image_ref", ref.image_ref}};
}

PageRef page_ref_from_json(const json& j) {
  return PageRef{j.at("page_id").get<std::string>(), j.at("doc_id").get<std::string>(),
                 j.at("index").get<std::int64_t>(), j.at("image_ref").get<std::string>()};
}

json to_json(const TrainingExample& example) {
  json messages = json::array();
  for (const auto& m : example.messages) messages.push_back(to_json(m));
  json refs = json::array();
  json marks = json::array();
  for (std::size_t i = 0; i < example.page_refs.size(); ++i) {
    refs.push_back(to_json(example.page_refs[i]));
    const bool origin = i < example.origin_marks.size() && example.origin_marks[i];
    marks.push_back(origin ? "question" : "filler");
  }
  json j{{"example_id", example.example_id},
         {"pipeline", example.pipeline},
         {"task_kind", example.task_kind},
         {"messages", messages},
         {"page_refs", refs},
         {"origin_marks", marks},
         {"page_count", example.page_count()},
         {"token_estimate", example.token_estimate},
         {"assistant_tokens", example.assistant_tokens}};
  j["stage"] = example.stage ? json(to_string(*example.stage)) : json(nullptr);
  if (example.seed) j["seed"] = *example.seed;
  if (example.trace) j["trace"] = *example.trace;
  return j;
}

TrainingExample training_example_from_json(const json& j) {
  TrainingExample ex;
  ex.example_id = j.at("example_id").get<std::string>();
  ex.pipeline = j.value("pipeline", std::string{});
  ex.task_kind = j.value("task_kind", std::string{});
  for (const auto& m : j.at("messages")) ex.messages.push_back(message_from_json(m));
  if (j.contains("page_refs")) {
    for (const auto& r : j.at("page_refs")) ex.page_refs.push_back(page_ref_from_json(r));
  }
  if (j.contains("origin_marks")) {
    for (const auto& m : j.at("origin_marks")) {
      ex.origin_marks.push_back(m.is_boolean() ? m.get<bool>() : m.get<std::string>() == "question");
    }
  }
  ex.token_estimate = j.value("token_estimate", std::int64_t{0});
  ex.assistant_tokens = j.value("assistant_tokens", std::int64_t{0});
  if (j.contains("stage") && !j.at("stage").is_null()) {
    ex.stage = stage_from_string(j.at("stage").get<std::string>());
  }
  if (j.contains("seed")) ex.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("trace")) ex.trace = j.at("trace");
  return ex;
}

std::vector<TrainingExample> load_training_examples(const std::filesystem::path& path) {
  std::vector<TrainingExample> out;
  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    try {
      out.push_back(training_example_from_json(j));
    } catch (const std::exception& e) {
      throw std::runtime_error(fmt::format("{}:{}: {}", path.string(), line, e.what()));
    }
  });
  return out;
}

std::string training_examples_to_jsonl(const std::vector<TrainingExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += to_json(ex).dump();
    out += '\n';
  }
  return out;
}

std::int64_t count_assistant_tokens(const std::vector<Message>& messages) {
  std::int64_t n = 0;
  for (const auto& m : messages) {
    if (m.role == Role::assistant) n += estimate_text_tokens(m.joined_text());
  }
  return n;
}

}  // namespace lcdoc
