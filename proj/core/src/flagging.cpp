// SPDX-License-Identifier: Apache-2.0

#include "lcdoc/flagging.hpp"

#include <algorithm>
#include <regex>
#include <stdexcept>

#include <fmt/format.h>

#include "lcdoc/prompts.hpp"
#include "sft_internal.hpp"

namespace lcdoc {

std::string to_string(AnswerKind k) {
  switch (k) {
    case AnswerKind::value: return "value";
    case AnswerKind::list: return "list";
    case AnswerKind::not_answerable: return "not_answerable";
    case AnswerKind::other: return "other";
  }
  return "other";
}

std::string to_string(ItemStatus s) { return s == ItemStatus::active ? "active" : "removed"; }

std::string to_string(IssueKind k) {
  switch (k) {
    case IssueKind::document_mismatch: return "document_mismatch";
    case IssueKind::underspecified: return "underspecified";
    case IssueKind::typo: return "typo";
    case IssueKind::incorrect_answer: return "incorrect_answer";
    case IssueKind::ok: return "ok";
  }
  return "ok";
}

std::string to_string(DecisionAction a) {
  switch (a) {
    case DecisionAction::keep: return "keep";
    case DecisionAction::modify: return "modify";
    case DecisionAction::remove: return "remove";
  }
  return "keep";
}

AnswerKind answer_kind_from_string(const std::string& s) {
  if (s == "value") return AnswerKind::value;
  if (s == "list") return AnswerKind::list;
  if (s == "not_answerable") return AnswerKind::not_answerable;
  if (s == "other") return AnswerKind::other;
  throw std::invalid_argument(fmt::format("unknown answer kind '{}'", s));
}

ItemStatus item_status_from_string(const std::string& s) {
  if (s == "active") return ItemStatus::active;
  if (s == "removed") return ItemStatus::removed;
  throw std::invalid_argument(fmt::format("unknown item status '{}'", s));
}

IssueKind issue_kind_from_string(const std::string& s) {
  if (s == "document_mismatch") return IssueKind::document_mismatch;
  if (s == "underspecified") return IssueKind::underspecified;
  if (s == "typo") return IssueKind::typo;
  if (s == "incorrect_answer") return IssueKind::incorrect_answer;
  if (s == "ok") return IssueKind::ok;
  throw std::invalid_argument(fmt::format("unknown issue kind '{}'", s));
}

DecisionAction decision_action_from_string(const std::string& s) {
  if (s == "keep") return DecisionAction::keep;
  if (s == "modify") return DecisionAction::modify;
  if (s == "remove") return DecisionAction::remove;
  throw std::invalid_argument(fmt::format("unknown decision action '{}'", s));
}

json to_json(const BenchmarkItem& item) {
  json j{{"item_id", item.item_id},
         {"question", item.question},
         {"gold_answer", item.gold_answer},
         {"accepted_answers", item.accepted_answers},
         {"doc_id", item.doc_id},
         {"answer_kind", to_string(item.answer_kind)},
         {"status", to_string(item.status)}};
  if (item.question_style) j["question_style"] = *item.question_style;
  return j;
}

BenchmarkItem benchmark_item_from_json(const json& j) {
  BenchmarkItem item;
  item.item_id = j.at("item_id").get<std::string>();
  item.question = j.at("question").get<std::string>();
  item.gold_answer = j.at("gold_answer").get<std::string>();
  item.accepted_answers = j.value("accepted_answers", std::vector<std::string>{});
  item.doc_id = j.at("doc_id").get<std::string>();
  item.answer_kind = answer_kind_from_string(j.value("answer_kind", "value"));
  item.status = item_status_from_string(j.value("status", "active"));
  if (j.contains("question_style") && !j.at("question_style").is_null()) {
    item.question_style = j.at("question_style").get<std::string>();
  }
  if (std::find(item.accepted_answers.begin(), item.accepted_answers.end(), item.gold_answer) ==
      item.accepted_answers.end()) {
    item.accepted_answers.insert(item.accepted_answers.begin(), item.gold_answer);
  }
  return item;
}

json to_json(const FlagReport& f) {
  json evidence = json::array();
  for (const auto& e : f.evidence) {
    evidence.push_back({{"page_id", e.page_id}, {"snippet", e.snippet}, {"relevance", e.relevance}});
  }
  return json{{"flag_id", f.flag_id},       {"item_id", f.item_id},
              {"issue_kind", to_string(f.issue_kind)}, {"rationale", f.rationale},
              {"evidence", evidence},       {"created_by", f.created_by}};
}

FlagReport flag_report_from_json(const json& j) {
  FlagReport f;
  f.item_id = j.at("item_id").get<std::string>();
  f.flag_id = j.value("flag_id", "flag-" + f.item_id);
  f.issue_kind = issue_kind_from_string(j.at("issue_kind").get<std::string>());
  f.rationale = j.value("rationale", "");
  f.created_by = j.value("created_by", "");
  for (const auto& e : j.value("evidence", json::array())) {
    f.evidence.push_back(FlagEvidence{e.at("page_id").get<std::string>(), e.value("snippet", ""),
                                      e.value("relevance", 0.0)});
  }
  if (f.issue_kind != IssueKind::ok && trim(f.rationale).empty()) {
    throw std::invalid_argument(fmt::format("flag {} has an issue but no rationale", f.flag_id));
  }
  return f;
}

void Decision::validate() const {
  if (action == DecisionAction::modify) {
    const bool has_q = new_question && !trim(*new_question).empty();
    const bool has_a = new_answer && !trim(*new_answer).empty();
    if (!has_q && !has_a && added_accepted_answers.empty()) {
      throw std::invalid_argument(
          "modify needs a new question, a new answer or added accepted answers");
    }
  }
  if (trim(reviewer).empty()) throw std::invalid_argument("decision needs a reviewer");
}

json to_json(const Decision& d) {
  json j{{"flag_id", d.flag_id},
         {"action", to_string(d.action)},
         {"added_accepted_answers", d.added_accepted_answers},
         {"reviewer", d.reviewer},
         {"timestamp", d.timestamp}};
  j["new_question"] = d.new_question ? json(*d.new_question) : json(nullptr);
  j["new_answer"] = d.new_answer ? json(*d.new_answer) : json(nullptr);
  return j;
}

Decision decision_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("decision must be a JSON object");
  Decision d;
  d.flag_id = j.value("flag_id", "");
  d.action = decision_action_from_string(j.at("action").get<std::string>());
  auto opt = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
  };
  d.new_question = opt("new_question");
  d.new_answer = opt("new_answer");
  if (j.contains("added_accepted_answers") && !j.at("added_accepted_answers").is_null()) {
    d.added_accepted_answers = j.at("added_accepted_answers").get<std::vector<std::string>>();
  }
  d.reviewer = j.value("reviewer", "");
  d.timestamp = j.value("timestamp", "");
  return d;
}

ParsedVerdict parse_flag_verdict(const std::string& reply) {
  static const std::regex issue_re(R"(^\s*issue\s*:\s*(.*?)\s*$)", std::regex::icase);
  static const std::regex rationale_re(R"(^\s*rationale\s*:\s*(.*)$)", std::regex::icase);
  ParsedVerdict out;
  std::optional<IssueKind> issue;
  std::vector<std::string> rationale;
  bool in_rationale = false;
  std::size_t pos = 0;
  while (pos <= reply.size()) {
    auto nl = reply.find('\n', pos);
    if (nl == std::string::npos) nl = reply.size();
    const std::string line = reply.substr(pos, nl - pos);
    pos = nl + 1;
    std::smatch m;
    if (std::regex_search(line, m, issue_re)) {
      in_rationale = false;
      auto kind = to_lower_ascii(m[1].str());
      std::replace_if(kind.begin(), kind.end(), [](char c) { return c == ' ' || c == '-'; }, '_');
      try {
        issue = issue_kind_from_string(kind);
      } catch (const std::invalid_argument&) {
        issue.reset();
      }
    } else if (std::regex_search(line, m, rationale_re)) {
      in_rationale = true;
      rationale.push_back(m[1].str());
    } else if (in_rationale) {
      rationale.push_back(line);
    }
  }
  if (!issue) {
    out.issue = IssueKind::underspecified;
    out.rationale = "verdict unparseable";
    return out;
  }
  out.ok = true;
  out.issue = *issue;
  out.rationale = trim(join(rationale, "\n"));
  if (out.issue != IssueKind::ok && out.rationale.empty()) out.rationale = "no rationale given";
  return out;
}

FlagReport flag_item(const BenchmarkItem& item, const Document& document,
                     ChatClient& extract_client, ChatClient& verdict_client,
                     const FlagConfig& config) {
  if (document.doc_id != item.doc_id) {
    throw std::invalid_argument(fmt::format("item {} refers to document {}, got {}", item.item_id,
                                            item.doc_id, document.doc_id));
  }
  if (document.pages.empty()) {
    throw std::invalid_argument(fmt::format("document {} has no pages", document.doc_id));
  }
  AssembledContext context;
  context.strategy = ContextStrategy::whole_document;
  for (const auto& p : document.pages) {
    context.pages.push_back(p.ref());
    context.origin.push_back(false);
  }
  const auto pages = detail::extract_pages(
      context, fmt::format("flag-extract:{}", item.item_id), config.extract_model,
      prompts().render("flag_extract", {{"question", item.question}, {"answer", item.gold_answer}}),
      extract_client, config.max_in_flight);
  const auto selected = detail::top_k(pages, std::max<std::size_t>(config.k, 1), nullptr);

  ChatRequest req;
  req.model = config.verdict_model;
  req.request_tag = fmt::format("flag-verdict:{}", item.item_id);
  std::vector<ContentItem> items;
  for (auto i : selected) items.push_back(ContentItem::make_image(pages[i].image_ref, pages[i].page_id));
  items.push_back(ContentItem::make_text(prompts().render(
      "flag_verdict", {{"evidence", detail::evidence_block(pages, selected)},
                       {"question", item.question},
                       {"answer", item.gold_answer}})));
  req.messages.push_back(Message{Role::user, std::move(items)});
  const auto verdict = parse_flag_verdict(complete_text(verdict_client, req));

  FlagReport report;
  report.flag_id = "flag-" + item.item_id;
  report.item_id = item.item_id;
  report.issue_kind = verdict.issue;
  report.rationale = verdict.rationale;
  report.created_by = config.run_id;
  for (auto i : selected) {
    report.evidence.push_back(FlagEvidence{pages[i].page_id, pages[i].evidence, pages[i].relevance});
  }
  return report;
}

const std::vector<std::string>& not_answerable_equivalents() {
  static const std::vector<std::string> v{"Not answerable", "None", "0", "No one"};
  return v;
}

BenchmarkItem expand_accepted_answers(BenchmarkItem item, const ExpansionConfig& config) {
  if (!config.enabled || item.status != ItemStatus::active ||
      item.answer_kind != AnswerKind::not_answerable) {
    return item;
  }
  if (config.styles) {
    if (!item.question_style || config.styles->count(*item.question_style) == 0) return item;
  }
  for (const auto& a : not_answerable_equivalents()) {
    if (std::find(item.accepted_answers.begin(), item.accepted_answers.end(), a) ==
        item.accepted_answers.end()) {
      item.accepted_answers.push_back(a);
    }
  }
  return item;
}

namespace {

json item_fields(const BenchmarkItem& item) {
  return json{{"question", item.question},
              {"gold_answer", item.gold_answer},
              {"accepted_answers", item.accepted_answers}};
}

void add_unique(std::vector<std::string>& v, const std::string& s) {
  if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
}

}  // namespace

BenchmarkItem apply_decision(BenchmarkItem item, const Decision& decision) {
  decision.validate();
  json entry{{"flag_id", decision.flag_id},
             {"action", to_string(decision.action)},
             {"reviewer", decision.reviewer},
             {"timestamp", decision.timestamp}};
  switch (decision.action) {
    case DecisionAction::keep:
      break;
    case DecisionAction::remove:
      item.status = ItemStatus::removed;
      break;
    case DecisionAction::modify: {
      entry["before"] = item_fields(item);
      if (decision.new_question && !trim(*decision.new_question).empty()) {
        item.question = *decision.new_question;
      }
      if (decision.new_answer && !trim(*decision.new_answer).empty()) {
        std::erase(item.accepted_answers, item.gold_answer);
        item.gold_answer = *decision.new_answer;
        item.accepted_answers.insert(item.accepted_answers.begin(), item.gold_answer);
        std::vector<std::string> dedup;
        for (const auto& a : item.accepted_answers) add_unique(dedup, a);
        item.accepted_answers = std::move(dedup);
      }
      for (const auto& a : decision.added_accepted_answers) {
        if (!trim(a).empty()) add_unique(item.accepted_answers, a);
      }
      entry["after"] = item_fields(item);
      break;
    }
  }
  item.trail.push_back(std::move(entry));
  return item;
}

json export_record(const BenchmarkItem& item) {
  auto j = to_json(item);
  json provenance = json::array();
  for (const auto& t : item.trail) {
    if (t.value("action", "") == "modify") provenance.push_back(t);
  }
  if (!provenance.empty()) j["provenance"] = std::move(provenance);
  return j;
}

json to_json(const ReviewStats& s) {
  return json{{"pending", s.pending}, {"kept", s.kept}, {"modified", s.modified}, {"removed", s.removed}};
}

std::string flag_status_label(const std::optional<DecisionAction>& action) {
  if (!action) return "pending";
  switch (*action) {
    case DecisionAction::keep: return "kept";
    case DecisionAction::modify: return "modified";
    case DecisionAction::remove: return "removed";
  }
  return "pending";
}

}  // namespace lcdoc
