// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>
#include <stdexcept>

#include <fmt/format.h>

#include "lcdoc/prompts.hpp"
#include "lcdoc/sft.hpp"
#include "sft_internal.hpp"

namespace lcdoc {

namespace {

constexpr double kMaxRelevance = 10.0;

}  // namespace

namespace detail {

std::string evidence_block(const std::vector<PageEvidence>& pages,
                           const std::vector<std::size_t>& selected) {
  std::vector<std::string> parts;
  for (auto i : selected) {
    parts.push_back(fmt::format("Evidence from page {}: {}", pages[i].position + 1,
                                pages[i].evidence));
  }
  return join(parts, "\n");
}

std::vector<PageEvidence> extract_pages(const AssembledContext& context,
                                        const std::string& tag_prefix, const std::string& model,
                                        const std::string& instruction, ChatClient& client,
                                        std::size_t max_in_flight) {
  std::vector<ChatRequest> requests;
  for (const auto& page : context.pages) {
    ChatRequest req;
    req.model = model;
    req.request_tag = fmt::format("{}:{}", tag_prefix, page.page_id);
    req.messages.push_back(Message{Role::user,
                                   {ContentItem::make_image(page.image_ref, page.page_id),
                                    ContentItem::make_text(instruction)}});
    requests.push_back(std::move(req));
  }
  const auto results = complete_batch(client, requests, max_in_flight);

  std::vector<PageEvidence> out;
  for (std::size_t i = 0; i < context.pages.size(); ++i) {
    if (!results[i].ok()) {
      throw GenerationError(fmt::format("evidence extraction failed on page {}: {}",
                                        context.pages[i].page_id, results[i].error.value_or("")));
    }
    PageEvidence ev;
    ev.page_id = context.pages[i].page_id;
    ev.image_ref = context.pages[i].image_ref;
    ev.position = i;
    const auto parsed = parse_extraction(results[i].text);
    ev.evidence = parsed.evidence;
    ev.relevance = parsed.ok ? parsed.relevance : 0.0;
    ev.degraded = !parsed.ok;
    out.push_back(std::move(ev));
  }
  return out;
}

std::vector<std::size_t> top_k(const std::vector<PageEvidence>& pages, std::size_t k,
                               std::vector<std::size_t>* ranked_out) {
  std::vector<double> rel;
  for (const auto& p : pages) rel.push_back(p.relevance);
  auto ranked = rank_by_relevance(rel);
  std::vector<std::size_t> selected(ranked.begin(),
                                    ranked.begin() + static_cast<std::ptrdiff_t>(
                                                         std::min(k, ranked.size())));
  if (ranked_out) *ranked_out = std::move(ranked);
  return selected;
}

}  // namespace detail

using detail::evidence_block;
using detail::extract_pages;
using detail::top_k;

std::string answer_plain(const AssembledContext& context, const std::string& question,
                         ChatClient& teacher, const std::string& model, const TokenBudget& budget) {
  fit_context(static_cast<std::int64_t>(context.size()), estimate_text_tokens(question), budget);
  ChatRequest req;
  req.model = model;
  req.request_tag =
      fmt::format("plain:{}:{}", short_hash(question), detail::pages_key(context.pages));
  auto items = detail::page_items(context.pages);
  items.push_back(ContentItem::make_text(question));
  req.messages.push_back(Message{Role::user, std::move(items)});
  return trim(complete_text(teacher, req));
}

std::string to_string(EvidenceMode m) {
  return m == EvidenceMode::visual_pages ? "visual_pages" : "text_evidence";
}

EvidenceMode evidence_mode_from_string(const std::string& s) {
  if (s == "visual_pages" || s == "visual") return EvidenceMode::visual_pages;
  if (s == "text_evidence" || s == "text") return EvidenceMode::text_evidence;
  throw std::invalid_argument(fmt::format("unknown evidence mode '{}'", s));
}

ExtractionParse parse_extraction(const std::string& reply) {
  static const std::regex evidence_re(R"(^\s*evidence\s*:\s*)", std::regex::icase);
  static const std::regex relevance_re(R"(^\s*relevance\s*:\s*(.*)$)", std::regex::icase);

  ExtractionParse out;
  std::vector<std::string> evidence_lines;
  bool in_evidence = false;
  bool have_relevance = false;
  std::size_t pos = 0;
  while (pos <= reply.size()) {
    auto nl = reply.find('\n', pos);
    if (nl == std::string::npos) nl = reply.size();
    const std::string line = reply.substr(pos, nl - pos);
    pos = nl + 1;
    std::smatch m;
    if (std::regex_search(line, m, relevance_re)) {
      in_evidence = false;
      if (auto v = first_number(m[1].str()); v && std::isfinite(*v)) {
        out.relevance = std::clamp(*v, 0.0, kMaxRelevance);
        have_relevance = true;
      }
    } else if (std::regex_search(line, m, evidence_re)) {
      in_evidence = true;
      evidence_lines.push_back(m.suffix().str());
    } else if (in_evidence) {
      evidence_lines.push_back(line);
    }
  }
  out.evidence = trim(join(evidence_lines, "\n"));
  out.ok = have_relevance;
  if (!out.ok) {
    out.relevance = 0.0;
    out.evidence.clear();
  }
  return out;
}

std::vector<std::size_t> rank_by_relevance(const std::vector<double>& relevance) {
  std::vector<std::size_t> idx(relevance.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return relevance[a] > relevance[b]; });
  return idx;
}

json to_json(const AnswerTrace& trace) {
  json pages = json::array();
  for (const auto& p : trace.pages) {
    pages.push_back({{"page_id", p.page_id},
                     {"position", p.position},
                     {"evidence", p.evidence},
                     {"relevance", p.relevance},
                     {"degraded", p.degraded}});
  }
  return json{{"pages", pages},
              {"ranked", trace.ranked},
              {"selected", trace.selected},
              {"mode", to_string(trace.mode)},
              {"final_answer", trace.final_answer},
              {"teacher_model", trace.teacher_model}};
}

AnswerTrace answer_recursive(const AssembledContext& context, const std::string& question,
                             ChatClient& extract_client, ChatClient& answer_client,
                             const RecursiveConfig& config) {
  if (context.pages.empty()) throw std::invalid_argument("recursive answering needs pages");
  if (config.k == 0) throw std::invalid_argument("recursive answering needs k >= 1");

  const auto qkey = short_hash(question);
  AnswerTrace trace;
  trace.mode = config.mode;
  trace.teacher_model = config.answer_model;
  trace.pages = extract_pages(context, fmt::format("extract:{}", qkey), config.extract_model,
                              prompts().render("extract_evidence", {{"question", question}}),
                              extract_client, config.max_in_flight);
  trace.selected = top_k(trace.pages, config.k, &trace.ranked);

  ChatRequest req;
  req.model = config.answer_model;
  req.request_tag = fmt::format("recursive:{}:{}", qkey, detail::pages_key(context.pages));
  std::vector<ContentItem> items;
  if (config.mode == EvidenceMode::visual_pages) {
    for (auto i : trace.selected) {
      items.push_back(ContentItem::make_image(trace.pages[i].image_ref, trace.pages[i].page_id));
    }
    items.push_back(ContentItem::make_text(question));
  } else {
    items.push_back(ContentItem::make_text(prompts().render(
        "evidence_answer",
        {{"evidence", evidence_block(trace.pages, trace.selected)}, {"question", question}})));
  }
  req.messages.push_back(Message{Role::user, std::move(items)});
  trace.final_answer = trim(complete_text(answer_client, req));
  return trace;
}

QualityVerdict quality_check(const std::string& answer, const AssembledContext& context,
                             ChatClient& client, const QualityConfig& config) {
  if (trim(answer).empty()) throw std::invalid_argument("quality check needs a non-empty answer");
  if (context.pages.empty()) throw std::invalid_argument("quality check needs pages");
  const auto akey = short_hash(answer);

  ChatRequest decompose;
  decompose.model = config.model;
  decompose.request_tag = fmt::format("qc-assert:{}", akey);
  decompose.messages.push_back(
      Message::text(Role::user, prompts().render("qc_assertions", {{"answer", answer}})));
  const auto assertions = parse_list_lines(complete_text(client, decompose));
  if (assertions.empty()) {
    throw std::runtime_error("quality check: answer decomposed into zero assertions");
  }

  std::vector<std::string> numbered;
  for (std::size_t i = 0; i < assertions.size(); ++i) {
    numbered.push_back(fmt::format("{}. {}", i + 1, assertions[i]));
  }
  const auto assertion_block = join(numbered, "\n");

  const auto pages = extract_pages(context, fmt::format("qc-extract:{}", akey), config.model,
                                   prompts().render("qc_extract", {{"assertions", assertion_block}}),
                                   client, config.max_in_flight);
  const auto selected = top_k(pages, std::max<std::size_t>(config.k, 1), nullptr);

  ChatRequest verify;
  verify.model = config.model;
  verify.request_tag = fmt::format("qc-verify:{}", akey);
  std::vector<ContentItem> items;
  for (auto i : selected) items.push_back(ContentItem::make_image(pages[i].image_ref, pages[i].page_id));
  items.push_back(ContentItem::make_text(prompts().render(
      "qc_verify",
      {{"evidence", evidence_block(pages, selected)}, {"assertions", assertion_block}})));
  verify.messages.push_back(Message{Role::user, std::move(items)});
  const auto reply = complete_text(client, verify);

  static const std::regex line_re(R"(^\s*(\d+)\s*[:.)-]\s*(SUPPORTED|UNSUPPORTED)\b)",
                                  std::regex::icase);
  std::vector<std::optional<bool>> marks(assertions.size());
  std::size_t pos = 0;
  while (pos <= reply.size()) {
    auto nl = reply.find('\n', pos);
    if (nl == std::string::npos) nl = reply.size();
    const std::string line = reply.substr(pos, nl - pos);
    pos = nl + 1;
    std::smatch m;
    if (!std::regex_search(line, m, line_re)) continue;
    const auto n = std::stoul(m[1].str());
    if (n < 1 || n > assertions.size()) continue;
    marks[n - 1] = to_lower_ascii(m[2].str()) == "supported";
  }

  std::vector<std::string> evidence;
  for (auto i : selected) evidence.push_back(pages[i].evidence);

  QualityVerdict verdict;
  for (std::size_t i = 0; i < assertions.size(); ++i) {
    AssertionCheck check{assertions[i], marks[i].value_or(false), evidence};
    if (!check.supported) verdict.failing.push_back(i);
    verdict.assertions.push_back(std::move(check));
  }
  verdict.supported = verdict.failing.empty();
  return verdict;
}

}  // namespace lcdoc
