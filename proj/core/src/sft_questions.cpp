// SPDX-License-Identifier: Apache-2.0

#include <stdexcept>

#include <fmt/format.h>

#include "lcdoc/prompts.hpp"
#include "lcdoc/sft.hpp"
#include "sft_internal.hpp"

namespace lcdoc {

std::string to_string(QuestionPipeline p) {
  switch (p) {
    case QuestionPipeline::magpie: return "magpie";
    case QuestionPipeline::single_page: return "single_page";
    case QuestionPipeline::multi_page: return "multi_page";
    case QuestionPipeline::unanswerable: return "unanswerable";
  }
  return "single_page";
}

QuestionPipeline question_pipeline_from_string(const std::string& s) {
  if (s == "magpie") return QuestionPipeline::magpie;
  if (s == "single_page" || s == "sp") return QuestionPipeline::single_page;
  if (s == "multi_page" || s == "mp") return QuestionPipeline::multi_page;
  if (s == "unanswerable") return QuestionPipeline::unanswerable;
  throw std::invalid_argument(fmt::format("unknown question pipeline '{}'", s));
}

json to_json(const Question& q) {
  json j{{"text", q.text},
         {"pipeline", to_string(q.pipeline)},
         {"source_page_ids", q.source_page_ids},
         {"kept", q.kept}};
  j["archetype"] = q.archetype ? json(*q.archetype) : json(nullptr);
  return j;
}

const std::vector<std::string>& default_archetypes() {
  static const std::vector<std::string> archetypes{
      "ask a difficult question that has a short, verifiable (not open-ended or debatable, has a "
      "single correct answer) answer (a number, string, list, dictionary, yes/no, etc.) and ask "
      "for the model to reason before answering",
      "ask a question that requires reading a table or chart on the page",
      "ask for a concise summary of one section of the page",
      "ask a question comparing two facts stated on the page",
      "ask a question whose answer is a specific name, date or quantity",
  };
  return archetypes;
}

Question magpie_question(const Page& page, ChatClient& client, const std::string& model) {
  ChatRequest req;
  req.model = model;
  req.request_tag = fmt::format("magpie:{}", page.page_id);
  req.messages.push_back(Message{Role::user, {ContentItem::make_image(page.image_ref, page.page_id)}});
  Question q;
  q.text = trim(complete_text(client, req));
  q.pipeline = QuestionPipeline::magpie;
  q.source_page_ids = {page.page_id};
  q.kept = true;
  return q;
}

Question generate_sp_questions(const Page& page, ChatClient& client, std::uint64_t seed,
                               const QuestionGenConfig& config) {
  if (!is_question_page(page)) {
    throw std::invalid_argument(
        fmt::format("page {} is not eligible for question generation", page.page_id));
  }
  if (config.n_max < 1 || config.archetypes.empty()) {
    throw std::invalid_argument("question generation needs n_max >= 1 and an archetype list");
  }
  Rng rng(seed);
  const auto n = rng.uniform_int(1, config.n_max);
  const auto& archetype = config.archetypes[rng.index(config.archetypes.size())];

  ChatRequest req;
  req.model = config.model;
  req.messages.push_back(Message{
      Role::user,
      {ContentItem::make_image(page.image_ref, page.page_id),
       ContentItem::make_text(
           prompts().render("sp_questions", {{"n", std::to_string(n)}, {"archetype", archetype}}))}});

  std::vector<std::string> questions;
  for (int attempt = 0; attempt < 2; ++attempt) {
    req.request_tag = fmt::format("sp:{}:{:016x}{}", page.page_id, seed, attempt ? ":retry" : "");
    questions = parse_list_lines(complete_text(client, req));
    if (static_cast<std::int64_t>(questions.size()) >= n) break;
  }
  if (static_cast<std::int64_t>(questions.size()) < n) {
    throw std::runtime_error(fmt::format("page {}: expected {} questions, parsed {}", page.page_id,
                                         n, questions.size()));
  }
  Question q;
  q.text = questions[rng.index(static_cast<std::size_t>(n))];
  q.pipeline = QuestionPipeline::single_page;
  q.archetype = archetype;
  q.source_page_ids = {page.page_id};
  q.kept = true;
  return q;
}

std::vector<Question> generate_mp_questions(const AssembledContext& context, ChatClient& client,
                                            const std::string& model) {
  if (context.size() < 2) {
    throw std::invalid_argument("multi-page questions need a context of at least 2 pages");
  }
  ChatRequest req;
  req.model = model;
  req.request_tag = fmt::format("mp:{}", detail::pages_key(context.pages));
  auto items = detail::page_items(context.pages);
  items.push_back(ContentItem::make_text(prompts().render("mp_questions", {})));
  req.messages.push_back(Message{Role::user, std::move(items)});

  const auto lines = parse_list_lines(complete_text(client, req));
  if (lines.empty()) {
    throw std::runtime_error("multi-page question generation returned no parseable questions");
  }
  std::vector<std::string> ids;
  for (const auto& p : context.pages) ids.push_back(p.page_id);
  std::vector<Question> out;
  for (const auto& line : lines) {
    out.push_back(Question{line, QuestionPipeline::multi_page, std::nullopt, ids, false});
  }
  return out;
}

Question generate_unanswerable_question(const AssembledContext& context, ChatClient& client,
                                        const std::string& model) {
  ChatRequest req;
  req.model = model;
  req.request_tag = fmt::format("unanswerable:{}", detail::pages_key(context.pages));
  auto items = detail::page_items(context.pages);
  items.push_back(ContentItem::make_text(prompts().render("unanswerable_question", {})));
  req.messages.push_back(Message{Role::user, std::move(items)});
  Question q;
  q.text = trim(complete_text(client, req));
  q.pipeline = QuestionPipeline::unanswerable;
  for (const auto& p : context.pages) q.source_page_ids.push_back(p.page_id);
  q.kept = true;
  return q;
}

JudgeVerdict parse_judge_verdict(const std::string& reply) {
  const auto t = to_lower_ascii(trim(reply));
  if (t.rfind("yes", 0) == 0) return JudgeVerdict::answered;
  if (t.rfind("no", 0) == 0) return JudgeVerdict::not_answered;
  return JudgeVerdict::unparseable;
}

MultipageFilterResult filter_multipage(const Question& question, const std::vector<PageRef>& pages,
                                       ChatClient& answer_client, ChatClient& judge_client,
                                       const FilterModels& models) {
  if (pages.size() < 2) {
    throw std::invalid_argument("multi-page filtering needs at least 2 pages");
  }
  const auto qkey = short_hash(question.text);

  std::vector<ChatRequest> answer_requests;
  for (const auto& page : pages) {
    ChatRequest req;
    req.model = models.answer_model;
    req.request_tag = fmt::format("mpf-answer:{}:{}", qkey, page.page_id);
    req.messages.push_back(Message{Role::user,
                                   {ContentItem::make_image(page.image_ref, page.page_id),
                                    ContentItem::make_text(question.text)}});
    answer_requests.push_back(std::move(req));
  }
  const auto answers = complete_batch(answer_client, answer_requests, 4);

  std::vector<ChatRequest> judge_requests;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    if (!answers[i].ok()) {
      throw GenerationError(fmt::format("filter answer failed on page {}: {}", pages[i].page_id,
                                        answers[i].error.value_or("")));
    }
    ChatRequest req;
    req.model = models.judge_model;
    req.request_tag = fmt::format("mpf-judge:{}:{}", qkey, pages[i].page_id);
    auto items = detail::page_items(pages);
    items.push_back(ContentItem::make_text(prompts().render(
        "mp_judge", {{"question", question.text}, {"answer", answers[i].text}})));
    req.messages.push_back(Message{Role::user, std::move(items)});
    judge_requests.push_back(std::move(req));
  }
  const auto verdicts = complete_batch(judge_client, judge_requests, 4);

  MultipageFilterResult result;
  result.keep = true;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    PageJudgement j;
    j.page_id = pages[i].page_id;
    j.answer = answers[i].text;
    j.verdict = verdicts[i].ok() ? parse_judge_verdict(verdicts[i].text) : JudgeVerdict::unparseable;
    if (j.verdict != JudgeVerdict::not_answered) result.keep = false;
    result.judgements.push_back(std::move(j));
  }
  return result;
}

}  // namespace lcdoc
