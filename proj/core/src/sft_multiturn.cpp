// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <map>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "lcdoc/prompts.hpp"
#include "lcdoc/sft.hpp"
#include "sft_internal.hpp"

namespace lcdoc {

namespace {

std::int64_t text_tokens(const std::vector<Message>& messages) {
  std::int64_t n = 0;
  for (const auto& m : messages) {
    for (const auto& item : m.content) {
      if (item.is_text()) n += estimate_text_tokens(item.text);
    }
  }
  return n;
}

void finalize(TrainingExample& ex, const TokenBudget& budget) {
  ex.token_estimate =
      fit_context(static_cast<std::int64_t>(ex.page_refs.size()), text_tokens(ex.messages), budget)
          .total();
  ex.assistant_tokens = count_assistant_tokens(ex.messages);
  ex.stage = stage_for_pages(ex.page_count());
}

std::vector<bool> origin_of(const AssembledContext& context) { return context.origin; }

ChatClient& require(ChatClient* client, const char* role) {
  if (client == nullptr) {
    throw std::invalid_argument(fmt::format("SFT run needs a {} client", role));
  }
  return *client;
}

ContextStrategy default_strategy(SftPipeline p) {
  switch (p) {
    case SftPipeline::distractors_short: return ContextStrategy::distractor_short;
    case SftPipeline::adjacent_short: return ContextStrategy::adjacent_short;
    case SftPipeline::hn_short: return ContextStrategy::hn_short;
    default: return ContextStrategy::adjacent_range;
  }
}

AssembledContext only_origin(const AssembledContext& context) {
  AssembledContext out;
  out.strategy = context.strategy;
  for (std::size_t i = 0; i < context.pages.size(); ++i) {
    if (context.origin[i]) {
      out.pages.push_back(context.pages[i]);
      out.origin.push_back(true);
    }
  }
  return out;
}

}  // namespace

TrainingExample make_sft_example(const AssembledContext& context, const std::string& question,
                                 const std::string& answer, const std::string& pipeline,
                                 const TokenBudget& budget, std::uint64_t seed) {
  if (trim(question).empty() || trim(answer).empty()) {
    throw std::invalid_argument("SFT examples need a question and an answer");
  }
  TrainingExample ex;
  // The same window can serve different question pages, so the origin is
  // part of the identity.
  std::vector<std::string> origin_ids;
  for (const auto& p : context.origin_pages()) origin_ids.push_back(p.page_id);
  ex.example_id = fmt::format("sft-{}-{}-{}", pipeline, detail::pages_key(context.pages),
                              short_hash(join(origin_ids, ",") + "\n" + question));
  ex.pipeline = pipeline;
  ex.task_kind = "sft";
  auto items = detail::page_items(context.pages);
  items.push_back(ContentItem::make_text(question));
  ex.messages.push_back(Message{Role::user, std::move(items)});
  ex.messages.push_back(Message::text(Role::assistant, answer));
  ex.page_refs = context.pages;
  ex.origin_marks = origin_of(context);
  ex.seed = seed;
  finalize(ex, budget);
  return ex;
}

TrainingExample concatenate_turns(const std::vector<TrainingExample>& examples,
                                  const TokenBudget& budget) {
  if (examples.empty()) throw std::invalid_argument("nothing to concatenate");

  std::map<std::pair<std::string, std::int64_t>, std::pair<PageRef, bool>> pages;
  for (const auto& ex : examples) {
    if (ex.messages.size() != 2 || ex.messages[0].role != Role::user ||
        ex.messages[1].role != Role::assistant) {
      throw std::invalid_argument(
          fmt::format("example {} is not a single-turn conversation", ex.example_id));
    }
    for (std::size_t i = 0; i < ex.page_refs.size(); ++i) {
      const auto& ref = ex.page_refs[i];
      auto& slot = pages[{ref.doc_id, ref.index}];
      slot.first = ref;
      slot.second = slot.second || (i < ex.origin_marks.size() && ex.origin_marks[i]);
    }
  }

  TrainingExample out;
  out.pipeline = examples.front().pipeline;
  out.task_kind = "sft";
  for (const auto& [_, entry] : pages) {
    out.page_refs.push_back(entry.first);
    out.origin_marks.push_back(entry.second);
  }
  std::vector<std::string> ids;
  for (std::size_t t = 0; t < examples.size(); ++t) {
    const auto& ex = examples[t];
    ids.push_back(ex.example_id);
    Message user{Role::user, {}};
    if (t == 0) user.content = detail::page_items(out.page_refs);
    for (const auto& item : ex.messages[0].content) {
      if (item.is_text()) user.content.push_back(item);
    }
    out.messages.push_back(std::move(user));
    out.messages.push_back(ex.messages[1]);
  }
  out.example_id = fmt::format("sft-concat-{}", short_hash(join(ids, "|")));
  out.seed = examples.front().seed;
  finalize(out, budget);
  return out;
}

TrainingExample simulate_multiturn(const AssembledContext& context,
                                   const std::string& first_question, ChatClient& question_client,
                                   ChatClient& extract_client, ChatClient& answer_client,
                                   const MultiturnConfig& config, const TokenBudget& budget,
                                   std::uint64_t seed) {
  Rng rng(seed);
  const auto turns = config.turns ? *config.turns : rng.uniform_int(2, 4);
  if (turns < 1) throw std::invalid_argument("multi-turn needs at least one turn");
  const auto ctx_key = detail::pages_key(context.pages);

  TrainingExample ex;
  ex.pipeline = "multiturn";
  ex.task_kind = "sft";
  ex.page_refs = context.pages;
  ex.origin_marks = origin_of(context);
  ex.seed = seed;
  json traces = json::array();
  std::vector<std::string> transcript;

  std::string question = first_question;
  for (std::int64_t turn = 0; turn < turns; ++turn) {
    if (turn > 0) {
      ChatRequest req;
      req.model = config.question_model;
      req.request_tag = fmt::format("followup:{}:{}:{:016x}", ctx_key, turn, seed);
      auto items = detail::page_items(context.pages);
      items.push_back(ContentItem::make_text(
          prompts().render("followup", {{"transcript", join(transcript, "\n")}})));
      req.messages.push_back(Message{Role::user, std::move(items)});
      question = trim(complete_text(question_client, req));
    }
    const auto trace = answer_recursive(context, question, extract_client, answer_client,
                                        config.recursive);
    Message user{Role::user, {}};
    if (turn == 0) user.content = detail::page_items(context.pages);
    user.content.push_back(ContentItem::make_text(question));
    ex.messages.push_back(std::move(user));
    ex.messages.push_back(Message::text(Role::assistant, trace.final_answer));
    transcript.push_back("User: " + question);
    transcript.push_back("Assistant: " + trace.final_answer);
    traces.push_back(to_json(trace));
  }
  ex.example_id = fmt::format("sft-multiturn-{}-{}-{:016x}", ctx_key, short_hash(first_question),
                              seed);
  ex.trace = json{{"turns", traces}};
  finalize(ex, budget);
  return ex;
}

std::vector<TrainingExample> compose_examples(std::vector<TrainingExample> examples,
                                              bool include_unanswerable) {
  if (!include_unanswerable) {
    std::erase_if(examples, [](const TrainingExample& ex) { return ex.pipeline == "unanswerable"; });
  }
  return examples;
}

std::string to_string(SftPipeline p) {
  switch (p) {
    case SftPipeline::plain: return "plain";
    case SftPipeline::recursive: return "recursive";
    case SftPipeline::distractors_short: return "distractors_short";
    case SftPipeline::adjacent_short: return "adjacent_short";
    case SftPipeline::hn_short: return "hn_short";
    case SftPipeline::multiturn: return "multiturn";
    case SftPipeline::unanswerable: return "unanswerable";
  }
  return "recursive";
}

SftPipeline sft_pipeline_from_string(const std::string& s) {
  if (s == "plain") return SftPipeline::plain;
  if (s == "recursive") return SftPipeline::recursive;
  if (s == "distractors_short") return SftPipeline::distractors_short;
  if (s == "adjacent_short") return SftPipeline::adjacent_short;
  if (s == "hn_short") return SftPipeline::hn_short;
  if (s == "multiturn") return SftPipeline::multiturn;
  if (s == "unanswerable") return SftPipeline::unanswerable;
  throw std::invalid_argument(fmt::format("unknown SFT pipeline '{}'", s));
}

SftRunResult run_sft(const Corpus& corpus, const SftRunOptions& options, const SftClients& clients) {
  const auto pipeline_name = to_string(options.pipeline);
  const auto strategy = options.strategy.value_or(default_strategy(options.pipeline));
  const NeighborIndex* neighbors = corpus.neighbors ? &*corpus.neighbors : nullptr;
  const auto eligible = filter_question_pages(corpus);

  SftRunResult result;
  for (const auto& doc : corpus.documents()) {
    for (const auto& page : doc.pages) {
      if (result.examples.size() >= options.num_examples) return result;
      if (eligible.count(page.page_id) == 0) continue;
      const auto seed = derive_seed(options.seed, fmt::format("{}:{}", pipeline_name, page.page_id));
      try {
        const auto context = assemble_context(strategy, corpus, neighbors, page.page_id,
                                              options.context, derive_seed(seed, "context"));

        Question question;
        if (options.pipeline == SftPipeline::unanswerable) {
          question = generate_unanswerable_question(context, require(clients.question, "question"),
                                                    options.questions.model);
        } else if (options.question_source == QuestionPipeline::magpie) {
          question =
              magpie_question(page, require(clients.question, "question"), options.questions.model);
        } else if (options.question_source == QuestionPipeline::multi_page) {
          auto candidates = generate_mp_questions(context, require(clients.question, "question"),
                                                  options.questions.model);
          std::optional<Question> kept;
          for (auto& c : candidates) {
            const auto verdict =
                filter_multipage(c, context.pages, require(clients.answer, "answer"),
                                 require(clients.judge, "judge"), options.filter);
            if (verdict.keep) {
              c.kept = true;
              kept = std::move(c);
              break;
            }
          }
          if (!kept) {
            result.skipped.emplace_back(page.page_id, "no multi-page question survived filtering");
            continue;
          }
          question = std::move(*kept);
        } else {
          question = generate_sp_questions(page, require(clients.question, "question"),
                                           derive_seed(seed, "question"), options.questions);
        }

        TrainingExample ex;
        json trace{{"question", to_json(question)}, {"context", to_json(context)}};
        switch (options.pipeline) {
          case SftPipeline::recursive: {
            const auto t = answer_recursive(context, question.text,
                                            require(clients.extract, "extract"),
                                            require(clients.answer, "answer"), options.recursive);
            ex = make_sft_example(context, question.text, t.final_answer, pipeline_name,
                                  options.budget, seed);
            trace["answer"] = to_json(t);
            break;
          }
          case SftPipeline::multiturn: {
            ex = simulate_multiturn(context, question.text, require(clients.question, "question"),
                                    require(clients.extract, "extract"),
                                    require(clients.answer, "answer"), options.multiturn,
                                    options.budget, seed);
            trace["answer"] = *ex.trace;
            break;
          }
          case SftPipeline::distractors_short: {
            const auto answer = answer_plain(only_origin(context), question.text,
                                             require(clients.answer, "answer"),
                                             options.teacher_model, options.budget);
            ex = make_sft_example(context, question.text, answer, pipeline_name, options.budget,
                                  seed);
            break;
          }
          default: {
            const auto answer = answer_plain(context, question.text,
                                             require(clients.answer, "answer"),
                                             options.teacher_model, options.budget);
            ex = make_sft_example(context, question.text, answer, pipeline_name, options.budget,
                                  seed);
            break;
          }
        }
        ex.trace = std::move(trace);
        result.examples.push_back(std::move(ex));
      } catch (const GenerationError&) {
        throw;
      } catch (const std::invalid_argument&) {
        throw;
      } catch (const std::exception& e) {
        spdlog::warn("sft {}: skipping page {}: {}", pipeline_name, page.page_id, e.what());
        result.skipped.emplace_back(page.page_id, e.what());
      }
    }
  }
  return result;
}

}  // namespace lcdoc
