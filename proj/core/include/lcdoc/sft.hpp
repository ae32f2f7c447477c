// SPDX-License-Identifier: Apache-2.0
//
// Synthetic SFT data: question generation, context assembly, answer
// generation (plain distillation and the recursive evidence pipeline), the
// assertion-level quality filter and multi-turn construction.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcdoc/corpus.hpp"
#include "lcdoc/genclient.hpp"
#include "lcdoc/message.hpp"
#include "lcdoc/tokens.hpp"

namespace lcdoc {

// ---------------------------------------------------------------------------
// Questions

enum class QuestionPipeline { magpie, single_page, multi_page, unanswerable };

std::string to_string(QuestionPipeline p);
QuestionPipeline question_pipeline_from_string(const std::string& s);

struct Question {
  std::string text;
  QuestionPipeline pipeline = QuestionPipeline::single_page;
  std::optional<std::string> archetype;
  std::vector<std::string> source_page_ids;
  bool kept = false;
};

json to_json(const Question& q);

/// Archetype prompts for single-page generation. Entry zero is the
/// difficult short-verifiable-answer archetype.
const std::vector<std::string>& default_archetypes();

struct QuestionGenConfig {
  std::string model = "question-generator";
  std::int64_t n_max = 5;
  std::vector<std::string> archetypes = default_archetypes();
};

/// Sends the page with no instruction; the completion is the question.
Question magpie_question(const Page& page, ChatClient& client, const std::string& model);

/// Requests n ~ U{1..n_max} questions with a sampled archetype and keeps one
/// uniformly at random. Retries once when fewer than n questions parse.
Question generate_sp_questions(const Page& page, ChatClient& client, std::uint64_t seed,
                               const QuestionGenConfig& config = {});

// ---------------------------------------------------------------------------
// Context assembly

enum class ContextStrategy {
  adjacent_range,
  whole_document,
  hard_negative,
  distractor_short,
  adjacent_short,
  hn_short
};

std::string to_string(ContextStrategy s);
ContextStrategy context_strategy_from_string(const std::string& s);

struct ContextParams {
  /// Total pages. Unset: *_short strategies draw 2..5, adjacent_range uses
  /// 5, hard_negative uses every near-band neighbor.
  std::optional<std::int64_t> size;
};

struct AssembledContext {
  ContextStrategy strategy = ContextStrategy::whole_document;
  std::vector<PageRef> pages;   // presentation order
  std::vector<bool> origin;     // parallel; true = question page

  std::vector<PageRef> origin_pages() const;
  std::size_t size() const { return pages.size(); }
};

json to_json(const AssembledContext& c);

AssembledContext assemble_context(ContextStrategy strategy, const Corpus& corpus,
                                  const NeighborIndex* neighbors,
                                  const std::string& question_page_id,
                                  const ContextParams& params, std::uint64_t seed);

/// Context over explicit pages of one document, in the given order.
AssembledContext context_from_pages(const Corpus& corpus, const std::vector<std::string>& page_ids,
                                    const std::vector<std::string>& origin_ids = {});

std::vector<Question> generate_mp_questions(const AssembledContext& context, ChatClient& client,
                                            const std::string& model);

Question generate_unanswerable_question(const AssembledContext& context, ChatClient& client,
                                        const std::string& model);

// ---------------------------------------------------------------------------
// Multi-page answerability filter

enum class JudgeVerdict { answered, not_answered, unparseable };

struct PageJudgement {
  std::string page_id;
  std::string answer;
  JudgeVerdict verdict = JudgeVerdict::unparseable;
};

struct MultipageFilterResult {
  bool keep = false;
  std::vector<PageJudgement> judgements;
};

struct FilterModels {
  std::string answer_model = "filter-answerer";
  std::string judge_model = "judge";
};

/// Parses a YES/NO judge reply; anything else is unparseable.
JudgeVerdict parse_judge_verdict(const std::string& reply);

/// A small model answers from each page alone; the question is kept only
/// when no single page yields a correct, complete answer. Unparseable
/// verdicts count as answered.
MultipageFilterResult filter_multipage(const Question& question, const std::vector<PageRef>& pages,
                                       ChatClient& answer_client, ChatClient& judge_client,
                                       const FilterModels& models = {});

// ---------------------------------------------------------------------------
// Answers

/// Single call with the full page sequence and the question; no extra
/// instruction beyond the question itself. Throws DoesNotFitError when the
/// context cannot fit the teacher budget.
std::string answer_plain(const AssembledContext& context, const std::string& question,
                         ChatClient& teacher, const std::string& model, const TokenBudget& budget);

enum class EvidenceMode { visual_pages, text_evidence };

std::string to_string(EvidenceMode m);
EvidenceMode evidence_mode_from_string(const std::string& s);

struct PageEvidence {
  std::string page_id;
  std::string image_ref;
  std::size_t position = 0;  // index in the presented context
  std::string evidence;
  double relevance = 0.0;
  bool degraded = false;
};

struct ExtractionParse {
  std::string evidence;
  double relevance = 0.0;
  bool ok = false;
};

/// "Evidence: ... / Relevance: <0..10>" reply parser.
ExtractionParse parse_extraction(const std::string& reply);

/// Indices sorted by relevance descending, ties by position ascending.
std::vector<std::size_t> rank_by_relevance(const std::vector<double>& relevance);

struct AnswerTrace {
  std::vector<PageEvidence> pages;   // presentation order
  std::vector<std::size_t> ranked;   // indices into pages
  std::vector<std::size_t> selected; // prefix of ranked
  EvidenceMode mode = EvidenceMode::visual_pages;
  std::string final_answer;
  std::string teacher_model;
};

json to_json(const AnswerTrace& trace);

struct RecursiveConfig {
  std::size_t k = 3;
  EvidenceMode mode = EvidenceMode::visual_pages;
  std::string extract_model = "extractor";
  std::string answer_model = "teacher";
  std::size_t max_in_flight = 4;
};

AnswerTrace answer_recursive(const AssembledContext& context, const std::string& question,
                             ChatClient& extract_client, ChatClient& answer_client,
                             const RecursiveConfig& config = {});

// ---------------------------------------------------------------------------
// Quality filter

struct AssertionCheck {
  std::string text;
  bool supported = false;
  std::vector<std::string> evidence;
};

struct QualityVerdict {
  bool supported = false;
  std::vector<AssertionCheck> assertions;
  std::vector<std::size_t> failing;  // indices into assertions
};

struct QualityConfig {
  std::string model = "quality-checker";
  std::size_t k = 3;
  std::size_t max_in_flight = 4;
};

QualityVerdict quality_check(const std::string& answer, const AssembledContext& context,
                             ChatClient& client, const QualityConfig& config = {});

// ---------------------------------------------------------------------------
// Examples and multi-turn

/// Single-turn example: user = pages + question, assistant = answer.
TrainingExample make_sft_example(const AssembledContext& context, const std::string& question,
                                 const std::string& answer, const std::string& pipeline,
                                 const TokenBudget& budget, std::uint64_t seed);

/// Concatenates single-turn examples over the same context into one
/// conversation; the union of their pages (document order) is emitted once.
TrainingExample concatenate_turns(const std::vector<TrainingExample>& examples,
                                  const TokenBudget& budget);

struct MultiturnConfig {
  std::optional<std::int64_t> turns;  // unset: seeded 2..4
  std::string question_model = "question-generator";
  RecursiveConfig recursive;
};

/// Answers the first question, then repeatedly asks for a deeper or new
/// follow-up and answers it with the recursive pipeline.
TrainingExample simulate_multiturn(const AssembledContext& context,
                                   const std::string& first_question, ChatClient& question_client,
                                   ChatClient& extract_client, ChatClient& answer_client,
                                   const MultiturnConfig& config, const TokenBudget& budget,
                                   std::uint64_t seed);

/// Drops unanswerable-pipeline examples unless explicitly included.
std::vector<TrainingExample> compose_examples(std::vector<TrainingExample> examples,
                                              bool include_unanswerable = false);

// ---------------------------------------------------------------------------
// Pipeline driver

enum class SftPipeline {
  plain,
  recursive,
  distractors_short,
  adjacent_short,
  hn_short,
  multiturn,
  unanswerable
};

std::string to_string(SftPipeline p);
SftPipeline sft_pipeline_from_string(const std::string& s);

struct SftClients {
  ChatClient* question = nullptr;
  ChatClient* extract = nullptr;
  ChatClient* answer = nullptr;
  ChatClient* judge = nullptr;
};

struct SftRunOptions {
  SftPipeline pipeline = SftPipeline::recursive;
  QuestionPipeline question_source = QuestionPipeline::single_page;
  std::optional<ContextStrategy> strategy;  // default per pipeline
  ContextParams context;
  std::size_t num_examples = 8;
  std::uint64_t seed = 0;
  TokenBudget budget = TokenBudget::preset("sft-short");
  QuestionGenConfig questions;
  RecursiveConfig recursive;
  FilterModels filter;
  std::string teacher_model = "teacher";
  MultiturnConfig multiturn;
};

struct SftRunResult {
  std::vector<TrainingExample> examples;
  std::vector<std::pair<std::string, std::string>> skipped;  // (page_id, reason)
};

SftRunResult run_sft(const Corpus& corpus, const SftRunOptions& options, const SftClients& clients);

}  // namespace lcdoc
