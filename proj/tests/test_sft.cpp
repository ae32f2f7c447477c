// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "lcdoc/prompts.hpp"
#include "lcdoc/sft.hpp"
#include "support.hpp"

namespace lcdoc {
namespace {

using testing::make_document;
using testing::ScriptedClient;
using testing::tag_page;

const TokenBudget kBudget = TokenBudget::preset("sft-short");

Corpus small_corpus() {
  return Corpus({make_document("a", 10), make_document("b", 4), make_document("c", 6)});
}

std::vector<std::string> ids_of(const std::vector<PageRef>& refs) {
  std::vector<std::string> out;
  for (const auto& r : refs) out.push_back(r.page_id);
  return out;
}

/// Extraction replies with planted relevance per page id.
ScriptedClient::Handler planted_extractor(std::map<std::string, double> relevance) {
  return [relevance = std::move(relevance)](const ChatRequest& r) {
    const auto page = tag_page(r.request_tag);
    return fmt::format("Evidence: fact from {}\nRelevance: {}", page, relevance.at(page));
  };
}

// ---------------------------------------------------------------------------
// Questions

TEST(Magpie, PassesCompletionThrough) {
  const auto corpus = small_corpus();
  ScriptedClient client([](const ChatRequest&) { return std::string("What is the 2023 revenue?"); });
  const auto q = magpie_question(corpus.page("a-p01"), client, "gen");
  EXPECT_EQ(q.text, "What is the 2023 revenue?");
  EXPECT_EQ(q.pipeline, QuestionPipeline::magpie);
  const auto req = client.requests().at(0);
  ASSERT_EQ(req.messages.size(), 1u);
  ASSERT_EQ(req.messages[0].content.size(), 1u);
  EXPECT_TRUE(req.messages[0].content[0].is_image());
}

TEST(Magpie, EmptyCompletionIsAnError) {
  const auto corpus = small_corpus();
  ScriptedClient client([](const ChatRequest&) { return std::string(); });
  EXPECT_THROW(magpie_question(corpus.page("a-p01"), client, "gen"), GenerationError);
}

TEST(Magpie, BatchFollowsPageOrder) {
  const auto corpus = small_corpus();
  ScriptedClient client([](const ChatRequest& r) { return "Question about " + tag_page(r.request_tag); });
  std::vector<std::string> texts;
  for (const auto* id : {"a-p00", "b-p02", "c-p05"}) {
    texts.push_back(magpie_question(corpus.page(id), client, "gen").text);
  }
  EXPECT_EQ(texts, (std::vector<std::string>{"Question about a-p00", "Question about b-p02",
                                             "Question about c-p05"}));
}

TEST(SinglePageQuestions, SingleCandidateIsSelected) {
  const auto corpus = small_corpus();
  QuestionGenConfig cfg;
  cfg.n_max = 1;
  ScriptedClient client([](const ChatRequest&) { return std::string("1. Only question?"); });
  const auto q = generate_sp_questions(corpus.page("a-p03"), client, 5, cfg);
  EXPECT_EQ(q.text, "Only question?");
  EXPECT_EQ(q.pipeline, QuestionPipeline::single_page);
  ASSERT_TRUE(q.archetype.has_value());
}

TEST(SinglePageQuestions, SelectionReproducibleAndUsesArchetype) {
  const auto corpus = small_corpus();
  QuestionGenConfig cfg;
  cfg.n_max = 3;
  cfg.archetypes = {default_archetypes().front()};
  ScriptedClient client([](const ChatRequest&) { return std::string("1. One?\n2. Two?\n3. Three?"); });
  for (std::uint64_t seed : {1u, 2u, 3u, 99u}) {
    const auto a = generate_sp_questions(corpus.page("a-p03"), client, seed, cfg);
    const auto b = generate_sp_questions(corpus.page("a-p03"), client, seed, cfg);
    EXPECT_EQ(a.text, b.text);
  }
  const auto last = client.requests().back();
  const auto prompt = last.messages[0].joined_text();
  EXPECT_NE(prompt.find("short, verifiable"), std::string::npos) << prompt;
}

TEST(SinglePageQuestions, IneligiblePageRejected) {
  auto doc = make_document("d", 2);
  doc.pages[0].word_count = 100;
  ScriptedClient client([](const ChatRequest&) { return std::string("1. Q?"); });
  EXPECT_THROW(generate_sp_questions(doc.pages[0], client, 1), std::invalid_argument);
}

TEST(SinglePageQuestions, ShortReplyRetriedOnceThenFails) {
  const auto corpus = small_corpus();
  QuestionGenConfig cfg;
  cfg.n_max = 1;
  ScriptedClient client([](const ChatRequest&) { return std::string("   "); });
  EXPECT_ANY_THROW(generate_sp_questions(corpus.page("a-p03"), client, 1, cfg));
}

TEST(MultiPageQuestions, CandidatesPassThrough) {
  const auto corpus = small_corpus();
  const auto ctx = context_from_pages(corpus, {"a-p01", "a-p02", "a-p03", "a-p04"});
  ScriptedClient client([](const ChatRequest&) { return std::string("1. First?\n2. Second?"); });
  const auto qs = generate_mp_questions(ctx, client, "gen");
  ASSERT_EQ(qs.size(), 2u);
  EXPECT_EQ(qs[1].text, "Second?");
  EXPECT_EQ(qs[0].source_page_ids.size(), 4u);

  EXPECT_NO_THROW(generate_mp_questions(context_from_pages(corpus, {"a-p01", "a-p02"}), client, "gen"));
  EXPECT_THROW(generate_mp_questions(context_from_pages(corpus, {"a-p01"}), client, "gen"),
               std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Multi-page filter

Question question_text(const std::string& text) {
  Question q;
  q.text = text;
  return q;
}

MultipageFilterResult run_filter(const std::vector<PageRef>& pages, const std::set<std::string>& yes) {
  ScriptedClient answerer([](const ChatRequest&) { return std::string("an answer"); });
  ScriptedClient judge([&](const ChatRequest& r) {
    return yes.count(tag_page(r.request_tag)) ? std::string("YES") : std::string("NO");
  });
  return filter_multipage(question_text("Q?"), pages, answerer, judge);
}

TEST(MultipageFilter, SinglePageSufficesRejects) {
  const auto pages = testing::page_refs(make_document("d", 4));
  EXPECT_FALSE(run_filter(pages, {"d-p01"}).keep);
}

TEST(MultipageFilter, JointEvidenceKeeps) {
  const auto pages = testing::page_refs(make_document("d", 4));
  const auto result = run_filter(pages, {});
  EXPECT_TRUE(result.keep);
  ASSERT_EQ(result.judgements.size(), 4u);
  for (const auto& j : result.judgements) EXPECT_EQ(j.verdict, JudgeVerdict::not_answered);
}

TEST(MultipageFilter, AnyYesRejects) {
  const auto pages = testing::page_refs(make_document("d", 2));
  EXPECT_FALSE(run_filter(pages, {"d-p00", "d-p01"}).keep);
}

TEST(MultipageFilter, UnparseableCountsAsAnswered) {
  const auto pages = testing::page_refs(make_document("d", 3));
  ScriptedClient answerer([](const ChatRequest&) { return std::string("x"); });
  ScriptedClient judge([](const ChatRequest& r) {
    return tag_page(r.request_tag) == "d-p02" ? std::string("maybe") : std::string("No.");
  });
  const auto result = filter_multipage(question_text("Q?"), pages, answerer, judge);
  EXPECT_FALSE(result.keep);
  EXPECT_EQ(result.judgements[2].verdict, JudgeVerdict::unparseable);
}

TEST(MultipageFilter, BruteForceAgreement) {
  const auto pages = testing::page_refs(make_document("d", 5));
  for (unsigned mask = 0; mask < 32; ++mask) {
    std::set<std::string> yes;
    for (unsigned i = 0; i < 5; ++i) {
      if (mask & (1u << i)) yes.insert(pages[i].page_id);
    }
    bool any_single = false;
    for (const auto& p : pages) any_single = any_single || yes.count(p.page_id);
    EXPECT_EQ(run_filter(pages, yes).keep, !any_single) << mask;
  }
}

TEST(MultipageFilter, JudgeVerdictParsing) {
  EXPECT_EQ(parse_judge_verdict("YES"), JudgeVerdict::answered);
  EXPECT_EQ(parse_judge_verdict(" yes, it does"), JudgeVerdict::answered);
  EXPECT_EQ(parse_judge_verdict("NO"), JudgeVerdict::not_answered);
  EXPECT_EQ(parse_judge_verdict("unsure"), JudgeVerdict::unparseable);
}

// ---------------------------------------------------------------------------
// Context assembly

TEST(Context, AdjacentShortWindow) {
  const auto corpus = small_corpus();
  ContextParams params;
  params.size = 3;
  const auto ctx = assemble_context(ContextStrategy::adjacent_short, corpus, nullptr, "a-p04", params, 1);
  EXPECT_EQ(ids_of(ctx.pages), (std::vector<std::string>{"a-p03", "a-p04", "a-p05"}));
  EXPECT_EQ(ctx.origin, (std::vector<bool>{false, true, false}));
}

TEST(Context, WindowClampsAtDocumentEdge) {
  const auto corpus = small_corpus();
  ContextParams params;
  params.size = 4;
  const auto ctx = assemble_context(ContextStrategy::adjacent_short, corpus, nullptr, "a-p00", params, 1);
  EXPECT_EQ(ids_of(ctx.pages), (std::vector<std::string>{"a-p00", "a-p01", "a-p02", "a-p03"}));
}

TEST(Context, WholeDocumentIsDocumentOrder) {
  const auto corpus = small_corpus();
  const auto ctx = assemble_context(ContextStrategy::whole_document, corpus, nullptr, "c-p02", {}, 1);
  EXPECT_EQ(ids_of(ctx.pages), ids_of(testing::page_refs(corpus.document("c"))));
  EXPECT_EQ(ctx.origin_pages().at(0).page_id, "c-p02");
}

TEST(Context, ShortSizesOutsideRangeRejected) {
  const auto corpus = small_corpus();
  ContextParams params;
  params.size = 6;
  EXPECT_THROW(assemble_context(ContextStrategy::adjacent_short, corpus, nullptr, "a-p04", params, 1),
               std::invalid_argument);
}

TEST(Context, DistractorsComeFromOutsideTheNearBand) {
  std::vector<Document> docs{make_document("q", 2)};
  for (int d = 0; d < 10; ++d) docs.push_back(make_document("n" + std::to_string(d), 5));
  Corpus corpus(docs);
  // Rank neighbors by descending similarity; remember which fall outside rank 32.
  std::vector<Neighbor> list;
  int rank = 0;
  for (int d = 0; d < 10; ++d) {
    for (int p = 0; p < 5; ++p, ++rank) {
      list.push_back({fmt::format("n{}-p{:02d}", d, p), 0.99 - 0.01 * rank});
    }
  }
  NeighborIndex index;
  index.set("q-p00", list);
  std::set<std::string> far, near;
  for (int r = 0; r < 50; ++r) (r < 32 ? near : far).insert(list[r].page_id);

  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto ctx = assemble_context(ContextStrategy::distractor_short, corpus, &index, "q-p00", {}, seed);
    ASSERT_GE(ctx.size(), 2u);
    ASSERT_LE(ctx.size(), 5u);
    std::size_t origins = 0;
    for (std::size_t i = 0; i < ctx.size(); ++i) {
      if (ctx.origin[i]) {
        ++origins;
        EXPECT_EQ(ctx.pages[i].page_id, "q-p00");
      } else {
        EXPECT_TRUE(far.count(ctx.pages[i].page_id)) << ctx.pages[i].page_id;
      }
    }
    EXPECT_EQ(origins, 1u);

    const auto hn = assemble_context(ContextStrategy::hn_short, corpus, &index, "q-p00", {}, seed);
    for (std::size_t i = 0; i < hn.size(); ++i) {
      if (!hn.origin[i]) {
        EXPECT_TRUE(near.count(hn.pages[i].page_id));
      }
    }
  }
}

TEST(Context, SeedReproducible) {
  const auto corpus = load_manifest(testing::fixture_path("corpus.jsonl"));
  const auto index = load_neighbors(testing::fixture_path("neighbors.jsonl"));
  const auto a = assemble_context(ContextStrategy::hn_short, corpus, &index, "doc-bravo-p03", {}, 42);
  const auto b = assemble_context(ContextStrategy::hn_short, corpus, &index, "doc-bravo-p03", {}, 42);
  EXPECT_EQ(to_json(a), to_json(b));
}

// ---------------------------------------------------------------------------
// Answers

TEST(AnswerPlain, PassesAnswerThroughWithQuestionOnly) {
  const auto corpus = small_corpus();
  const auto ctx = context_from_pages(corpus, {"b-p00", "b-p01", "b-p02"});
  ScriptedClient teacher([](const ChatRequest&) { return std::string("42"); });
  EXPECT_EQ(answer_plain(ctx, "What is the answer?", teacher, "teacher", kBudget), "42");
  const auto req = teacher.requests().at(0);
  ASSERT_EQ(req.messages.size(), 1u);
  EXPECT_EQ(req.messages[0].image_count(), 3u);
  EXPECT_EQ(req.messages[0].joined_text(), "What is the answer?");
}

TEST(AnswerPlain, OversizedContextFails) {
  std::vector<std::string> ids;
  Corpus corpus({make_document("big", 400)});
  for (int i = 0; i < 400; ++i) ids.push_back(fmt::format("big-p{:02d}", i));
  const auto ctx = context_from_pages(corpus, ids);
  ScriptedClient teacher([](const ChatRequest&) { return std::string("x"); });
  EXPECT_THROW(answer_plain(ctx, "Q?", teacher, "teacher", kBudget), DoesNotFitError);
  EXPECT_TRUE(teacher.requests().empty());
}

TEST(AnswerRecursive, PlantedRelevanceSelection) {
  const auto corpus = small_corpus();
  const auto ctx = context_from_pages(corpus, {"a-p00", "a-p01", "a-p02", "a-p03"});
  ScriptedClient extractor(planted_extractor({{"a-p00", 0.2}, {"a-p01", 9.0}, {"a-p02", 5.0}, {"a-p03", 1.0}}));
  ScriptedClient teacher([](const ChatRequest&) { return std::string("final"); });
  RecursiveConfig cfg;
  cfg.k = 2;
  const auto trace = answer_recursive(ctx, "Q?", extractor, teacher, cfg);
  // Pages are 1-based in presentation order: the second and third pages.
  EXPECT_EQ(trace.selected, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(trace.final_answer, "final");
  const auto req = teacher.requests().at(0);
  ASSERT_EQ(req.messages[0].image_count(), 2u);
  EXPECT_EQ(req.messages[0].content[0].page_id, "a-p01");
  EXPECT_EQ(req.messages[0].content[1].page_id, "a-p02");
}

TEST(AnswerRecursive, AllTiesSelectDocumentOrder) {
  const auto corpus = small_corpus();
  const auto ctx = context_from_pages(corpus, {"a-p00", "a-p01", "a-p02", "a-p03", "a-p04"});
  std::map<std::string, double> rel;
  for (const auto& p : ctx.pages) rel[p.page_id] = 4.0;
  ScriptedClient extractor(planted_extractor(rel));
  ScriptedClient teacher([](const ChatRequest&) { return std::string("final"); });
  const auto trace = answer_recursive(ctx, "Q?", extractor, teacher, {});
  EXPECT_EQ(trace.selected, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(AnswerRecursive, TextEvidenceModeSendsNoImages) {
  const auto corpus = small_corpus();
  const auto ctx = context_from_pages(corpus, {"a-p00", "a-p01", "a-p02"});
  ScriptedClient extractor(planted_extractor({{"a-p00", 1}, {"a-p01", 8}, {"a-p02", 3}}));
  ScriptedClient teacher([](const ChatRequest&) { return std::string("final"); });
  RecursiveConfig cfg;
  cfg.mode = EvidenceMode::text_evidence;
  cfg.k = 2;
  answer_recursive(ctx, "Q?", extractor, teacher, cfg);
  const auto req = teacher.requests().at(0);
  EXPECT_EQ(req.messages[0].image_count(), 0u);
  const auto text = req.messages[0].joined_text();
  EXPECT_NE(text.find("fact from a-p01"), std::string::npos);
  EXPECT_NE(text.find("fact from a-p02"), std::string::npos);
  EXPECT_EQ(text.find("fact from a-p00"), std::string::npos);
}

TEST(AnswerRecursive, UnparseableExtractionIsDegraded) {
  const auto corpus = small_corpus();
  const auto ctx = context_from_pages(corpus, {"a-p00", "a-p01"});
  ScriptedClient extractor([](const ChatRequest& r) {
    return tag_page(r.request_tag) == "a-p00" ? std::string("no structure") : std::string("Evidence: x\nRelevance: 3");
  });
  ScriptedClient teacher([](const ChatRequest&) { return std::string("final"); });
  RecursiveConfig cfg;
  cfg.k = 1;
  const auto trace = answer_recursive(ctx, "Q?", extractor, teacher, cfg);
  EXPECT_TRUE(trace.pages[0].degraded);
  EXPECT_EQ(trace.selected, (std::vector<std::size_t>{1}));
}

TEST(Extraction, ParserBounds) {
  const auto ok = parse_extraction("Evidence: The table.\nRelevance: 7");
  EXPECT_TRUE(ok.ok);
  EXPECT_EQ(ok.evidence, "The table.");
  EXPECT_EQ(ok.relevance, 7.0);
  EXPECT_EQ(parse_extraction("Evidence: x\nRelevance: 14").relevance, 10.0);
  EXPECT_FALSE(parse_extraction("nothing useful").ok);
}

TEST(Extraction, RankIsStableDescending) {
  EXPECT_EQ(rank_by_relevance({0.2, 9.0, 5.0, 1.0}), (std::vector<std::size_t>{1, 2, 3, 0}));
  EXPECT_EQ(rank_by_relevance({3, 3, 3}), (std::vector<std::size_t>{0, 1, 2}));
}

// ---------------------------------------------------------------------------
// Quality filter

ScriptedClient::Handler quality_script(const std::string& verify_reply) {
  return [verify_reply](const ChatRequest& r) -> std::string {
    if (r.request_tag.starts_with("qc-assert:")) return "1. The budget is 4.2M.\n2. North leads.";
    if (r.request_tag.starts_with("qc-extract:")) return "Evidence: budget table\nRelevance: 6";
    return verify_reply;
  };
}

TEST(Quality, AllSupported) {
  const auto corpus = small_corpus();
  const auto ctx = context_from_pages(corpus, {"a-p00", "a-p01"});
  ScriptedClient client(quality_script("1: SUPPORTED\n2: SUPPORTED"));
  const auto v = quality_check("The budget is 4.2M and North leads.", ctx, client);
  EXPECT_TRUE(v.supported);
  EXPECT_EQ(v.assertions.size(), 2u);
  EXPECT_TRUE(v.failing.empty());
}

TEST(Quality, PlantedGapIsIdentified) {
  const auto corpus = small_corpus();
  const auto ctx = context_from_pages(corpus, {"a-p00", "a-p01"});
  ScriptedClient client(quality_script("1: SUPPORTED\n2: UNSUPPORTED"));
  const auto v = quality_check("The budget is 4.2M and North leads.", ctx, client);
  EXPECT_FALSE(v.supported);
  EXPECT_EQ(v.failing, (std::vector<std::size_t>{1}));
  EXPECT_EQ(v.assertions[1].text, "North leads.");
}

TEST(Quality, EmptyAnswerRejected) {
  const auto corpus = small_corpus();
  const auto ctx = context_from_pages(corpus, {"a-p00"});
  ScriptedClient client(quality_script(""));
  EXPECT_THROW(quality_check("  ", ctx, client), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Examples and multi-turn

TEST(Examples, ConcatenateSharesContext) {
  const auto corpus = small_corpus();
  const auto ctx = context_from_pages(corpus, {"a-p01", "a-p02"}, {"a-p01"});
  const auto e1 = make_sft_example(ctx, "Q1?", "A1", "plain", kBudget, 1);
  const auto e2 = make_sft_example(ctx, "Q2?", "A2", "plain", kBudget, 2);
  const auto joined = concatenate_turns({e1, e2}, kBudget);
  ASSERT_EQ(joined.messages.size(), 4u);
  EXPECT_EQ(joined.messages[0].image_count(), 2u);
  EXPECT_EQ(joined.messages[2].image_count(), 0u);
  EXPECT_EQ(joined.messages[2].joined_text(), "Q2?");
  EXPECT_EQ(joined.messages[3].joined_text(), "A2");
  EXPECT_EQ(joined.page_refs.size(), 2u);
}

TEST(Examples, SingleTurnShape) {
  const auto corpus = small_corpus();
  const auto ctx = context_from_pages(corpus, {"a-p01", "a-p02"}, {"a-p02"});
  const auto ex = make_sft_example(ctx, "Q?", "A", "recursive", kBudget, 3);
  EXPECT_EQ(ex.origin_marks, (std::vector<bool>{false, true}));
  EXPECT_EQ(ex.stage, Stage::short_stage);
  EXPECT_GT(ex.token_estimate, ex.assistant_tokens);
  EXPECT_THROW(make_sft_example(ctx, "Q?", " ", "recursive", kBudget, 3), std::invalid_argument);
}

TEST(Examples, ComposeDropsUnanswerableByDefault) {
  TrainingExample a, b;
  a.pipeline = "plain";
  b.pipeline = "unanswerable";
  EXPECT_EQ(compose_examples({a, b}).size(), 1u);
  EXPECT_EQ(compose_examples({a, b}, true).size(), 2u);
}

struct MultiturnScript {
  ScriptedClient questions{[](const ChatRequest& r) {
    // followup:<ctx>:<turn>:<seed>
    const auto head = r.request_tag.substr(0, r.request_tag.rfind(':'));
    const auto turn = head.substr(head.rfind(':') + 1);
    return "Follow-up " + turn + "?";
  }};
  ScriptedClient extract{[](const ChatRequest&) { return std::string("Evidence: e\nRelevance: 5"); }};
  ScriptedClient answers{[](const ChatRequest& r) {
    return "Answer to " + r.messages[0].content.back().text;
  }};
};

TEST(Multiturn, ScriptedTranscriptInOrder) {
  const auto corpus = small_corpus();
  const auto ctx = context_from_pages(corpus, {"a-p01", "a-p02", "a-p03"}, {"a-p02"});
  MultiturnScript s;
  MultiturnConfig cfg;
  cfg.turns = 3;
  const auto ex = simulate_multiturn(ctx, "First?", s.questions, s.extract, s.answers, cfg, kBudget, 8);
  ASSERT_EQ(ex.messages.size(), 6u);
  EXPECT_EQ(ex.messages[0].image_count(), 3u);
  EXPECT_EQ(ex.messages[0].content.back().text, "First?");
  EXPECT_EQ(ex.messages[1].joined_text(), "Answer to First?");
  EXPECT_EQ(ex.messages[2].joined_text(), "Follow-up 1?");
  EXPECT_EQ(ex.messages[3].joined_text(), "Answer to Follow-up 1?");
  EXPECT_EQ(ex.messages[4].joined_text(), "Follow-up 2?");
  EXPECT_EQ(ex.messages[5].joined_text(), "Answer to Follow-up 2?");
  EXPECT_EQ(s.questions.requests().size(), 2u);
  // The follow-up request carries the transcript so far.
  const auto prompt = s.questions.requests()[1].messages[0].joined_text();
  EXPECT_NE(prompt.find("Assistant: Answer to Follow-up 1?"), std::string::npos) << prompt;
}

TEST(Multiturn, TurnCountReproducible) {
  const auto corpus = small_corpus();
  const auto ctx = context_from_pages(corpus, {"a-p01", "a-p02"}, {"a-p01"});
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    MultiturnScript s1, s2;
    const auto a = simulate_multiturn(ctx, "Q?", s1.questions, s1.extract, s1.answers, {}, kBudget, seed);
    const auto b = simulate_multiturn(ctx, "Q?", s2.questions, s2.extract, s2.answers, {}, kBudget, seed);
    EXPECT_EQ(a.messages.size(), b.messages.size());
    EXPECT_GE(a.messages.size(), 4u);
    EXPECT_LE(a.messages.size(), 8u);
    EXPECT_EQ(to_json(a), to_json(b));
  }
}

// ---------------------------------------------------------------------------
// Pipeline driver with the fixture mock

TEST(RunSft, RecursivePipelineOnFixtures) {
  auto corpus = load_manifest(testing::fixture_path("corpus.jsonl"));
  corpus.neighbors = load_neighbors(testing::fixture_path("neighbors.jsonl"));
  MockChatClient mock(load_mock_rules(testing::fixture_path("mock.jsonl")));
  SftRunOptions opts;
  opts.pipeline = SftPipeline::recursive;
  opts.num_examples = 4;
  opts.seed = 3;
  SftClients clients{&mock, &mock, &mock, &mock};
  const auto a = run_sft(corpus, opts, clients);
  const auto b = run_sft(corpus, opts, clients);
  ASSERT_EQ(a.examples.size(), 4u);
  EXPECT_EQ(training_examples_to_jsonl(a.examples), training_examples_to_jsonl(b.examples));
  for (const auto& ex : a.examples) {
    EXPECT_EQ(ex.pipeline, "recursive");
    EXPECT_TRUE(ex.trace.has_value());
  }
}

TEST(RunSft, MissingClientIsAnError) {
  const auto corpus = load_manifest(testing::fixture_path("corpus.jsonl"));
  EXPECT_THROW(run_sft(corpus, {}, {}), std::invalid_argument);
}

}  // namespace
}  // namespace lcdoc
