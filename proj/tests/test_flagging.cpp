// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include <gtest/gtest.h>

#include "lcdoc/flagging.hpp"
#include "support.hpp"

namespace lcdoc {
namespace {

using testing::fixture_path;
using testing::TempDir;

std::vector<BenchmarkItem> fixture_items() {
  std::vector<BenchmarkItem> out;
  for_each_jsonl(fixture_path("items.jsonl"),
                 [&](std::size_t, const json& j) { out.push_back(benchmark_item_from_json(j)); });
  return out;
}

const BenchmarkItem& find_item(const std::vector<BenchmarkItem>& items, const std::string& id) {
  return *std::find_if(items.begin(), items.end(), [&](const auto& i) { return i.item_id == id; });
}

Decision decide(DecisionAction action, const std::string& flag = "") {
  Decision d;
  d.flag_id = flag;
  d.action = action;
  d.reviewer = "rev-a";
  d.timestamp = "2026-01-01T00:00:00Z";
  return d;
}

TEST(FlagVerdict, ParsesKindAndRationale) {
  const auto v = parse_flag_verdict("Issue: Incorrect answer\nRationale: The table says 14.\nSecond line.");
  EXPECT_TRUE(v.ok);
  EXPECT_EQ(v.issue, IssueKind::incorrect_answer);
  EXPECT_EQ(v.rationale, "The table says 14.\nSecond line.");
  EXPECT_EQ(parse_flag_verdict("issue: ok").issue, IssueKind::ok);
  EXPECT_EQ(parse_flag_verdict("Issue: typo").rationale, "no rationale given");
}

TEST(FlagVerdict, UnparseableBecomesUnderspecified) {
  for (const char* reply : {"I am not sure.", "Issue: banana\nRationale: x", ""}) {
    const auto v = parse_flag_verdict(reply);
    EXPECT_FALSE(v.ok);
    EXPECT_EQ(v.issue, IssueKind::underspecified);
    EXPECT_EQ(v.rationale, "verdict unparseable");
  }
}

TEST(FlagItem, MockFixtureVerdicts) {
  const auto corpus = load_manifest(fixture_path("corpus.jsonl"));
  const auto items = fixture_items();
  auto client = MockChatClient::from_jsonl(fixture_path("mock.jsonl"));
  const auto& typo = find_item(items, "item-03");
  const auto report = flag_item(typo, corpus.document(typo.doc_id), client, client);
  EXPECT_EQ(report.flag_id, "flag-item-03");
  EXPECT_EQ(report.issue_kind, IssueKind::typo);
  EXPECT_NE(report.rationale.find("lease"), std::string::npos);
  EXPECT_EQ(report.evidence.size(), 3u);
  for (const auto& e : report.evidence) EXPECT_TRUE(e.page_id.starts_with("doc-charlie-"));

  const auto& wrong = find_item(items, "item-05");
  EXPECT_EQ(flag_item(wrong, corpus.document(wrong.doc_id), client, client).issue_kind,
            IssueKind::incorrect_answer);
  EXPECT_THROW(flag_item(wrong, corpus.document("doc-alpha"), client, client), std::invalid_argument);
}

TEST(FlagItem, ExtractionHitsEveryPageThenOneVerdict) {
  const auto doc = testing::make_document("d", 6);
  BenchmarkItem item;
  item.item_id = "q1";
  item.doc_id = "d";
  item.question = "What?";
  item.gold_answer = "x";
  testing::ScriptedClient client([](const ChatRequest& r) -> std::string {
    if (r.request_tag.starts_with("flag-extract")) return "Evidence: e\nRelevance: " + testing::tag_page(r.request_tag).substr(4);
    return "Issue: ok\nRationale: fine";
  });
  FlagConfig cfg;
  cfg.k = 2;
  const auto report = flag_item(item, doc, client, client, cfg);
  EXPECT_EQ(report.issue_kind, IssueKind::ok);
  ASSERT_EQ(report.evidence.size(), 2u);
  EXPECT_EQ(report.evidence[0].page_id, "d-p05");
  EXPECT_EQ(report.evidence[1].page_id, "d-p04");
  EXPECT_EQ(client.requests().size(), 7u);
}

TEST(Expansion, NotAnswerableCountGetsZero) {
  BenchmarkItem item;
  item.item_id = "na";
  item.answer_kind = AnswerKind::not_answerable;
  item.question_style = "count";
  item.gold_answer = "Not answerable";
  item.accepted_answers = {"Not answerable"};
  const auto out = expand_accepted_answers(item);
  EXPECT_NE(std::find(out.accepted_answers.begin(), out.accepted_answers.end(), "0"), out.accepted_answers.end());
  EXPECT_EQ(out.accepted_answers.front(), "Not answerable");
  EXPECT_EQ(out.gold_answer, item.gold_answer);
  EXPECT_EQ(expand_accepted_answers(out), out);

  ExpansionConfig only_count;
  only_count.styles = std::set<std::string>{"count"};
  EXPECT_EQ(expand_accepted_answers(item, only_count), out);
  item.question_style = "who";
  EXPECT_EQ(expand_accepted_answers(item, only_count), item);
  ExpansionConfig off;
  off.enabled = false;
  EXPECT_EQ(expand_accepted_answers(item, off), item);
}

TEST(Expansion, ValueItemsUntouched) {
  for (const auto& item : fixture_items()) {
    if (item.answer_kind != AnswerKind::not_answerable) {
      EXPECT_EQ(expand_accepted_answers(item), item);
    }
  }
}

TEST(Decisions, ModifyRecordsBeforeAndAfter) {
  const auto item = find_item(fixture_items(), "item-03");
  auto d = decide(DecisionAction::modify, "flag-item-03");
  d.new_question = "What is the lease term for the clinic building?";
  const auto out = apply_decision(item, d);
  EXPECT_EQ(out.question, *d.new_question);
  ASSERT_EQ(out.trail.size(), 1u);
  EXPECT_EQ(out.trail[0].at("before").at("question"), item.question);
  EXPECT_EQ(out.trail[0].at("after").at("question"), *d.new_question);
  const auto rec = export_record(out);
  ASSERT_TRUE(rec.contains("provenance"));
  EXPECT_EQ(rec.at("provenance").size(), 1u);
}

TEST(Decisions, NewAnswerBecomesFirstAccepted) {
  auto item = find_item(fixture_items(), "item-05");
  auto d = decide(DecisionAction::modify);
  d.new_answer = "14";
  d.added_accepted_answers = {"fourteen", "14"};
  const auto out = apply_decision(item, d);
  EXPECT_EQ(out.gold_answer, "14");
  EXPECT_EQ(out.accepted_answers, (std::vector<std::string>{"14", "fourteen"}));
}

TEST(Decisions, KeepAndRemove) {
  const auto item = find_item(fixture_items(), "item-07");
  const auto kept = apply_decision(item, decide(DecisionAction::keep));
  EXPECT_EQ(to_json(kept), to_json(item));
  EXPECT_EQ(kept.trail.size(), 1u);
  EXPECT_FALSE(export_record(kept).contains("provenance"));
  const auto removed = apply_decision(item, decide(DecisionAction::remove));
  EXPECT_EQ(removed.status, ItemStatus::removed);
}

TEST(Decisions, InvalidOnesRejected) {
  const auto item = find_item(fixture_items(), "item-07");
  EXPECT_THROW(apply_decision(item, decide(DecisionAction::modify)), std::invalid_argument);
  auto blank = decide(DecisionAction::modify);
  blank.new_question = "   ";
  EXPECT_THROW(apply_decision(item, blank), std::invalid_argument);
  auto anon = decide(DecisionAction::keep);
  anon.reviewer = "";
  EXPECT_THROW(apply_decision(item, anon), std::invalid_argument);
}

TEST(Decisions, JsonRoundTrip) {
  auto d = decide(DecisionAction::modify, "f");
  d.new_answer = "a";
  d.added_accepted_answers = {"b"};
  EXPECT_EQ(to_json(decision_from_json(to_json(d))), to_json(d));
}

std::vector<FlagReport> four_flags() {
  std::vector<FlagReport> out;
  for (const char* id : {"item-03", "item-05", "item-07", "item-09"}) {
    FlagReport f;
    f.item_id = id;
    f.flag_id = std::string("flag-") + id;
    f.issue_kind = IssueKind::underspecified;
    f.rationale = "needs a look";
    out.push_back(f);
  }
  return out;
}

TEST(ReviewStore, ReplayRestoresState) {
  TempDir dir;
  ReviewStore::initialize(dir.path(), fixture_items(), four_flags());
  std::string exported;
  {
    ReviewStore store(dir.path());
    EXPECT_EQ(store.stats().pending, 4u);
    store.record_decision("flag-item-07", decide(DecisionAction::remove));
    store.record_decision("flag-item-09", decide(DecisionAction::keep));
    store.record_decision("flag-item-09", decide(DecisionAction::remove));  // latest wins
    exported = store.export_jsonl();
  }
  ReviewStore reopened(dir.path());
  EXPECT_EQ(reopened.export_jsonl(), exported);
  const auto s = reopened.stats();
  EXPECT_EQ(s.pending, 2u);
  EXPECT_EQ(s.removed, 2u);
  EXPECT_EQ(s.kept, 0u);
  EXPECT_EQ(std::count(exported.begin(), exported.end(), '\n'), 8);
  EXPECT_EQ(reopened.flag_detail("flag-item-09")->at("decisions").size(), 2u);
  EXPECT_EQ(reopened.list_flags("pending").size(), 2u);
  EXPECT_THROW(reopened.list_flags("bogus"), std::invalid_argument);
}

TEST(ReviewStore, TamperedLogDetected) {
  TempDir dir;
  ReviewStore::initialize(dir.path(), fixture_items(), four_flags());
  {
    ReviewStore store(dir.path());
    store.record_decision("flag-item-03", decide(DecisionAction::keep));
  }
  { ReviewStore covered(dir.path()); }  // snapshot now covers the decision
  auto log = read_file(dir / "decisions.jsonl");
  log.replace(log.find("keep"), 4, "remove");
  write_file(dir / "decisions.jsonl", log);
  EXPECT_THROW(ReviewStore{dir.path()}, std::runtime_error);
}

TEST(ReviewStore, PartialRecordDetected) {
  TempDir dir;
  ReviewStore::initialize(dir.path(), fixture_items(), four_flags());
  write_file(dir / "decisions.jsonl", R"({"flag_id": "flag-item-03", "action": "ke)");
  EXPECT_THROW(ReviewStore{dir.path()}, std::runtime_error);
}

TEST(ReviewStore, RecordErrors) {
  TempDir dir;
  ReviewStore::initialize(dir.path(), fixture_items(), four_flags());
  ReviewStore store(dir.path());
  EXPECT_THROW(store.record_decision("flag-nope", decide(DecisionAction::keep)), std::out_of_range);
  EXPECT_THROW(store.record_decision("flag-item-03", decide(DecisionAction::keep, "flag-item-05")),
               std::invalid_argument);
  EXPECT_THROW(store.record_decision("flag-item-03", decide(DecisionAction::modify)), std::invalid_argument);
  EXPECT_EQ(read_file(dir / "decisions.jsonl"), "");
  EXPECT_NO_THROW(ReviewStore::initialize(dir.path(), fixture_items(), four_flags()));
  store.record_decision("flag-item-03", decide(DecisionAction::keep));
  EXPECT_THROW(ReviewStore::initialize(dir.path(), fixture_items(), four_flags()), std::runtime_error);
}

}  // namespace
}  // namespace lcdoc
