// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "lcdoc/evalagg.hpp"
#include "support.hpp"

namespace lcdoc {
namespace {

using testing::fixture_path;

/// Textbook dynamic program over code points, written independently of the
/// library implementation.
std::size_t oracle_distance(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1])});
    }
  }
  return d[a.size()][b.size()];
}

TEST(Levenshtein, KnownDistances) {
  EXPECT_EQ(levenshtein("kitten", "sitting"), 3u);
  EXPECT_EQ(levenshtein("", "abc"), 3u);
  EXPECT_EQ(levenshtein("abc", "abc"), 0u);
  EXPECT_EQ(levenshtein("café", "cafe"), 1u);  // one code point, two bytes
}

TEST(Levenshtein, MatchesOracleOnRandomStrings) {
  Rng rng(31);
  const std::u32string alphabet = U"abcde";
  for (int t = 0; t < 300; ++t) {
    std::u32string a, b;
    std::string a8, b8;
    for (auto n = rng.index(9); n > 0; --n) {
      a.push_back(alphabet[rng.index(5)]);
      a8.push_back(static_cast<char>(a.back()));
    }
    for (auto n = rng.index(9); n > 0; --n) {
      b.push_back(alphabet[rng.index(5)]);
      b8.push_back(static_cast<char>(b.back()));
    }
    EXPECT_EQ(levenshtein(a8, b8), oracle_distance(a, b)) << a8 << " / " << b8;
  }
}

TEST(Anls, Examples) {
  EXPECT_DOUBLE_EQ(anls("Paris", {"Paris"}), 1.0);
  EXPECT_NEAR(anls("kitten", {"sitting"}), 1.0 - 3.0 / 7.0, 1e-12);
  EXPECT_NEAR(anls("kitten", {"sitting"}), 0.5714, 1e-4);
  EXPECT_EQ(anls("abc", {"xyz"}), 0.0);
}

TEST(Anls, CaseInsensitiveAndBestGold) {
  EXPECT_DOUBLE_EQ(anls("PARIS", {"paris"}), 1.0);
  EXPECT_DOUBLE_EQ(anls("ÉTÉ", {"été"}), 1.0);
  EXPECT_DOUBLE_EQ(anls("north", {"south", "North"}), 1.0);
  EXPECT_THROW(anls("x", {}), std::invalid_argument);
  EXPECT_EQ(anls("", {""}), 1.0);
}

TEST(Normalize, ColumnMaxBecomesHundred) {
  ScoreTable t{{"a", {{"MMLBD-C", 56.2}, {"DUDE", 40.0}}}, {"b", {{"MMLBD-C", 57.3}, {"DUDE", 50.0}}}};
  const auto n = normalize_scores(t);
  EXPECT_DOUBLE_EQ(n.at("b").at("MMLBD-C"), 100.0);
  EXPECT_DOUBLE_EQ(n.at("b").at("DUDE"), 100.0);
  EXPECT_NEAR(n.at("a").at("MMLBD-C"), 98.08, 0.005);
  EXPECT_DOUBLE_EQ(n.at("a").at("DUDE"), 80.0);
}

TEST(Normalize, SingleCheckpointAllHundred) {
  const auto n = normalize_scores({{"only", {{"DUDE", 3.0}, {"SlideVQA", 0.7}}}});
  for (const auto& [_, v] : n.at("only")) EXPECT_DOUBLE_EQ(v, 100.0);
}

TEST(Normalize, Idempotent) {
  ScoreTable t{{"a", {{"X", 12.0}, {"Y", 3.0}}}, {"b", {{"X", 8.0}, {"Y", 9.0}}}, {"c", {{"X", 1.0}}}};
  const auto once = normalize_scores(t);
  const auto twice = normalize_scores(once);
  for (const auto& [ck, row] : once) {
    for (const auto& [b, v] : row) EXPECT_NEAR(twice.at(ck).at(b), v, 1e-12);
  }
}

TEST(Normalize, ArgmaxInvariantUnderPositiveScaling) {
  Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    ScoreTable table, scaled;
    const double factor = 0.01 + rng.uniform01() * 100.0;
    for (int c = 0; c < 6; ++c) {
      const auto v = 1.0 + rng.uniform01() * 80.0;
      table["c" + std::to_string(c)]["X"] = v;
      scaled["c" + std::to_string(c)]["X"] = v * factor;
    }
    const auto a = normalize_scores(table);
    const auto b = normalize_scores(scaled);
    auto argmax = [](const ScoreTable& n) {
      return std::max_element(n.begin(), n.end(), [](const auto& x, const auto& y) {
               return x.second.at("X") < y.second.at("X");
             })->first;
    };
    EXPECT_EQ(argmax(a), argmax(b));
    for (const auto& [ck, row] : a) EXPECT_NEAR(row.at("X"), b.at(ck).at("X"), 1e-9);
  }
}

TEST(Normalize, RejectsNegativesAndZeroColumns) {
  EXPECT_THROW(normalize_scores({{"a", {{"X", -1.0}}}}), std::invalid_argument);
  EXPECT_THROW(normalize_scores({{"a", {{"X", 0.0}}}, {"b", {{"X", 0.0}}}}), std::invalid_argument);
}

BenchmarkRegistry small_registry() {
  BenchmarkRegistry r;
  r.add({"V1", "anls", "V1", true, true});
  r.add({"V2-32K", "acc", "V2", true, true});
  r.add({"V2-128K", "acc", "V2", true, true});
  r.add({"T1", "score", "T1", false, true});
  return r;
}

TEST(Aggregate, SpreadsheetOracle) {
  const ScoreTable n{{"x", {{"V1", 90.0}, {"V2-32K", 80.0}, {"V2-128K", 70.0}, {"T1", 60.0}}},
                     {"y", {{"V1", 100.0}, {"V2-32K", 100.0}, {"V2-128K", 90.0}, {"T1", 100.0}}}};
  const auto report = aggregate(n, small_registry(), "x");
  ASSERT_EQ(report.rows.size(), 2u);
  // V2 group = mean of its splits; VA = mean(V1, V2); LCA = mean(V1, V2, T1).
  EXPECT_NEAR(*report.rows[0].va, (90.0 + 75.0) / 2.0, 1e-9);
  EXPECT_NEAR(*report.rows[0].lca, (90.0 + 75.0 + 60.0) / 3.0, 1e-9);
  EXPECT_NEAR(*report.rows[1].va, (100.0 + 95.0) / 2.0, 1e-9);
  EXPECT_NEAR(*report.rows[1].lca, (100.0 + 95.0 + 100.0) / 3.0, 1e-9);
  EXPECT_EQ(*report.rows[0].va_delta, 0.0);
  EXPECT_EQ(*report.rows[0].lca_delta, 0.0);
  EXPECT_NEAR(*report.rows[1].va_delta, 15.0, 1e-9);
}

TEST(Aggregate, AllMaxGivesHundred) {
  const ScoreTable n{{"best", {{"V1", 100.0}, {"V2-32K", 100.0}, {"T1", 100.0}}}};
  const auto report = aggregate(n, small_registry());
  EXPECT_DOUBLE_EQ(*report.rows[0].va, 100.0);
  EXPECT_DOUBLE_EQ(*report.rows[0].lca, 100.0);
}

TEST(Aggregate, MissingGroupMarksIncomplete) {
  const ScoreTable n{{"hole", {{"V1", 100.0}, {"V2-32K", 90.0}}}};
  const auto report = aggregate(n, small_registry());
  EXPECT_TRUE(report.rows[0].va.has_value());
  EXPECT_FALSE(report.rows[0].lca.has_value());
  EXPECT_EQ(report.rows[0].missing, (std::vector<std::string>{"T1"}));
  EXPECT_FALSE(report.rows[0].complete());
}

TEST(Aggregate, DefaultRegistryMembers) {
  const auto r = BenchmarkRegistry::defaults();
  EXPECT_EQ(r.va_groups().size(), 5u);
  EXPECT_EQ(r.lca_groups().size(), 7u);
  EXPECT_EQ(r.find("LongBench v2")->group, r.find("LongBench-v2")->group);
}

TEST(Variance, PopulationSigma) {
  EXPECT_NEAR(run_variance({92.8, 92.4, 92.0}), 0.3266, 1e-4);
  EXPECT_NEAR(run_variance({91.8, 91.5, 91.2}), 0.2449, 1e-4);
  EXPECT_EQ(run_variance({5.0, 5.0, 5.0}), 0.0);
  EXPECT_THROW(run_variance({1.0}), std::invalid_argument);
}

TEST(Variance, FixtureRunsAttach) {
  const auto runs = tables_by_run(load_score_records(fixture_path("scores.jsonl")));
  ASSERT_EQ(runs.size(), 3u);
  auto report = aggregate(normalize_scores(runs.at("run-1")), BenchmarkRegistry::defaults());
  attach_run_variance(report, runs, BenchmarkRegistry::defaults());
  ASSERT_EQ(report.run_sigma.size(), 3u);
  for (const auto& [ck, sigma] : report.run_sigma) {
    ASSERT_TRUE(sigma.first.has_value()) << ck;
    EXPECT_GE(*sigma.first, 0.0);
  }
}

TEST(ScoreRecords, DuplicateCellsRejected) {
  EXPECT_THROW(tables_by_run({{"a", "DUDE", 1.0, "r"}, {"a", "DUDE", 2.0, "r"}}), std::invalid_argument);
}

TEST(Format, SignedValues) {
  EXPECT_EQ(format_signed(1.234), "+1.23");
  EXPECT_EQ(format_signed(-0.4), "-0.40");
  EXPECT_EQ(format_signed(0.0), "+0.00");
  EXPECT_EQ(format_signed(-0.001), "+0.00");
}

TEST(Leaderboard, SortedRowsAndHoles) {
  const auto records = load_leaderboard_records(fixture_path("leaderboard.jsonl"));
  const auto html = export_leaderboard(records, LeaderboardFormat::html);
  EXPECT_EQ(html, export_leaderboard(records, LeaderboardFormat::html));
  const auto pos_sft = html.find("ckpt-sft");
  const auto pos_base = html.find("ckpt-base");
  const auto pos_partial = html.find("ckpt-partial");
  ASSERT_NE(pos_sft, std::string::npos);
  EXPECT_LT(pos_sft, pos_base);
  EXPECT_LT(pos_base, pos_partial);
  EXPECT_NE(html.find("—"), std::string::npos);
  std::size_t rows = 0;
  for (auto p = html.find("<tr"); p != std::string::npos; p = html.find("<tr", p + 1)) ++rows;
  EXPECT_EQ(rows, 4u);  // header + 3 records

  const auto j = json::parse(export_leaderboard(records, LeaderboardFormat::json)).at("records");
  ASSERT_TRUE(j.is_array());
  ASSERT_EQ(j.size(), 3u);
  EXPECT_EQ(j[2].at("checkpoint"), "ckpt-partial");
  EXPECT_FALSE(j[2].at("complete").get<bool>());
}

TEST(Report, HtmlIsEscapedAndDeterministic) {
  const ScoreTable n{{"<ckpt>", {{"V1", 100.0}}}};
  const auto report = aggregate(n, small_registry());
  const auto html = render_report_html(report);
  EXPECT_EQ(html.find("<ckpt>"), std::string::npos);
  EXPECT_NE(html.find("&lt;ckpt&gt;"), std::string::npos);
  EXPECT_EQ(html, render_report_html(report));
}

}  // namespace
}  // namespace lcdoc
