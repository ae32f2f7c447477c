// SPDX-License-Identifier: Apache-2.0
//
// ANLS scoring, per-benchmark max normalization, VA / LCA aggregates,
// run variance and leaderboard export.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lcdoc/util.hpp"

namespace lcdoc {

/// Edit distance over Unicode code points of two UTF-8 strings.
std::size_t levenshtein(std::string_view a, std::string_view b);

/// Lowercases ASCII and Latin-1 letters of a UTF-8 string.
std::string lower_latin1(std::string_view text);

/// max over golds of NLS (or 0 below tau), NLS = 1 - dist / max(len).
double anls(std::string_view prediction, const std::vector<std::string>& golds, double tau = 0.5);

struct BenchmarkInfo {
  std::string id;
  std::string metric;
  std::string group;  // aggregate member this benchmark contributes to
  bool va_member = false;
  bool lca_member = false;
};

class BenchmarkRegistry {
public:
  static BenchmarkRegistry defaults();

  void add(BenchmarkInfo info);
  const BenchmarkInfo* find(const std::string& id) const;
  const std::vector<BenchmarkInfo>& all() const { return benchmarks_; }

  /// Distinct member groups, in registration order.
  std::vector<std::string> va_groups() const;
  std::vector<std::string> lca_groups() const;

private:
  std::vector<BenchmarkInfo> benchmarks_;
};

/// checkpoint -> benchmark -> score.
using ScoreTable = std::map<std::string, std::map<std::string, double>>;

struct ScoreRecord {
  std::string checkpoint;
  std::string benchmark;
  double score = 0.0;
  std::string run_id;
};

std::vector<ScoreRecord> load_score_records(const std::filesystem::path& path);

/// run_id -> table. Duplicate (run, checkpoint, benchmark) cells throw.
std::map<std::string, ScoreTable> tables_by_run(const std::vector<ScoreRecord>& records);

/// 100 * raw / column max. Throws on negative scores or an all-zero column.
ScoreTable normalize_scores(const ScoreTable& table);

struct AggregateRow {
  std::string checkpoint;
  std::optional<double> va;
  std::optional<double> lca;
  std::vector<std::string> missing;  // member groups with no score
  std::optional<double> va_delta;
  std::optional<double> lca_delta;

  bool complete() const { return missing.empty(); }
};

struct AggregateReport {
  ScoreTable normalized;
  std::vector<AggregateRow> rows;  // checkpoint order
  std::optional<std::string> baseline;
  std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> run_sigma;
};

/// Mean of present splits per member group; nullopt when the group is
/// absent for that checkpoint.
std::map<std::string, double> group_scores(const std::map<std::string, double>& row,
                                           const BenchmarkRegistry& registry);

/// VA / LCA per checkpoint over an already normalized table. Incomplete
/// aggregates are nullopt and list their missing groups.
AggregateReport aggregate(const ScoreTable& normalized, const BenchmarkRegistry& registry,
                          const std::optional<std::string>& baseline = std::nullopt);

/// Population standard deviation; throws with fewer than two runs.
double run_variance(const std::vector<double>& values);

/// Normalizes each run separately and fills report.run_sigma for every
/// checkpoint with complete aggregates in at least two runs.
void attach_run_variance(AggregateReport& report, const std::map<std::string, ScoreTable>& runs,
                         const BenchmarkRegistry& registry);

/// "+1.23" / "-0.40" / "+0.00".
std::string format_signed(double value, int decimals = 2);

json to_json(const AggregateReport& report);

/// Self-contained HTML table of the report, one row per checkpoint.
std::string render_report_html(const AggregateReport& report);

struct LeaderboardRecord {
  std::string checkpoint;
  std::string method;
  std::string base_model;
  std::string merge_recipe;
  std::string data_composition;
  std::map<std::string, double> scores;  // raw
};

std::vector<LeaderboardRecord> load_leaderboard_records(const std::filesystem::path& path);

enum class LeaderboardFormat { json, html };

LeaderboardFormat leaderboard_format_from_string(const std::string& s);

/// Deterministic rendering sorted by VA descending (incomplete rows last,
/// ties by checkpoint). Missing cells render as an em dash in HTML.
std::string export_leaderboard(const std::vector<LeaderboardRecord>& records,
                               LeaderboardFormat format,
                               const BenchmarkRegistry& registry = BenchmarkRegistry::defaults());

}  // namespace lcdoc
