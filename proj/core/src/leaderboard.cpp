// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "lcdoc/evalagg.hpp"

namespace lcdoc {

namespace {

constexpr const char* kMissingCell = "—";

std::string escape_html(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

struct Ranked {
  const LeaderboardRecord* record;
  const AggregateRow* row;
  const std::map<std::string, double>* normalized;
};

}  // namespace

std::vector<LeaderboardRecord> load_leaderboard_records(const std::filesystem::path& path) {
  std::vector<LeaderboardRecord> out;
  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    try {
      LeaderboardRecord r;
      r.checkpoint = j.at("checkpoint").get<std::string>();
      r.method = j.value("method", "");
      r.base_model = j.value("base_model", "");
      r.merge_recipe = j.value("merge_recipe", "");
      r.data_composition = j.value("data_composition", "");
      r.scores = j.at("scores").get<std::map<std::string, double>>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw std::runtime_error(fmt::format("{}:{}: {}", path.string(), line, e.what()));
    }
  });
  return out;
}

LeaderboardFormat leaderboard_format_from_string(const std::string& s) {
  if (s == "json") return LeaderboardFormat::json;
  if (s == "html") return LeaderboardFormat::html;
  throw std::invalid_argument(fmt::format("unknown leaderboard format '{}'", s));
}

std::string export_leaderboard(const std::vector<LeaderboardRecord>& records,
                               LeaderboardFormat format, const BenchmarkRegistry& registry) {
  if (records.empty()) throw std::invalid_argument("leaderboard needs at least one record");

  ScoreTable raw;
  for (const auto& r : records) {
    if (!raw.emplace(r.checkpoint, r.scores).second) {
      throw std::invalid_argument(fmt::format("checkpoint '{}' listed twice", r.checkpoint));
    }
  }
  const auto report = aggregate(normalize_scores(raw), registry);

  std::vector<Ranked> ranked;
  for (const auto& r : records) {
    auto row = std::find_if(report.rows.begin(), report.rows.end(),
                            [&](const AggregateRow& a) { return a.checkpoint == r.checkpoint; });
    ranked.push_back(Ranked{&r, &*row, &report.normalized.at(r.checkpoint)});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    const bool ha = a.row->va.has_value();
    const bool hb = b.row->va.has_value();
    if (ha != hb) return ha;
    if (ha && *a.row->va != *b.row->va) return *a.row->va > *b.row->va;
    return a.record->checkpoint < b.record->checkpoint;
  });

  // Registered benchmarks first (registry order), then any others by name.
  std::vector<std::string> columns;
  std::set<std::string> present;
  for (const auto& r : records) {
    for (const auto& [b, _] : r.scores) present.insert(b);
  }
  for (const auto& b : registry.all()) {
    if (present.count(b.id)) columns.push_back(b.id);
  }
  for (const auto& b : present) {
    if (registry.find(b) == nullptr) columns.push_back(b);
  }

  if (format == LeaderboardFormat::json) {
    json rows = json::array();
    int rank = 0;
    for (const auto& e : ranked) {
      const auto& r = *e.record;
      json j{{"rank", ++rank},
             {"checkpoint", r.checkpoint},
             {"method", r.method},
             {"base_model", r.base_model},
             {"merge_recipe", r.merge_recipe},
             {"data_composition", r.data_composition},
             {"scores", r.scores},
             {"normalized", *e.normalized},
             {"complete", e.row->complete()},
             {"missing", e.row->missing}};
      j["va"] = e.row->va ? json(*e.row->va) : json(nullptr);
      j["lca"] = e.row->lca ? json(*e.row->lca) : json(nullptr);
      rows.push_back(std::move(j));
    }
    return json{{"columns", columns}, {"records", rows}}.dump(2) + "\n";
  }

  std::string html;
  html += "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n";
  html += "<title>Leaderboard</title>\n</head>\n";
  html += "<body style=\"font-family:sans-serif;margin:2em;color:#222\">\n";
  html += "<h1 style=\"font-size:1.4em\">Leaderboard</h1>\n";
  html += "<table style=\"border-collapse:collapse;font-size:0.9em\">\n<thead>\n<tr>";
  const std::string th = "<th style=\"border-bottom:2px solid #444;padding:4px 8px;text-align:left\"";
  std::vector<std::string> headers{"Rank", "Checkpoint", "Method", "Base model", "Merge recipe",
                                   "Data composition", "VA", "LCA"};
  for (const auto& c : columns) headers.push_back(c);
  for (std::size_t i = 0; i < headers.size(); ++i) {
    html += fmt::format("{} data-column=\"{}\">{}</th>", th, i, escape_html(headers[i]));
  }
  html += "</tr>\n</thead>\n<tbody>\n";
  const std::string td = "<td style=\"border-bottom:1px solid #ddd;padding:4px 8px\"";
  auto number_cell = [&](const std::optional<double>& v) {
    if (!v) return fmt::format("{} data-sort=\"\">{}</td>", td, kMissingCell);
    return fmt::format("{} data-sort=\"{:.6f}\">{:.2f}</td>", td, *v, *v);
  };
  int rank = 0;
  for (const auto& e : ranked) {
    const auto& r = *e.record;
    html += e.row->complete() ? "<tr>" : "<tr data-incomplete=\"true\">";
    html += fmt::format("{}>{}</td>", td, ++rank);
    for (const auto* text : {&r.checkpoint, &r.method, &r.base_model, &r.merge_recipe,
                             &r.data_composition}) {
      html += fmt::format("{}>{}</td>", td, escape_html(*text));
    }
    html += number_cell(e.row->va);
    html += number_cell(e.row->lca);
    for (const auto& c : columns) {
      auto it = e.normalized->find(c);
      html += number_cell(it == e.normalized->end() ? std::nullopt : std::optional<double>(it->second));
    }
    html += "</tr>\n";
  }
  html += "</tbody>\n</table>\n";
  html += "<p style=\"font-size:0.8em;color:#666\">Scores are normalized to the best checkpoint per "
          "benchmark (100 = best). VA and LCA are left empty when a member benchmark is "
          "missing.</p>\n";
  html += "</body>\n</html>\n";
  return html;
}

std::string render_report_html(const AggregateReport& report) {
  std::set<std::string> bench_set;
  for (const auto& [ckpt, row] : report.normalized) {
    for (const auto& [b, v] : row) bench_set.insert(b);
  }
  const std::vector<std::string> benches(bench_set.begin(), bench_set.end());

  const std::string th = "<th style=\"border-bottom:2px solid #444;padding:4px 8px;text-align:left\">";
  const std::string td = "<td style=\"border-bottom:1px solid #ddd;padding:4px 8px\">";
  auto cell = [&](const std::optional<double>& v) {
    return v ? fmt::format("{}{:.2f}</td>", td, *v) : fmt::format("{}{}</td>", td, kMissingCell);
  };
  auto delta_cell = [&](const std::optional<double>& v) {
    return v ? fmt::format("{}{}</td>", td, format_signed(*v)) : fmt::format("{}{}</td>", td, kMissingCell);
  };

  std::string html;
  html += "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n";
  html += "<title>Evaluation report</title>\n</head>\n";
  html += "<body style=\"font-family:sans-serif;margin:2em;color:#222\">\n";
  html += "<h1 style=\"font-size:1.4em\">Evaluation report</h1>\n";
  if (report.baseline) {
    html += fmt::format("<p>Deltas are relative to <code>{}</code>.</p>\n", escape_html(*report.baseline));
  }
  html += "<table style=\"border-collapse:collapse;font-size:0.9em\">\n<thead>\n<tr>";
  std::vector<std::string> headers{"Checkpoint", "VA", "LCA"};
  if (report.baseline) {
    headers.push_back("VA delta");
    headers.push_back("LCA delta");
  }
  if (!report.run_sigma.empty()) {
    headers.push_back("VA sigma");
    headers.push_back("LCA sigma");
  }
  headers.insert(headers.end(), benches.begin(), benches.end());
  for (const auto& h : headers) html += th + escape_html(h) + "</th>";
  html += "</tr>\n</thead>\n<tbody>\n";
  for (const auto& row : report.rows) {
    html += row.complete() ? "<tr>" : "<tr data-incomplete=\"true\">";
    html += td + escape_html(row.checkpoint) + "</td>";
    html += cell(row.va);
    html += cell(row.lca);
    if (report.baseline) {
      html += delta_cell(row.va_delta);
      html += delta_cell(row.lca_delta);
    }
    if (!report.run_sigma.empty()) {
      auto it = report.run_sigma.find(row.checkpoint);
      html += cell(it == report.run_sigma.end() ? std::nullopt : it->second.first);
      html += cell(it == report.run_sigma.end() ? std::nullopt : it->second.second);
    }
    const auto& scores = report.normalized.at(row.checkpoint);
    for (const auto& b : benches) {
      auto it = scores.find(b);
      html += cell(it == scores.end() ? std::nullopt : std::optional<double>(it->second));
    }
    html += "</tr>\n";
  }
  html += "</tbody>\n</table>\n</body>\n</html>\n";
  return html;
}

}  // namespace lcdoc
