// SPDX-License-Identifier: Apache-2.0

#include "lcdoc/evalagg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace lcdoc {

namespace {

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    int len = 1;
    char32_t cp = c;
    if (c >= 0xf0 && c < 0xf8) {
      len = 4;
      cp = c & 0x07;
    } else if (c >= 0xe0) {
      len = 3;
      cp = c & 0x0f;
    } else if (c >= 0xc0) {
      len = 2;
      cp = c & 0x1f;
    }
    if (len > 1 && i + static_cast<std::size_t>(len) <= s.size()) {
      bool valid = true;
      for (int k = 1; k < len; ++k) {
        const auto cc = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
        if ((cc & 0xc0) != 0x80) valid = false;
        cp = (cp << 6) | (cc & 0x3f);
      }
      if (valid) {
        out.push_back(cp);
        i += static_cast<std::size_t>(len);
        continue;
      }
    }
    // Invalid or truncated sequences count as one code point per byte.
    out.push_back(c);
    ++i;
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

char32_t lower_cp(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c >= 0xc0 && c <= 0xde && c != 0xd7) return c + 32;
  return c;
}

std::size_t edit_distance(const std::u32string& a, const std::u32string& b) {
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::u32string lowered(std::string_view s) {
  auto cps = decode_utf8(s);
  for (auto& c : cps) c = lower_cp(c);
  return cps;
}

}  // namespace

std::size_t levenshtein(std::string_view a, std::string_view b) {
  return edit_distance(decode_utf8(a), decode_utf8(b));
}

std::string lower_latin1(std::string_view text) {
  std::string out;
  for (auto c : lowered(text)) append_utf8(out, c);
  return out;
}

double anls(std::string_view prediction, const std::vector<std::string>& golds, double tau) {
  if (golds.empty()) throw std::invalid_argument("anls needs at least one gold answer");
  const auto pred = lowered(prediction);
  double best = 0.0;
  for (const auto& g : golds) {
    const auto gold = lowered(g);
    double nls;
    if (pred.empty() && gold.empty()) {
      nls = 1.0;
    } else if (pred.empty() || gold.empty()) {
      nls = 0.0;
    } else {
      const auto d = edit_distance(pred, gold);
      nls = 1.0 - static_cast<double>(d) / static_cast<double>(std::max(pred.size(), gold.size()));
    }
    best = std::max(best, nls >= tau ? nls : 0.0);
  }
  return best;
}

BenchmarkRegistry BenchmarkRegistry::defaults() {
  BenchmarkRegistry r;
  r.add({"MMLongBenchDoc", "f1", "MMLongBenchDoc", true, true});
  r.add({"MMLBD-C", "f1", "MMLBD-C", true, true});
  r.add({"MMLongBench-32K", "accuracy", "MMLongBench", true, true});
  r.add({"MMLongBench-128K", "accuracy", "MMLongBench", true, true});
  r.add({"MMLongBench", "accuracy", "MMLongBench", true, true});
  r.add({"DUDE", "anls", "DUDE", true, true});
  r.add({"SlideVQA", "anls", "SlideVQA", true, true});
  r.add({"HELMET-32K", "score", "HELMET", false, true});
  r.add({"HELMET-128K", "score", "HELMET", false, true});
  r.add({"HELMET", "score", "HELMET", false, true});
  r.add({"LongBench-v2", "accuracy", "LongBench-v2", false, true});
  r.add({"LongBench v2", "accuracy", "LongBench-v2", false, true});
  return r;
}

void BenchmarkRegistry::add(BenchmarkInfo info) {
  if (find(info.id) != nullptr) {
    throw std::invalid_argument(fmt::format("benchmark '{}' registered twice", info.id));
  }
  if (info.group.empty()) info.group = info.id;
  benchmarks_.push_back(std::move(info));
}

const BenchmarkInfo* BenchmarkRegistry::find(const std::string& id) const {
  for (const auto& b : benchmarks_) {
    if (b.id == id) return &b;
  }
  return nullptr;
}

namespace {

std::vector<std::string> groups_where(const std::vector<BenchmarkInfo>& all, bool lca) {
  std::vector<std::string> out;
  for (const auto& b : all) {
    const bool member = lca ? b.lca_member : b.va_member;
    if (member && std::find(out.begin(), out.end(), b.group) == out.end()) out.push_back(b.group);
  }
  return out;
}

}  // namespace

std::vector<std::string> BenchmarkRegistry::va_groups() const { return groups_where(benchmarks_, false); }
std::vector<std::string> BenchmarkRegistry::lca_groups() const { return groups_where(benchmarks_, true); }

std::vector<ScoreRecord> load_score_records(const std::filesystem::path& path) {
  std::vector<ScoreRecord> out;
  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    try {
      ScoreRecord r;
      r.checkpoint = j.at("checkpoint").get<std::string>();
      r.benchmark = j.at("benchmark").get<std::string>();
      r.score = j.at("score").get<double>();
      if (j.contains("run_id") && !j.at("run_id").is_null()) {
        const auto& id = j.at("run_id");
        r.run_id = id.is_string() ? id.get<std::string>() : id.dump();
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw std::runtime_error(fmt::format("{}:{}: {}", path.string(), line, e.what()));
    }
  });
  return out;
}

std::map<std::string, ScoreTable> tables_by_run(const std::vector<ScoreRecord>& records) {
  std::map<std::string, ScoreTable> out;
  for (const auto& r : records) {
    if (!std::isfinite(r.score)) {
      throw std::invalid_argument(
          fmt::format("{} / {}: score is not finite", r.checkpoint, r.benchmark));
    }
    auto& row = out[r.run_id][r.checkpoint];
    if (!row.emplace(r.benchmark, r.score).second) {
      throw std::invalid_argument(fmt::format("duplicate score for {} / {} in run '{}'",
                                              r.checkpoint, r.benchmark, r.run_id));
    }
  }
  return out;
}

ScoreTable normalize_scores(const ScoreTable& table) {
  std::map<std::string, double> col_max;
  for (const auto& [ckpt, row] : table) {
    for (const auto& [bench, score] : row) {
      if (score < 0.0 || !std::isfinite(score)) {
        throw std::invalid_argument(
            fmt::format("{} / {}: raw score {} is not a non-negative number", ckpt, bench, score));
      }
      auto [it, inserted] = col_max.emplace(bench, score);
      if (!inserted) it->second = std::max(it->second, score);
    }
  }
  for (const auto& [bench, mx] : col_max) {
    if (mx <= 0.0) {
      throw std::invalid_argument(fmt::format("benchmark {} has no positive score to normalize by", bench));
    }
  }
  ScoreTable out;
  for (const auto& [ckpt, row] : table) {
    auto& orow = out[ckpt];
    for (const auto& [bench, score] : row) {
      const double mx = col_max.at(bench);
      orow[bench] = score == mx ? 100.0 : score * (100.0 / mx);
    }
  }
  return out;
}

std::map<std::string, double> group_scores(const std::map<std::string, double>& row,
                                           const BenchmarkRegistry& registry) {
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& b : registry.all()) {
    auto it = row.find(b.id);
    if (it == row.end()) continue;
    auto& slot = acc[b.group];
    slot.first += it->second;
    slot.second += 1;
  }
  std::map<std::string, double> out;
  for (const auto& [group, s] : acc) out[group] = s.first / s.second;
  return out;
}

namespace {

std::optional<double> mean_over(const std::map<std::string, double>& groups,
                                const std::vector<std::string>& members,
                                std::vector<std::string>& missing) {
  double total = 0.0;
  bool complete = true;
  for (const auto& m : members) {
    auto it = groups.find(m);
    if (it == groups.end()) {
      complete = false;
      if (std::find(missing.begin(), missing.end(), m) == missing.end()) missing.push_back(m);
      continue;
    }
    total += it->second;
  }
  if (!complete || members.empty()) return std::nullopt;
  return total / static_cast<double>(members.size());
}

}  // namespace

AggregateReport aggregate(const ScoreTable& normalized, const BenchmarkRegistry& registry,
                          const std::optional<std::string>& baseline) {
  AggregateReport report;
  report.normalized = normalized;
  report.baseline = baseline;
  const auto va_members = registry.va_groups();
  const auto lca_members = registry.lca_groups();
  for (const auto& [ckpt, row] : normalized) {
    for (const auto& [bench, _] : row) {
      if (registry.find(bench) == nullptr) {
        spdlog::warn("benchmark {} is not registered; it does not enter any aggregate", bench);
      }
    }
    AggregateRow r;
    r.checkpoint = ckpt;
    const auto groups = group_scores(row, registry);
    r.va = mean_over(groups, va_members, r.missing);
    r.lca = mean_over(groups, lca_members, r.missing);
    report.rows.push_back(std::move(r));
  }
  if (baseline) {
    auto base = std::find_if(report.rows.begin(), report.rows.end(),
                             [&](const AggregateRow& r) { return r.checkpoint == *baseline; });
    if (base == report.rows.end()) {
      throw std::invalid_argument(fmt::format("baseline checkpoint '{}' is not in the table", *baseline));
    }
    const auto bva = base->va;
    const auto blca = base->lca;
    for (auto& r : report.rows) {
      if (r.va && bva) r.va_delta = *r.va - *bva;
      if (r.lca && blca) r.lca_delta = *r.lca - *blca;
    }
  }
  return report;
}

double run_variance(const std::vector<double>& values) {
  if (values.size() < 2) {
    throw std::invalid_argument(fmt::format("run variance needs at least 2 runs, got {}", values.size()));
  }
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / n);
}

void attach_run_variance(AggregateReport& report, const std::map<std::string, ScoreTable>& runs,
                         const BenchmarkRegistry& registry) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> series;
  for (const auto& [run_id, table] : runs) {
    const auto agg = aggregate(normalize_scores(table), registry);
    for (const auto& r : agg.rows) {
      if (r.va) series[r.checkpoint].first.push_back(*r.va);
      if (r.lca) series[r.checkpoint].second.push_back(*r.lca);
    }
  }
  for (const auto& [ckpt, s] : series) {
    std::optional<double> va_sigma;
    std::optional<double> lca_sigma;
    if (s.first.size() >= 2) va_sigma = run_variance(s.first);
    if (s.second.size() >= 2) lca_sigma = run_variance(s.second);
    if (va_sigma || lca_sigma) report.run_sigma[ckpt] = {va_sigma, lca_sigma};
  }
}

std::string format_signed(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  double rounded = std::round(value * scale) / scale;
  if (rounded == 0.0) rounded = 0.0;  // drop negative zero
  return fmt::format("{}{:.{}f}", rounded >= 0.0 ? "+" : "", rounded, decimals);
}

json to_json(const AggregateReport& report) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json rows = json::array();
  for (const auto& r : report.rows) {
    json j{{"checkpoint", r.checkpoint},
           {"va", opt(r.va)},
           {"lca", opt(r.lca)},
           {"complete", r.complete()},
           {"missing", r.missing}};
    if (report.baseline) {
      j["va_delta"] = r.va_delta ? json(format_signed(*r.va_delta)) : json(nullptr);
      j["lca_delta"] = r.lca_delta ? json(format_signed(*r.lca_delta)) : json(nullptr);
    }
    if (auto it = report.run_sigma.find(r.checkpoint); it != report.run_sigma.end()) {
      j["va_sigma"] = opt(it->second.first);
      j["lca_sigma"] = opt(it->second.second);
    }
    rows.push_back(std::move(j));
  }
  json out{{"normalized", report.normalized}, {"aggregates", rows}};
  out["baseline"] = report.baseline ? json(*report.baseline) : json(nullptr);
  return out;
}

}  // namespace lcdoc
