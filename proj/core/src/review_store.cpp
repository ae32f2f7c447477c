// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <fmt/format.h>

#include "lcdoc/flagging.hpp"

namespace lcdoc {

namespace {

constexpr std::size_t kSnapshotEvery = 16;

const char* kItemsFile = "items.jsonl";
const char* kFlagsFile = "flags.jsonl";
const char* kDecisionsFile = "decisions.jsonl";
const char* kSnapshotFile = "snapshot.json";
const char* kManifestFile = "manifest.jsonl";

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string status_filter(const std::string& s) {
  if (s == "pending") return s;
  if (s == "kept" || s == "keep") return "kept";
  if (s == "modified" || s == "modify") return "modified";
  if (s == "removed" || s == "remove") return "removed";
  throw std::invalid_argument(fmt::format("unknown flag status '{}'", s));
}

}  // namespace

struct ReviewStore::State {
  std::vector<BenchmarkItem> items;  // current, original order
  std::unordered_map<std::string, std::size_t> item_index;
  std::unordered_map<std::string, Decision> effective;
  std::unordered_map<std::string, std::vector<std::size_t>> history;  // flag -> log indices
  std::vector<Decision> log;
  ReviewStats stats;
};

void ReviewStore::initialize(const std::filesystem::path& dir, const std::vector<BenchmarkItem>& items,
                             const std::vector<FlagReport>& flags,
                             const std::optional<std::filesystem::path>& manifest) {
  const auto log = dir / kDecisionsFile;
  if (std::filesystem::exists(log) && std::filesystem::file_size(log) > 0) {
    throw std::runtime_error(
        fmt::format("{} already holds review decisions; refusing to overwrite", dir.string()));
  }
  std::vector<json> item_records;
  for (const auto& i : items) item_records.push_back(to_json(i));
  std::vector<json> flag_records;
  for (const auto& f : flags) flag_records.push_back(to_json(f));
  write_file(dir / kItemsFile, to_jsonl(item_records));
  write_file(dir / kFlagsFile, to_jsonl(flag_records));
  write_file(log, "");
  if (manifest) std::filesystem::copy_file(*manifest, dir / kManifestFile,
                                           std::filesystem::copy_options::overwrite_existing);
  write_file(dir / kSnapshotFile,
             json{{"applied", 0}, {"log_sha256", sha256_hex("")}}.dump() + "\n");
}

ReviewStore::ReviewStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  auto corrupt = [&](const std::string& why) {
    return std::runtime_error(fmt::format("review store {} is corrupt: {}", dir_.string(), why));
  };

  for_each_jsonl(dir_ / kItemsFile, [&](std::size_t, const json& j) {
    items_.push_back(benchmark_item_from_json(j));
  });
  std::unordered_map<std::string, bool> item_ids;
  for (const auto& i : items_) {
    if (item_ids.count(i.item_id)) throw corrupt(fmt::format("duplicate item {}", i.item_id));
    item_ids[i.item_id] = true;
  }
  for_each_jsonl(dir_ / kFlagsFile, [&](std::size_t, const json& j) {
    flags_.push_back(flag_report_from_json(j));
  });
  std::unordered_map<std::string, bool> flag_ids;
  for (const auto& f : flags_) {
    if (flag_ids.count(f.flag_id)) throw corrupt(fmt::format("duplicate flag {}", f.flag_id));
    if (!item_ids.count(f.item_id)) {
      throw corrupt(fmt::format("flag {} refers to unknown item {}", f.flag_id, f.item_id));
    }
    flag_ids[f.flag_id] = true;
  }
  if (std::filesystem::exists(dir_ / kManifestFile)) corpus_ = load_manifest(dir_ / kManifestFile);

  const auto log_path = dir_ / kDecisionsFile;
  log_text_ = std::filesystem::exists(log_path) ? read_file(log_path) : std::string{};
  std::vector<std::size_t> line_ends;
  std::size_t pos = 0;
  while (pos < log_text_.size()) {
    const auto nl = log_text_.find('\n', pos);
    if (nl == std::string::npos) throw corrupt("decision log ends with a partial record");
    const auto line = log_text_.substr(pos, nl - pos);
    try {
      auto d = decision_from_json(json::parse(line));
      if (!flag_ids.count(d.flag_id)) throw corrupt(fmt::format("decision for unknown flag {}", d.flag_id));
      d.validate();
      log_.push_back(std::move(d));
    } catch (const std::runtime_error&) {
      throw;
    } catch (const std::exception& e) {
      throw corrupt(fmt::format("decision log line {}: {}", log_.size() + 1, e.what()));
    }
    pos = nl + 1;
    line_ends.push_back(pos);
  }

  const auto snap_path = dir_ / kSnapshotFile;
  if (std::filesystem::exists(snap_path)) {
    json snap;
    try {
      snap = json::parse(read_file(snap_path));
    } catch (const json::exception& e) {
      throw corrupt(fmt::format("snapshot: {}", e.what()));
    }
    const auto applied = snap.value("applied", std::size_t{0});
    if (applied > log_.size()) {
      throw corrupt(fmt::format("snapshot covers {} decisions, log holds {}", applied, log_.size()));
    }
    const auto prefix = applied == 0 ? std::string{} : log_text_.substr(0, line_ends[applied - 1]);
    if (sha256_hex(prefix) != snap.value("log_sha256", "")) {
      throw corrupt("decision log does not match its snapshot digest");
    }
  }
  state_ = build_state(log_);
  write_snapshot(log_.size(), log_text_);
}

std::shared_ptr<const ReviewStore::State> ReviewStore::build_state(
    const std::vector<Decision>& log) const {
  auto state = std::make_shared<State>();
  state->log = log;
  std::unordered_map<std::string, std::size_t> latest;
  for (std::size_t i = 0; i < log.size(); ++i) {
    latest[log[i].flag_id] = i;
    state->history[log[i].flag_id].push_back(i);
  }
  state->items = items_;
  for (std::size_t i = 0; i < items_.size(); ++i) state->item_index[items_[i].item_id] = i;

  std::unordered_map<std::string, const FlagReport*> flag_by_id;
  for (const auto& f : flags_) flag_by_id[f.flag_id] = &f;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& d = log[i];
    if (latest.at(d.flag_id) != i) continue;
    state->effective[d.flag_id] = d;
    auto& item = state->items[state->item_index.at(flag_by_id.at(d.flag_id)->item_id)];
    item = apply_decision(std::move(item), d);
  }
  for (const auto& f : flags_) {
    auto it = state->effective.find(f.flag_id);
    if (it == state->effective.end()) {
      ++state->stats.pending;
    } else if (it->second.action == DecisionAction::keep) {
      ++state->stats.kept;
    } else if (it->second.action == DecisionAction::modify) {
      ++state->stats.modified;
    } else {
      ++state->stats.removed;
    }
  }
  return state;
}

void ReviewStore::write_snapshot(std::size_t applied, const std::string& log_text) const {
  const auto tmp = dir_ / (std::string(kSnapshotFile) + ".tmp");
  write_file(tmp, json{{"applied", applied}, {"log_sha256", sha256_hex(log_text)}}.dump() + "\n");
  std::filesystem::rename(tmp, dir_ / kSnapshotFile);
}

std::shared_ptr<const ReviewStore::State> ReviewStore::current() const {
  std::lock_guard lock(state_mutex_);
  return state_;
}

std::vector<json> ReviewStore::list_flags(const std::optional<std::string>& status) const {
  const auto wanted = status && !status->empty() ? std::optional(status_filter(*status)) : std::nullopt;
  const auto state = current();
  std::vector<json> out;
  for (const auto& f : flags_) {
    auto it = state->effective.find(f.flag_id);
    const auto label = flag_status_label(it == state->effective.end()
                                             ? std::nullopt
                                             : std::optional(it->second.action));
    if (wanted && *wanted != label) continue;
    const auto& item = state->items[state->item_index.at(f.item_id)];
    out.push_back(json{{"flag_id", f.flag_id},
                       {"item_id", f.item_id},
                       {"issue_kind", to_string(f.issue_kind)},
                       {"rationale", f.rationale},
                       {"status", label},
                       {"question", item.question}});
  }
  return out;
}

std::optional<json> ReviewStore::flag_detail(const std::string& flag_id) const {
  const auto state = current();
  auto f = std::find_if(flags_.begin(), flags_.end(),
                        [&](const FlagReport& r) { return r.flag_id == flag_id; });
  if (f == flags_.end()) return std::nullopt;
  const auto& item = state->items[state->item_index.at(f->item_id)];

  json pages = json::array();
  if (corpus_) {
    for (const auto& doc : corpus_->documents()) {
      if (doc.doc_id != item.doc_id) continue;
      for (const auto& p : doc.pages) {
        pages.push_back({{"page_id", p.page_id}, {"index", p.index}, {"image_url", p.image_ref}});
      }
    }
  }
  json decisions = json::array();
  if (auto h = state->history.find(flag_id); h != state->history.end()) {
    for (auto i : h->second) decisions.push_back(to_json(state->log[i]));
  }
  auto eff = state->effective.find(flag_id);
  const auto label = flag_status_label(eff == state->effective.end()
                                           ? std::nullopt
                                           : std::optional(eff->second.action));
  auto item_json = to_json(item);
  item_json["trail"] = item.trail;
  auto flag_json = to_json(*f);
  return json{{"flag", flag_json},
              {"item", item_json},
              {"status", label},
              {"evidence", flag_json.at("evidence")},
              {"pages", pages},
              {"decisions", decisions}};
}

json ReviewStore::record_decision(const std::string& flag_id, Decision decision) {
  std::lock_guard writer(write_mutex_);
  if (std::none_of(flags_.begin(), flags_.end(),
                   [&](const FlagReport& f) { return f.flag_id == flag_id; })) {
    throw std::out_of_range(fmt::format("unknown flag '{}'", flag_id));
  }
  if (!decision.flag_id.empty() && decision.flag_id != flag_id) {
    throw std::invalid_argument(
        fmt::format("decision names flag {} but was posted to {}", decision.flag_id, flag_id));
  }
  decision.flag_id = flag_id;
  if (decision.timestamp.empty()) decision.timestamp = utc_now();
  decision.validate();

  auto next_log = log_;
  next_log.push_back(decision);
  auto next_state = build_state(next_log);

  const auto line = to_json(decision).dump() + "\n";
  {
    std::ofstream out(dir_ / kDecisionsFile, std::ios::binary | std::ios::app);
    out << line;
    out.flush();
    if (!out) throw std::runtime_error("failed to append to the decision log");
  }
  log_ = std::move(next_log);
  log_text_ += line;
  if (log_.size() % kSnapshotEvery == 0) write_snapshot(log_.size(), log_text_);
  {
    std::lock_guard lock(state_mutex_);
    state_ = next_state;
  }
  const auto& item = next_state->items[next_state->item_index.at(
      std::find_if(flags_.begin(), flags_.end(),
                   [&](const FlagReport& f) { return f.flag_id == flag_id; })
          ->item_id)];
  return json{{"flag_id", flag_id},
              {"status", flag_status_label(decision.action)},
              {"item", export_record(item)},
              {"stats", to_json(next_state->stats)}};
}

ReviewStats ReviewStore::stats() const { return current()->stats; }

std::string ReviewStore::export_jsonl() const {
  const auto state = current();
  std::string out;
  for (const auto& item : state->items) {
    if (item.status == ItemStatus::removed) continue;
    out += export_record(item).dump();
    out += '\n';
  }
  return out;
}

}  // namespace lcdoc
