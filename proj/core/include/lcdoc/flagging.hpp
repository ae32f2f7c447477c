// SPDX-License-Identifier: Apache-2.0
//
// Benchmark item flagging, human decisions and the append-only review store.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lcdoc/corpus.hpp"
#include "lcdoc/genclient.hpp"

namespace lcdoc {

enum class AnswerKind { value, list, not_answerable, other };
enum class ItemStatus { active, removed };
enum class IssueKind { document_mismatch, underspecified, typo, incorrect_answer, ok };
enum class DecisionAction { keep, modify, remove };

std::string to_string(AnswerKind k);
std::string to_string(ItemStatus s);
std::string to_string(IssueKind k);
std::string to_string(DecisionAction a);
AnswerKind answer_kind_from_string(const std::string& s);
ItemStatus item_status_from_string(const std::string& s);
IssueKind issue_kind_from_string(const std::string& s);
DecisionAction decision_action_from_string(const std::string& s);

struct BenchmarkItem {
  std::string item_id;
  std::string question;
  std::string gold_answer;
  std::vector<std::string> accepted_answers;
  std::string doc_id;
  AnswerKind answer_kind = AnswerKind::value;
  ItemStatus status = ItemStatus::active;
  std::optional<std::string> question_style;  // e.g. "count", gates answer expansion
  std::vector<json> trail;                     // every applied decision

  bool operator==(const BenchmarkItem&) const = default;
};

/// Item record; `trail` is omitted. Exports add a `provenance` array.
json to_json(const BenchmarkItem& item);
BenchmarkItem benchmark_item_from_json(const json& j);

struct FlagEvidence {
  std::string page_id;
  std::string snippet;
  double relevance = 0.0;
};

struct FlagReport {
  std::string flag_id;
  std::string item_id;
  IssueKind issue_kind = IssueKind::ok;
  std::string rationale;
  std::vector<FlagEvidence> evidence;
  std::string created_by;
};

json to_json(const FlagReport& flag);
FlagReport flag_report_from_json(const json& j);

struct Decision {
  std::string flag_id;
  DecisionAction action = DecisionAction::keep;
  std::optional<std::string> new_question;
  std::optional<std::string> new_answer;
  std::vector<std::string> added_accepted_answers;
  std::string reviewer;
  std::string timestamp;

  /// Throws std::invalid_argument when the decision breaks its invariants.
  void validate() const;
};

json to_json(const Decision& d);
Decision decision_from_json(const json& j);

struct FlagConfig {
  std::string extract_model = "extractor";
  std::string verdict_model = "judge";
  std::size_t k = 3;
  std::size_t max_in_flight = 4;
  std::string run_id = "flag-run";
};

struct ParsedVerdict {
  IssueKind issue = IssueKind::underspecified;
  std::string rationale;
  bool ok = false;
};

/// "Issue: <kind>\nRationale: ..." parser.
ParsedVerdict parse_flag_verdict(const std::string& reply);

FlagReport flag_item(const BenchmarkItem& item, const Document& document,
                     ChatClient& extract_client, ChatClient& verdict_client,
                     const FlagConfig& config = {});

struct ExpansionConfig {
  bool enabled = true;
  /// Question styles eligible for expansion; unset means every style.
  std::optional<std::set<std::string>> styles;
};

const std::vector<std::string>& not_answerable_equivalents();

BenchmarkItem expand_accepted_answers(BenchmarkItem item, const ExpansionConfig& config = {});

BenchmarkItem apply_decision(BenchmarkItem item, const Decision& decision);

/// Export line for an active item: the item plus a `provenance` array of
/// its modify entries (omitted when empty).
json export_record(const BenchmarkItem& item);

struct ReviewStats {
  std::size_t pending = 0;
  std::size_t kept = 0;
  std::size_t modified = 0;
  std::size_t removed = 0;
};

json to_json(const ReviewStats& s);

/// Directory-backed review state:
///   items.jsonl      original benchmark items
///   flags.jsonl      flag reports
///   decisions.jsonl  append-only decision log (latest decision per flag wins)
///   snapshot.json    applied-entry count and digest of the log prefix
///   manifest.jsonl   optional corpus manifest used for page image refs
class ReviewStore {
public:
  static void initialize(const std::filesystem::path& dir, const std::vector<BenchmarkItem>& items,
                         const std::vector<FlagReport>& flags,
                         const std::optional<std::filesystem::path>& manifest = std::nullopt);

  /// Replays the decision log. Throws when the snapshot disagrees with the
  /// log or a record is malformed.
  explicit ReviewStore(std::filesystem::path dir);

  std::vector<json> list_flags(const std::optional<std::string>& status) const;
  std::optional<json> flag_detail(const std::string& flag_id) const;

  /// Validates, appends to the log and publishes the new state. Throws
  /// std::out_of_range for an unknown flag, std::invalid_argument for an
  /// invalid decision.
  json record_decision(const std::string& flag_id, Decision decision);

  ReviewStats stats() const;
  std::string export_jsonl() const;

  const std::string& provenance_note() const { return provenance_note_; }
  void set_provenance_note(std::string note) { provenance_note_ = std::move(note); }

private:
  struct State;

  std::shared_ptr<const State> current() const;
  std::shared_ptr<const State> build_state(const std::vector<Decision>& log) const;
  void write_snapshot(std::size_t applied, const std::string& log_text) const;

  std::filesystem::path dir_;
  std::vector<BenchmarkItem> items_;
  std::vector<FlagReport> flags_;
  std::optional<Corpus> corpus_;
  std::string provenance_note_ =
      "MMLongBenchDoc correction reference counts: 342 flagged, 251 modified, 16 removed";

  mutable std::mutex state_mutex_;
  std::shared_ptr<const State> state_;
  std::mutex write_mutex_;
  std::vector<Decision> log_;
  std::string log_text_;
};

/// Flag status label for the listing filter: pending, kept, modified, removed.
std::string flag_status_label(const std::optional<DecisionAction>& action);

}  // namespace lcdoc
