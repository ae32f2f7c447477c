// SPDX-License-Identifier: Apache-2.0
//
// Page corpus: rendered documents, their pages and hard-negative neighbor
// lists. A Corpus is immutable after loading and may be shared by any
// number of reader threads.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lcdoc/message.hpp"

namespace lcdoc {

enum class ContentKind { normal, table_of_contents, bibliography };

std::string to_string(ContentKind kind);
ContentKind content_kind_from_string(const std::string& s);

struct Page {
  std::string page_id;
  std::string doc_id;
  std::int64_t index = 0;
  std::string image_ref;
  std::int64_t width_px = 0;
  std::int64_t height_px = 0;
  std::int64_t word_count = 0;
  std::optional<std::string> parsed_text;
  ContentKind content_kind = ContentKind::normal;

  PageRef ref() const { return PageRef{page_id, doc_id, index, image_ref}; }

  /// Parsed text, or std::runtime_error naming the page when absent.
  const std::string& require_text() const;
};

struct Document {
  std::string doc_id;
  std::string source_url;
  std::string category;
  std::string language;
  std::vector<Page> pages;

  std::int64_t page_count() const { return static_cast<std::int64_t>(pages.size()); }
};

struct Neighbor {
  std::string page_id;
  double similarity = 0.0;
};

inline constexpr std::size_t kMaxNeighbors = 128;
inline constexpr std::size_t kNearBandSize = 32;

/// page_id -> neighbors sorted by similarity descending, ties by ascending
/// neighbor page_id.
class NeighborIndex {
public:
  /// Validates and canonicalizes one list. Throws on self-reference,
  /// similarity outside [-1, 1] or more than 128 entries.
  void set(const std::string& page_id, std::vector<Neighbor> neighbors);

  bool contains(const std::string& page_id) const { return lists_.count(page_id) != 0; }
  const std::vector<Neighbor>& at(const std::string& page_id) const;
  std::size_t size() const { return lists_.size(); }
  const std::map<std::string, std::vector<Neighbor>>& lists() const { return lists_; }

private:
  std::map<std::string, std::vector<Neighbor>> lists_;
};

enum class NeighborBand { within_first_32, outside_first_32, any };

NeighborBand neighbor_band_from_string(const std::string& s);

class Corpus {
public:
  Corpus() = default;
  explicit Corpus(std::vector<Document> documents);

  const std::vector<Document>& documents() const { return documents_; }
  const Document& document(const std::string& doc_id) const;
  const Page& page(const std::string& page_id) const;
  bool has_page(const std::string& page_id) const { return page_lookup_.count(page_id) != 0; }
  std::size_t page_total() const { return page_lookup_.size(); }

  std::optional<NeighborIndex> neighbors;

private:
  std::vector<Document> documents_;
  std::unordered_map<std::string, std::size_t> doc_lookup_;
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> page_lookup_;
};

/// Loads a JSONL manifest of document headers and page records. Records may
/// arrive in any order; pages are assembled by index. Errors name the line
/// (malformed records) or the document (invariant violations).
Corpus load_manifest(const std::filesystem::path& path);

/// Loads a neighbor JSONL file: {page_id, neighbors: [[id, similarity], ...]}.
NeighborIndex load_neighbors(const std::filesystem::path& path);

/// Canonical manifest: each document header followed by its pages in index
/// order; keys sorted within each record.
std::string serialize_manifest(const Corpus& corpus);
std::string serialize_neighbors(const NeighborIndex& index);

/// Pages suitable for question generation: more than 100 words and normal
/// content (not a table of contents or bibliography).
std::set<std::string> filter_question_pages(const Corpus& corpus);
bool is_question_page(const Page& page);

/// Up to k neighbors from the requested rank band, in similarity order.
std::vector<Neighbor> neighbor_topk(const NeighborIndex& index, const std::string& page_id,
                                    std::size_t k, NeighborBand band);

}  // namespace lcdoc
