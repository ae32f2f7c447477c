// SPDX-License-Identifier: Apache-2.0

#include "lcdoc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace lcdoc {

namespace {

constexpr std::int64_t kMinQuestionWords = 100;

template <typename T>
T field(const json& j, const char* name, std::size_t line) {
  if (!j.contains(name)) {
    throw std::runtime_error(fmt::format("line {}: missing field '{}'", line, name));
  }
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw std::runtime_error(fmt::format("line {}: field '{}' has wrong type", line, name));
  }
}

struct PendingDoc {
  Document doc;
  std::int64_t declared_pages = 0;
  std::size_t order = 0;
};

}  // namespace

std::string to_string(ContentKind kind) {
  switch (kind) {
    case ContentKind::normal: return "normal";
    case ContentKind::table_of_contents: return "table_of_contents";
    case ContentKind::bibliography: return "bibliography";
  }
  return "normal";
}

ContentKind content_kind_from_string(const std::string& s) {
  if (s == "normal") return ContentKind::normal;
  if (s == "table_of_contents") return ContentKind::table_of_contents;
  if (s == "bibliography") return ContentKind::bibliography;
  throw std::invalid_argument(fmt::format("unknown content_kind '{}'", s));
}

const std::string& Page::require_text() const {
  if (!parsed_text || parsed_text->empty()) {
    throw std::runtime_error(fmt::format("page {} has no parsed_text", page_id));
  }
  return *parsed_text;
}

void NeighborIndex::set(const std::string& page_id, std::vector<Neighbor> neighbors) {
  if (neighbors.size() > kMaxNeighbors) {
    throw std::invalid_argument(
        fmt::format("page {}: {} neighbors exceeds {}", page_id, neighbors.size(), kMaxNeighbors));
  }
  for (const auto& n : neighbors) {
    if (n.page_id == page_id) {
      throw std::invalid_argument(fmt::format("page {} lists itself as a neighbor", page_id));
    }
    if (!std::isfinite(n.similarity) || n.similarity < -1.0 || n.similarity > 1.0) {
      throw std::invalid_argument(
          fmt::format("page {}: similarity {} outside [-1, 1]", page_id, n.similarity));
    }
  }
  std::sort(neighbors.begin(), neighbors.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.page_id < b.page_id;
  });
  lists_[page_id] = std::move(neighbors);
}

const std::vector<Neighbor>& NeighborIndex::at(const std::string& page_id) const {
  auto it = lists_.find(page_id);
  if (it == lists_.end()) {
    throw std::out_of_range(fmt::format("unknown page_id '{}' in neighbor index", page_id));
  }
  return it->second;
}

NeighborBand neighbor_band_from_string(const std::string& s) {
  if (s == "within_first_32") return NeighborBand::within_first_32;
  if (s == "outside_first_32") return NeighborBand::outside_first_32;
  if (s == "any") return NeighborBand::any;
  throw std::invalid_argument(fmt::format("unknown neighbor band '{}'", s));
}

Corpus::Corpus(std::vector<Document> documents) : documents_(std::move(documents)) {
  for (std::size_t d = 0; d < documents_.size(); ++d) {
    const auto& doc = documents_[d];
    if (!doc_lookup_.emplace(doc.doc_id, d).second) {
      throw std::runtime_error(fmt::format("duplicate doc_id '{}'", doc.doc_id));
    }
    if (doc.pages.empty()) {
      throw std::runtime_error(fmt::format("document {} has no pages", doc.doc_id));
    }
    for (std::size_t p = 0; p < doc.pages.size(); ++p) {
      const auto& page = doc.pages[p];
      if (page.index != static_cast<std::int64_t>(p)) {
        throw std::runtime_error(fmt::format(
            "document {}: page indices not contiguous (expected {}, found {})", doc.doc_id, p,
            page.index));
      }
      if (page.doc_id != doc.doc_id) {
        throw std::runtime_error(
            fmt::format("page {} claims doc {} but is listed under {}", page.page_id, page.doc_id,
                        doc.doc_id));
      }
      if (page.image_ref.empty()) {
        throw std::runtime_error(fmt::format("page {}: empty image_ref", page.page_id));
      }
      if (page.width_px <= 0 || page.height_px <= 0) {
        throw std::runtime_error(fmt::format("page {}: non-positive dimensions", page.page_id));
      }
      if (page.word_count < 0) {
        throw std::runtime_error(fmt::format("page {}: negative word_count", page.page_id));
      }
      if (!page_lookup_.emplace(page.page_id, std::make_pair(d, p)).second) {
        throw std::runtime_error(fmt::format("duplicate page_id '{}'", page.page_id));
      }
    }
  }
}

const Document& Corpus::document(const std::string& doc_id) const {
  auto it = doc_lookup_.find(doc_id);
  if (it == doc_lookup_.end()) {
    throw std::out_of_range(fmt::format("unknown doc_id '{}'", doc_id));
  }
  return documents_[it->second];
}

const Page& Corpus::page(const std::string& page_id) const {
  auto it = page_lookup_.find(page_id);
  if (it == page_lookup_.end()) {
    throw std::out_of_range(fmt::format("unknown page_id '{}'", page_id));
  }
  return documents_[it->second.first].pages[it->second.second];
}

Corpus load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error(fmt::format("manifest not found: {}", path.string()));
  }
  std::map<std::string, PendingDoc> docs;
  std::vector<std::pair<Page, std::size_t>> pages;
  std::size_t order = 0;

  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    if (!j.is_object()) {
      throw std::runtime_error(fmt::format("line {}: record is not an object", line));
    }
    const auto kind = field<std::string>(j, "kind", line);
    if (kind == "doc") {
      PendingDoc pending;
      pending.doc.doc_id = field<std::string>(j, "doc_id", line);
      pending.doc.source_url = field<std::string>(j, "source_url", line);
      pending.doc.category = field<std::string>(j, "category", line);
      pending.doc.language = field<std::string>(j, "language", line);
      pending.declared_pages = field<std::int64_t>(j, "page_count", line);
      pending.order = order++;
      if (pending.declared_pages < 1) {
        throw std::runtime_error(
            fmt::format("line {}: document {} has page_count < 1", line, pending.doc.doc_id));
      }
      const std::string id = pending.doc.doc_id;
      if (!docs.emplace(id, std::move(pending)).second) {
        throw std::runtime_error(fmt::format("line {}: duplicate doc_id '{}'", line, id));
      }
    } else if (kind == "page") {
      Page page;
      page.page_id = field<std::string>(j, "page_id", line);
      page.doc_id = field<std::string>(j, "doc_id", line);
      page.index = field<std::int64_t>(j, "index", line);
      page.image_ref = field<std::string>(j, "image_ref", line);
      page.width_px = field<std::int64_t>(j, "width_px", line);
      page.height_px = field<std::int64_t>(j, "height_px", line);
      page.word_count = field<std::int64_t>(j, "word_count", line);
      if (j.contains("parsed_text") && !j.at("parsed_text").is_null()) {
        page.parsed_text = field<std::string>(j, "parsed_text", line);
      }
      try {
        page.content_kind = content_kind_from_string(field<std::string>(j, "content_kind", line));
      } catch (const std::invalid_argument& e) {
        throw std::runtime_error(fmt::format("line {}: {}", line, e.what()));
      }
      if (page.image_ref.empty()) {
        throw std::runtime_error(fmt::format("line {}: empty image_ref", line));
      }
      if (page.width_px <= 0 || page.height_px <= 0) {
        throw std::runtime_error(fmt::format("line {}: non-positive page dimensions", line));
      }
      if (page.word_count < 0 || page.index < 0) {
        throw std::runtime_error(fmt::format("line {}: negative index or word_count", line));
      }
      pages.emplace_back(std::move(page), line);
    } else {
      throw std::runtime_error(fmt::format("line {}: unknown record kind '{}'", line, kind));
    }
  });

  for (auto& [page, line] : pages) {
    auto it = docs.find(page.doc_id);
    if (it == docs.end()) {
      throw std::runtime_error(
          fmt::format("line {}: page {} references unknown doc_id '{}'", line, page.page_id,
                      page.doc_id));
    }
    it->second.doc.pages.push_back(std::move(page));
  }

  std::vector<PendingDoc*> ordered;
  for (auto& [id, pending] : docs) ordered.push_back(&pending);
  std::sort(ordered.begin(), ordered.end(),
            [](const PendingDoc* a, const PendingDoc* b) { return a->order < b->order; });

  std::vector<Document> documents;
  for (auto* pending : ordered) {
    auto& doc = pending->doc;
    std::stable_sort(doc.pages.begin(), doc.pages.end(),
                     [](const Page& a, const Page& b) { return a.index < b.index; });
    for (std::size_t i = 0; i < doc.pages.size(); ++i) {
      if (doc.pages[i].index != static_cast<std::int64_t>(i)) {
        throw std::runtime_error(fmt::format(
            "document {}: page indices are not contiguous 0..{} (found index {} at position {})",
            doc.doc_id, pending->declared_pages - 1, doc.pages[i].index, i));
      }
    }
    if (doc.page_count() != pending->declared_pages) {
      throw std::runtime_error(fmt::format("document {}: page_count {} but {} pages present",
                                           doc.doc_id, pending->declared_pages, doc.page_count()));
    }
    documents.push_back(std::move(doc));
  }
  return Corpus(std::move(documents));
}

NeighborIndex load_neighbors(const std::filesystem::path& path) {
  NeighborIndex index;
  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    const auto page_id = field<std::string>(j, "page_id", line);
    if (index.contains(page_id)) {
      throw std::runtime_error(fmt::format("line {}: duplicate neighbor list for {}", line, page_id));
    }
    std::vector<Neighbor> list;
    for (const auto& entry : j.at("neighbors")) {
      if (!entry.is_array() || entry.size() != 2) {
        throw std::runtime_error(fmt::format("line {}: neighbor entry must be [id, similarity]", line));
      }
      list.push_back(Neighbor{entry[0].get<std::string>(), entry[1].get<double>()});
    }
    try {
      index.set(page_id, std::move(list));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(fmt::format("line {}: {}", line, e.what()));
    }
  });
  return index;
}

std::string serialize_manifest(const Corpus& corpus) {
  std::string out;
  for (const auto& doc : corpus.documents()) {
    json header{{"kind", "doc"},
                {"doc_id", doc.doc_id},
                {"source_url", doc.source_url},
                {"category", doc.category},
                {"language", doc.language},
                {"page_count", doc.page_count()}};
    out += header.dump() + "\n";
    for (const auto& page : doc.pages) {
      json rec{{"kind", "page"},
               {"page_id", page.page_id},
               {"doc_id", page.doc_id},
               {"index", page.index},
               {"image_ref", page.image_ref},
               {"width_px", page.width_px},
               {"height_px", page.height_px},
               {"word_count", page.word_count},
               {"content_kind", to_string(page.content_kind)}};
      if (page.parsed_text) rec["parsed_text"] = *page.parsed_text;
      out += rec.dump() + "\n";
    }
  }
  return out;
}

std::string serialize_neighbors(const NeighborIndex& index) {
  std::string out;
  for (const auto& [page_id, list] : index.lists()) {
    json neighbors = json::array();
    for (const auto& n : list) neighbors.push_back(json::array({n.page_id, n.similarity}));
    out += json{{"page_id", page_id}, {"neighbors", neighbors}}.dump() + "\n";
  }
  return out;
}

bool is_question_page(const Page& page) {
  return page.word_count > kMinQuestionWords && page.content_kind == ContentKind::normal;
}

std::set<std::string> filter_question_pages(const Corpus& corpus) {
  std::set<std::string> out;
  for (const auto& doc : corpus.documents()) {
    for (const auto& page : doc.pages) {
      if (is_question_page(page)) out.insert(page.page_id);
    }
  }
  return out;
}

std::vector<Neighbor> neighbor_topk(const NeighborIndex& index, const std::string& page_id,
                                    std::size_t k, NeighborBand band) {
  const auto& list = index.at(page_id);
  std::size_t begin = 0;
  std::size_t end = list.size();
  switch (band) {
    case NeighborBand::within_first_32:
      end = std::min(end, kNearBandSize);
      break;
    case NeighborBand::outside_first_32:
      begin = std::min(end, kNearBandSize);
      break;
    case NeighborBand::any:
      break;
  }
  const std::size_t count = std::min(k, end - begin);
  return {list.begin() + static_cast<std::ptrdiff_t>(begin),
          list.begin() + static_cast<std::ptrdiff_t>(begin + count)};
}

}  // namespace lcdoc
