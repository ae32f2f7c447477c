// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>

#include "lcdoc/sft.hpp"

namespace lcdoc {

namespace {

constexpr std::int64_t kShortMin = 2;
constexpr std::int64_t kShortMax = 5;
constexpr std::int64_t kDefaultAdjacentRange = 5;

bool is_short(ContextStrategy s) {
  return s == ContextStrategy::distractor_short || s == ContextStrategy::adjacent_short ||
         s == ContextStrategy::hn_short;
}

AssembledContext window(const Document& doc, std::int64_t q, std::int64_t size,
                        ContextStrategy strategy) {
  if (size < 1 || size > doc.page_count()) {
    throw std::runtime_error(fmt::format("document {} has {} pages; window of {} requested",
                                         doc.doc_id, doc.page_count(), size));
  }
  std::int64_t start = q - (size - 1) / 2;
  start = std::clamp<std::int64_t>(start, 0, doc.page_count() - size);
  AssembledContext ctx;
  ctx.strategy = strategy;
  for (std::int64_t i = start; i < start + size; ++i) {
    ctx.pages.push_back(doc.pages[static_cast<std::size_t>(i)].ref());
    ctx.origin.push_back(i == q);
  }
  return ctx;
}

}  // namespace

std::string to_string(ContextStrategy s) {
  switch (s) {
    case ContextStrategy::adjacent_range: return "adjacent_range";
    case ContextStrategy::whole_document: return "whole_document";
    case ContextStrategy::hard_negative: return "hard_negative";
    case ContextStrategy::distractor_short: return "distractor_short";
    case ContextStrategy::adjacent_short: return "adjacent_short";
    case ContextStrategy::hn_short: return "hn_short";
  }
  return "whole_document";
}

ContextStrategy context_strategy_from_string(const std::string& s) {
  if (s == "adjacent_range") return ContextStrategy::adjacent_range;
  if (s == "whole_document") return ContextStrategy::whole_document;
  if (s == "hard_negative") return ContextStrategy::hard_negative;
  if (s == "distractor_short") return ContextStrategy::distractor_short;
  if (s == "adjacent_short") return ContextStrategy::adjacent_short;
  if (s == "hn_short") return ContextStrategy::hn_short;
  throw std::invalid_argument(fmt::format("unknown context strategy '{}'", s));
}

std::vector<PageRef> AssembledContext::origin_pages() const {
  std::vector<PageRef> out;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    if (origin[i]) out.push_back(pages[i]);
  }
  return out;
}

json to_json(const AssembledContext& c) {
  json pages = json::array();
  for (std::size_t i = 0; i < c.pages.size(); ++i) {
    auto p = to_json(c.pages[i]);
    p["origin"] = c.origin[i] ? "question" : "filler";
    pages.push_back(std::move(p));
  }
  return json{{"strategy", to_string(c.strategy)}, {"pages", pages}};
}

AssembledContext assemble_context(ContextStrategy strategy, const Corpus& corpus,
                                  const NeighborIndex* neighbors,
                                  const std::string& question_page_id,
                                  const ContextParams& params, std::uint64_t seed) {
  Rng rng(seed);
  const Page& qpage = corpus.page(question_page_id);
  const Document& doc = corpus.document(qpage.doc_id);

  std::int64_t size = 0;
  if (params.size) {
    size = *params.size;
    if (is_short(strategy) && (size < kShortMin || size > kShortMax)) {
      throw std::invalid_argument(fmt::format("{} contexts hold {}..{} pages, got {}",
                                              to_string(strategy), kShortMin, kShortMax, size));
    }
  } else if (is_short(strategy)) {
    size = rng.uniform_int(kShortMin, kShortMax);
  } else if (strategy == ContextStrategy::adjacent_range) {
    size = std::min(kDefaultAdjacentRange, doc.page_count());
  }

  switch (strategy) {
    case ContextStrategy::whole_document: {
      AssembledContext ctx;
      ctx.strategy = strategy;
      for (const auto& p : doc.pages) {
        ctx.pages.push_back(p.ref());
        ctx.origin.push_back(p.page_id == question_page_id);
      }
      return ctx;
    }
    case ContextStrategy::adjacent_range:
    case ContextStrategy::adjacent_short:
      return window(doc, qpage.index, size, strategy);
    case ContextStrategy::hard_negative:
    case ContextStrategy::distractor_short:
    case ContextStrategy::hn_short: {
      if (neighbors == nullptr || !neighbors->contains(question_page_id)) {
        throw std::runtime_error(
            fmt::format("no neighbor list for page {} ({})", question_page_id, to_string(strategy)));
      }
      const auto band = strategy == ContextStrategy::distractor_short
                            ? NeighborBand::outside_first_32
                            : NeighborBand::within_first_32;
      auto pool = neighbor_topk(*neighbors, question_page_id, kMaxNeighbors, band);
      std::erase_if(pool, [&](const Neighbor& n) { return !corpus.has_page(n.page_id); });
      if (strategy == ContextStrategy::hard_negative && !params.size) {
        size = static_cast<std::int64_t>(pool.size()) + 1;
      }
      const auto wanted = static_cast<std::size_t>(size - 1);
      if (size < 2 || pool.size() < wanted) {
        throw std::runtime_error(fmt::format(
            "page {}: {} neighbors available in band, {} needed for {}", question_page_id,
            pool.size(), wanted, to_string(strategy)));
      }
      AssembledContext ctx;
      ctx.strategy = strategy;
      ctx.pages.push_back(qpage.ref());
      ctx.origin.push_back(true);
      auto picks = rng.sample_without_replacement(pool.size(), wanted);
      std::sort(picks.begin(), picks.end());
      for (auto idx : picks) {
        ctx.pages.push_back(corpus.page(pool[idx].page_id).ref());
        ctx.origin.push_back(false);
      }
      std::vector<std::size_t> order(ctx.pages.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(order);
      AssembledContext shuffled;
      shuffled.strategy = strategy;
      for (auto i : order) {
        shuffled.pages.push_back(ctx.pages[i]);
        shuffled.origin.push_back(ctx.origin[i]);
      }
      return shuffled;
    }
  }
  throw std::logic_error("unhandled context strategy");
}

AssembledContext context_from_pages(const Corpus& corpus, const std::vector<std::string>& page_ids,
                                    const std::vector<std::string>& origin_ids) {
  AssembledContext ctx;
  ctx.strategy = ContextStrategy::adjacent_range;
  for (const auto& id : page_ids) {
    ctx.pages.push_back(corpus.page(id).ref());
    ctx.origin.push_back(std::find(origin_ids.begin(), origin_ids.end(), id) != origin_ids.end());
  }
  return ctx;
}

}  // namespace lcdoc
