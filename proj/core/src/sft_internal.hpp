// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "lcdoc/message.hpp"
#include "lcdoc/sft.hpp"

namespace lcdoc::detail {

inline std::vector<ContentItem> page_items(const std::vector<PageRef>& pages) {
  std::vector<ContentItem> items;
  items.reserve(pages.size());
  for (const auto& p : pages) items.push_back(ContentItem::make_image(p.image_ref, p.page_id));
  return items;
}

inline std::string pages_key(const std::vector<PageRef>& pages) {
  std::string joined;
  for (const auto& p : pages) {
    joined += p.page_id;
    joined += '|';
  }
  return short_hash(joined);
}

/// "Evidence from page i: ..." lines for the selected pages.
std::string evidence_block(const std::vector<PageEvidence>& pages,
                           const std::vector<std::size_t>& selected);

/// One extraction call per page (image + instruction), parsed with
/// parse_extraction. Unparseable replies score 0 and are marked degraded.
std::vector<PageEvidence> extract_pages(const AssembledContext& context,
                                        const std::string& tag_prefix, const std::string& model,
                                        const std::string& instruction, ChatClient& client,
                                        std::size_t max_in_flight);

/// First k indices of rank_by_relevance; optionally returns the full ranking.
std::vector<std::size_t> top_k(const std::vector<PageEvidence>& pages, std::size_t k,
                               std::vector<std::size_t>* ranked_out);

}  // namespace lcdoc::detail
