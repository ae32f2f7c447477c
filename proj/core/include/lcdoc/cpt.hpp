// SPDX-License-Identifier: Apache-2.0
//
// Continued-pretraining task construction over rendered documents:
// fill-in-the-middle, unshuffle, key/position retrieval and counting.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcdoc/corpus.hpp"
#include "lcdoc/genclient.hpp"
#include "lcdoc/message.hpp"
#include "lcdoc/tokens.hpp"

namespace lcdoc {

enum class CptTask { fim, unshuffle, retrieval_key, retrieval_position, counting };

std::string to_string(CptTask task);
CptTask cpt_task_from_string(const std::string& s);

struct CptExample {
  CptTask task = CptTask::fim;
  std::string doc_id;
  std::vector<ContentItem> context;  // pages (and interleaved text) in presentation order
  std::string prompt;
  std::string target;
  std::vector<PageRef> pages;          // presented pages, parallel to the image items
  std::vector<bool> injected_negative; // parallel to pages
  std::vector<std::int64_t> page_indices;  // removed / queried pages (0-based)
  std::int64_t image_side = 0;
  std::int64_t token_estimate = 0;
  std::uint64_t seed = 0;
};

json to_json(const CptExample& example);
CptExample cpt_example_from_json(const json& j);

/// User turn = context + prompt, assistant turn = target.
TrainingExample to_training_example(const CptExample& example);

/// Removes page `removed_index`; the target is that page's parsed text
/// (or `parsed_text_override` when given). Needs at least two pages.
CptExample build_fim(const Document& doc, std::size_t removed_index, const TokenBudget& budget,
                     const std::optional<std::string>& parsed_text_override = std::nullopt);

/// Presents the pages in a seeded non-identity order, each prefixed
/// "Position i:". The target lists presented positions in reading order.
CptExample build_unshuffle(const Document& doc, std::uint64_t seed, const TokenBudget& budget);

/// Presentation order used by build_unshuffle: presented[j] = original[perm[j]].
std::vector<std::size_t> unshuffle_permutation(std::size_t page_count, std::uint64_t seed);

enum class RetrievalMode { key, position };

struct RetrievalParams {
  std::int64_t ngram_min = 5;
  std::int64_t ngram_max = 8;
  std::int64_t answer_words = 12;
};

struct KeySpan {
  std::string anchor;
  std::string answer;
};

/// Anchor = words[offset, offset+n), answer = the following answer_words words.
KeySpan retrieval_key_span(const std::vector<std::string>& words, std::size_t offset,
                           std::size_t n, std::size_t answer_words);

/// Paragraphs of a page: blank-line separated, trimmed, non-empty.
std::vector<std::string> split_paragraphs(const std::string& text);

CptExample build_retrieval(const Document& doc, RetrievalMode mode, std::uint64_t seed,
                           const TokenBudget& budget, const RetrievalParams& params = {});

/// Direct forms used by build_retrieval once a location is drawn.
CptExample build_key_retrieval(const Document& doc, std::size_t page_index, std::size_t offset,
                               std::size_t ngram, std::size_t answer_words,
                               const TokenBudget& budget);
CptExample build_position_retrieval(const Document& doc, std::size_t page_index,
                                    std::size_t paragraph_index, const TokenBudget& budget);

/// Chain-of-thought counting target: one "Page i: c" line per page, then
/// "Total: sum".
CptExample build_counting(const Document& doc, const std::vector<std::int64_t>& per_page_counts,
                          const std::string& instance_label, const TokenBudget& budget);

/// One single-page labeling call per page; returns the parsed counts.
std::vector<std::int64_t> label_page_counts(const Document& doc, const std::string& instance_label,
                                            ChatClient& client, const std::string& model,
                                            std::size_t max_in_flight = 4);

struct CptRunOptions {
  CptTask task = CptTask::fim;
  std::uint64_t seed = 0;
  TokenBudget budget;
  RetrievalParams retrieval;
  std::vector<std::string> instance_labels{"tables", "figures", "headings"};
  std::string labeler_model = "labeler";
  std::size_t max_in_flight = 4;
};

struct CptRunResult {
  std::vector<CptExample> examples;
  std::vector<std::pair<std::string, std::string>> skipped;  // (doc_id, reason)
};

/// One example per document for the requested task, sorted by
/// (doc_id, task, seed). Documents that cannot host the task are reported
/// in `skipped` with the reason.
CptRunResult generate_cpt(const Corpus& corpus, const CptRunOptions& options,
                          ChatClient* labeler = nullptr);

}  // namespace lcdoc
