// SPDX-License-Identifier: Apache-2.0

#include "lcdoc/cpt.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace lcdoc {

namespace {

constexpr int kUnshuffleAttempts = 8;

std::int64_t context_text_tokens(const CptExample& ex) {
  std::int64_t n = estimate_text_tokens(ex.prompt) + estimate_text_tokens(ex.target);
  for (const auto& item : ex.context) {
    if (item.is_text()) n += estimate_text_tokens(item.text);
  }
  return n;
}

void finalize_tokens(CptExample& ex, const TokenBudget& budget) {
  const auto fitted =
      fit_context(static_cast<std::int64_t>(ex.pages.size()), context_text_tokens(ex), budget);
  ex.image_side = fitted.side;
  ex.token_estimate = fitted.total();
}

void add_page(CptExample& ex, const Page& page, bool negative = false) {
  ex.context.push_back(ContentItem::make_image(page.image_ref, page.page_id));
  ex.pages.push_back(page.ref());
  ex.injected_negative.push_back(negative);
}

}  // namespace

std::string to_string(CptTask task) {
  switch (task) {
    case CptTask::fim: return "fim";
    case CptTask::unshuffle: return "unshuffle";
    case CptTask::retrieval_key: return "retrieval_key";
    case CptTask::retrieval_position: return "retrieval_position";
    case CptTask::counting: return "counting";
  }
  return "fim";
}

CptTask cpt_task_from_string(const std::string& s) {
  if (s == "fim") return CptTask::fim;
  if (s == "unshuffle") return CptTask::unshuffle;
  if (s == "retrieval_key" || s == "key") return CptTask::retrieval_key;
  if (s == "retrieval_position" || s == "position") return CptTask::retrieval_position;
  if (s == "counting") return CptTask::counting;
  throw std::invalid_argument(fmt::format("unknown CPT task '{}'", s));
}

json to_json(const CptExample& ex) {
  json context = json::array();
  for (const auto& item : ex.context) context.push_back(to_json(item));
  json pages = json::array();
  for (const auto& p : ex.pages) pages.push_back(to_json(p));
  return json{{"task_kind", to_string(ex.task)},
              {"doc_id", ex.doc_id},
              {"context", context},
              {"prompt", ex.prompt},
              {"target", ex.target},
              {"pages", pages},
              {"injected_negative", ex.injected_negative},
              {"page_indices", ex.page_indices},
              {"image_side", ex.image_side},
              {"token_estimate", ex.token_estimate},
              {"seed", ex.seed}};
}

CptExample cpt_example_from_json(const json& j) {
  CptExample ex;
  ex.task = cpt_task_from_string(j.at("task_kind").get<std::string>());
  ex.doc_id = j.at("doc_id").get<std::string>();
  for (const auto& item : j.at("context")) ex.context.push_back(content_item_from_json(item));
  ex.prompt = j.at("prompt").get<std::string>();
  ex.target = j.at("target").get<std::string>();
  for (const auto& p : j.at("pages")) ex.pages.push_back(page_ref_from_json(p));
  ex.injected_negative = j.at("injected_negative").get<std::vector<bool>>();
  ex.page_indices = j.at("page_indices").get<std::vector<std::int64_t>>();
  ex.image_side = j.at("image_side").get<std::int64_t>();
  ex.token_estimate = j.at("token_estimate").get<std::int64_t>();
  ex.seed = j.at("seed").get<std::uint64_t>();
  return ex;
}

TrainingExample to_training_example(const CptExample& ex) {
  TrainingExample out;
  out.example_id = fmt::format("cpt-{}-{}-{:016x}", to_string(ex.task), ex.doc_id, ex.seed);
  out.pipeline = "cpt";
  out.task_kind = to_string(ex.task);
  Message user{Role::user, ex.context};
  user.content.push_back(ContentItem::make_text(ex.prompt));
  out.messages.push_back(std::move(user));
  out.messages.push_back(Message::text(Role::assistant, ex.target));
  out.page_refs = ex.pages;
  out.origin_marks.assign(ex.pages.size(), false);
  for (std::size_t i = 0; i < ex.pages.size(); ++i) {
    const auto idx = ex.pages[i].index;
    const bool queried = !ex.injected_negative[i] &&
                         std::find(ex.page_indices.begin(), ex.page_indices.end(), idx) !=
                             ex.page_indices.end();
    out.origin_marks[i] = queried;
  }
  out.token_estimate = ex.token_estimate;
  out.assistant_tokens = count_assistant_tokens(out.messages);
  out.stage = stage_for_pages(out.page_count());
  out.seed = ex.seed;
  return out;
}

CptExample build_fim(const Document& doc, std::size_t removed_index, const TokenBudget& budget,
                     const std::optional<std::string>& parsed_text_override) {
  if (doc.pages.size() < 2) {
    throw std::invalid_argument(
        fmt::format("document {}: fill-in-the-middle needs at least 2 pages", doc.doc_id));
  }
  if (removed_index >= doc.pages.size()) {
    throw std::out_of_range(fmt::format("document {}: page index {} out of range", doc.doc_id,
                                        removed_index));
  }
  const Page& removed = doc.pages[removed_index];
  CptExample ex;
  ex.task = CptTask::fim;
  ex.doc_id = doc.doc_id;
  ex.target = parsed_text_override ? *parsed_text_override : removed.require_text();
  if (trim(ex.target).empty()) {
    throw std::runtime_error(fmt::format("page {} has empty parsed text", removed.page_id));
  }
  for (std::size_t i = 0; i < doc.pages.size(); ++i) {
    if (i != removed_index) add_page(ex, doc.pages[i]);
  }
  ex.page_indices = {static_cast<std::int64_t>(removed_index)};
  ex.prompt = fmt::format(
      "Page {} of {} is missing from this document. Write out the full text of the missing page.",
      removed_index + 1, doc.pages.size());
  finalize_tokens(ex, budget);
  return ex;
}

std::vector<std::size_t> unshuffle_permutation(std::size_t page_count, std::uint64_t seed) {
  if (page_count < 2) {
    throw std::invalid_argument("unshuffle needs at least 2 pages");
  }
  Rng rng(seed);
  std::vector<std::size_t> perm(page_count);
  for (int attempt = 0; attempt < kUnshuffleAttempts; ++attempt) {
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    if (!std::is_sorted(perm.begin(), perm.end())) return perm;
  }
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[0], perm[1]);
  return perm;
}

CptExample build_unshuffle(const Document& doc, std::uint64_t seed, const TokenBudget& budget) {
  if (doc.pages.size() < 2) {
    throw std::invalid_argument(
        fmt::format("document {}: unshuffle needs at least 2 pages", doc.doc_id));
  }
  const auto perm = unshuffle_permutation(doc.pages.size(), seed);
  CptExample ex;
  ex.task = CptTask::unshuffle;
  ex.doc_id = doc.doc_id;
  ex.seed = seed;
  for (std::size_t j = 0; j < perm.size(); ++j) {
    ex.context.push_back(ContentItem::make_text(fmt::format("Position {}:", j + 1)));
    add_page(ex, doc.pages[perm[j]]);
  }
  std::vector<std::size_t> position_of(perm.size());
  for (std::size_t j = 0; j < perm.size(); ++j) position_of[perm[j]] = j;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < perm.size(); ++i) order.push_back(std::to_string(position_of[i] + 1));
  ex.target = join(order, ", ");
  ex.prompt =
      "The pages above are shuffled. List their positions in the correct reading order, "
      "separated by commas.";
  finalize_tokens(ex, budget);
  return ex;
}

KeySpan retrieval_key_span(const std::vector<std::string>& words, std::size_t offset,
                           std::size_t n, std::size_t answer_words) {
  if (n == 0 || answer_words == 0 || offset + n + answer_words > words.size()) {
    throw std::out_of_range("retrieval span exceeds page text");
  }
  const auto at = [&](std::size_t b, std::size_t e) {
    return join(std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(b),
                                         words.begin() + static_cast<std::ptrdiff_t>(e)),
                " ");
  };
  return KeySpan{at(offset, offset + n), at(offset + n, offset + n + answer_words)};
}

std::vector<std::string> split_paragraphs(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  std::string current;
  auto flush = [&] {
    auto t = trim(current);
    if (!t.empty()) out.push_back(std::move(t));
    current.clear();
  };
  while (std::getline(in, line)) {
    if (trim(line).empty()) {
      flush();
    } else {
      if (!current.empty()) current += '\n';
      current += line;
    }
  }
  flush();
  return out;
}

CptExample build_key_retrieval(const Document& doc, std::size_t page_index, std::size_t offset,
                               std::size_t ngram, std::size_t answer_words,
                               const TokenBudget& budget) {
  const Page& page = doc.pages.at(page_index);
  const auto span = retrieval_key_span(split_words(page.require_text()), offset, ngram, answer_words);
  CptExample ex;
  ex.task = CptTask::retrieval_key;
  ex.doc_id = doc.doc_id;
  for (const auto& p : doc.pages) add_page(ex, p);
  ex.page_indices = {static_cast<std::int64_t>(page_index)};
  ex.prompt = fmt::format(
      "Find the text \"{}\" in the document and write the {} words that immediately follow it.",
      span.anchor, answer_words);
  ex.target = span.answer;
  finalize_tokens(ex, budget);
  return ex;
}

CptExample build_position_retrieval(const Document& doc, std::size_t page_index,
                                    std::size_t paragraph_index, const TokenBudget& budget) {
  const Page& page = doc.pages.at(page_index);
  const auto paragraphs = split_paragraphs(page.require_text());
  if (paragraph_index >= paragraphs.size()) {
    throw std::out_of_range(fmt::format("page {} has {} paragraphs, asked for {}", page.page_id,
                                        paragraphs.size(), paragraph_index + 1));
  }
  CptExample ex;
  ex.task = CptTask::retrieval_position;
  ex.doc_id = doc.doc_id;
  for (const auto& p : doc.pages) add_page(ex, p);
  ex.page_indices = {static_cast<std::int64_t>(page_index)};
  ex.prompt = fmt::format("Write out the text of page {}, paragraph {}.", page_index + 1,
                          paragraph_index + 1);
  ex.target = paragraphs[paragraph_index];
  finalize_tokens(ex, budget);
  return ex;
}

CptExample build_retrieval(const Document& doc, RetrievalMode mode, std::uint64_t seed,
                           const TokenBudget& budget, const RetrievalParams& params) {
  Rng rng(seed);
  CptExample ex;
  if (mode == RetrievalMode::key) {
    if (params.ngram_min < 1 || params.ngram_max < params.ngram_min || params.answer_words < 1) {
      throw std::invalid_argument("invalid retrieval parameters");
    }
    const auto n = static_cast<std::size_t>(rng.uniform_int(params.ngram_min, params.ngram_max));
    const auto answer = static_cast<std::size_t>(params.answer_words);
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < doc.pages.size(); ++i) {
      const auto& text = doc.pages[i].parsed_text;
      if (text && split_words(*text).size() >= n + answer) eligible.push_back(i);
    }
    if (eligible.empty()) {
      throw std::runtime_error(fmt::format(
          "document {}: no page has parsed text of at least {} words", doc.doc_id, n + answer));
    }
    const std::size_t page_index = eligible[rng.index(eligible.size())];
    const auto words = split_words(*doc.pages[page_index].parsed_text);
    const std::size_t offset = rng.index(words.size() - n - answer + 1);
    ex = build_key_retrieval(doc, page_index, offset, n, answer, budget);
  } else {
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    for (std::size_t i = 0; i < doc.pages.size(); ++i) {
      const auto& text = doc.pages[i].parsed_text;
      if (!text) continue;
      const auto count = split_paragraphs(*text).size();
      for (std::size_t k = 0; k < count; ++k) slots.emplace_back(i, k);
    }
    if (slots.empty()) {
      throw std::runtime_error(
          fmt::format("document {}: no page has parsed text for position retrieval", doc.doc_id));
    }
    const auto [page_index, paragraph] = slots[rng.index(slots.size())];
    ex = build_position_retrieval(doc, page_index, paragraph, budget);
  }
  ex.seed = seed;
  return ex;
}

CptExample build_counting(const Document& doc, const std::vector<std::int64_t>& per_page_counts,
                          const std::string& instance_label, const TokenBudget& budget) {
  if (per_page_counts.size() != doc.pages.size()) {
    throw std::invalid_argument(fmt::format("document {}: {} counts for {} pages", doc.doc_id,
                                            per_page_counts.size(), doc.pages.size()));
  }
  CptExample ex;
  ex.task = CptTask::counting;
  ex.doc_id = doc.doc_id;
  std::int64_t total = 0;
  std::string target;
  for (std::size_t i = 0; i < per_page_counts.size(); ++i) {
    if (per_page_counts[i] < 0) {
      throw std::invalid_argument(fmt::format("negative count on page {}", i + 1));
    }
    total += per_page_counts[i];
    target += fmt::format("Page {}: {}\n", i + 1, per_page_counts[i]);
    add_page(ex, doc.pages[i]);
  }
  target += fmt::format("Total: {}", total);
  ex.target = std::move(target);
  ex.prompt = fmt::format(
      "How many {} are there in total across this document? Count them page by page, then give "
      "the total.",
      instance_label);
  finalize_tokens(ex, budget);
  return ex;
}

std::vector<std::int64_t> label_page_counts(const Document& doc, const std::string& instance_label,
                                            ChatClient& client, const std::string& model,
                                            std::size_t max_in_flight) {
  std::vector<ChatRequest> requests;
  for (const auto& page : doc.pages) {
    ChatRequest req;
    req.model = model;
    req.request_tag = fmt::format("count:{}:{}", instance_label, page.page_id);
    req.max_output_tokens = 16;
    req.messages.push_back(Message{
        Role::user,
        {ContentItem::make_image(page.image_ref, page.page_id),
         ContentItem::make_text(fmt::format(
             "How many {} are on this page? Answer with a single number.", instance_label))}});
    requests.push_back(std::move(req));
  }
  const auto results = complete_batch(client, requests, max_in_flight);
  std::vector<std::int64_t> counts;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!results[i].ok()) {
      throw GenerationError(fmt::format("count labeling failed for page {}: {}",
                                        doc.pages[i].page_id, results[i].error.value_or("")));
    }
    const auto value = first_number(results[i].text);
    if (!value || *value < 0 || *value != static_cast<double>(static_cast<std::int64_t>(*value))) {
      throw std::runtime_error(fmt::format("unparseable count '{}' for page {}", results[i].text,
                                           doc.pages[i].page_id));
    }
    counts.push_back(static_cast<std::int64_t>(*value));
  }
  return counts;
}

CptRunResult generate_cpt(const Corpus& corpus, const CptRunOptions& options, ChatClient* labeler) {
  CptRunResult out;
  const std::string task_name = to_string(options.task);
  for (const auto& doc : corpus.documents()) {
    const std::uint64_t seed = derive_seed(options.seed, doc.doc_id + "/" + task_name);
    Rng rng(seed);
    try {
      switch (options.task) {
        case CptTask::fim: {
          std::vector<std::size_t> with_text;
          for (std::size_t i = 0; i < doc.pages.size(); ++i) {
            if (doc.pages[i].parsed_text && !trim(*doc.pages[i].parsed_text).empty()) {
              with_text.push_back(i);
            }
          }
          if (with_text.empty()) throw std::runtime_error("no page has parsed_text");
          auto ex = build_fim(doc, with_text[rng.index(with_text.size())], options.budget);
          ex.seed = seed;
          out.examples.push_back(std::move(ex));
          break;
        }
        case CptTask::unshuffle:
          out.examples.push_back(build_unshuffle(doc, seed, options.budget));
          break;
        case CptTask::retrieval_key:
        case CptTask::retrieval_position:
          out.examples.push_back(build_retrieval(
              doc, options.task == CptTask::retrieval_key ? RetrievalMode::key
                                                          : RetrievalMode::position,
              seed, options.budget, options.retrieval));
          break;
        case CptTask::counting: {
          if (labeler == nullptr) throw std::invalid_argument("counting needs a labeling client");
          if (options.instance_labels.empty()) throw std::invalid_argument("no instance labels");
          const auto& label = options.instance_labels[rng.index(options.instance_labels.size())];
          const auto counts =
              label_page_counts(doc, label, *labeler, options.labeler_model, options.max_in_flight);
          auto ex = build_counting(doc, counts, label, options.budget);
          ex.seed = seed;
          out.examples.push_back(std::move(ex));
          break;
        }
      }
    } catch (const GenerationError&) {
      throw;
    } catch (const std::exception& e) {
      out.skipped.emplace_back(doc.doc_id, e.what());
    }
  }
  std::sort(out.examples.begin(), out.examples.end(), [](const CptExample& a, const CptExample& b) {
    if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
    if (a.task != b.task) return a.task < b.task;
    return a.seed < b.seed;
  });
  return out;
}

}  // namespace lcdoc
