// SPDX-License-Identifier: Apache-2.0

#include "lcdoc/prompts.hpp"

#include <memory>
#include <stdexcept>

#include <fmt/args.h>
#include <fmt/format.h>

#include "lcdoc/util.hpp"

namespace lcdoc {

namespace {

const std::map<std::string, std::string>& builtin() {
  static const std::map<std::string, std::string> t{
      {"sp_questions",
       "Here is a page from a document. Write {n} different questions about this page, one per "
       "line, numbered. For each question: {archetype}."},
      {"mp_questions",
       "Here are several pages. Write questions that can only be answered by combining evidence "
       "from more than one of these pages, one per line, numbered."},
      {"unanswerable_question",
       "Here are several pages. Write one trick question that looks relevant to these pages but "
       "cannot be answered from them. Output only the question."},
      {"mp_judge",
       "Question: {question}\nCandidate answer: {answer}\n\nUsing the pages above, decide whether "
       "the candidate answer fully and correctly answers the question. Reply with YES or NO."},
      {"extract_evidence",
       "Question: {question}\n\nExtract the evidence on this page that is relevant to the "
       "question, then rate the page's relevance from 0 to 10.\nRespond exactly as:\nEvidence: "
       "<evidence>\nRelevance: <number>"},
      {"evidence_answer", "{evidence}\n\nQuestion: {question}"},
      {"qc_assertions",
       "Break the following answer into a list of independent factual assertions, one per line, "
       "numbered.\n\nAnswer: {answer}"},
      {"qc_extract",
       "Assertions:\n{assertions}\n\nExtract the evidence on this page relevant to these "
       "assertions, then rate the page's relevance from 0 to 10.\nRespond exactly as:\nEvidence: "
       "<evidence>\nRelevance: <number>"},
      {"qc_verify",
       "{evidence}\n\nAssertions:\n{assertions}\n\nFor each assertion, decide whether the pages and "
       "evidence above support it. Reply with one line per assertion in the form "
       "\"<number>: SUPPORTED\" or \"<number>: UNSUPPORTED\"."},
      {"followup",
       "Conversation so far:\n{transcript}\n\nWrite the user's next question about the document. "
       "Either probe deeper into the last answer or ask a new question. Output only the "
       "question."},
      {"flag_extract",
       "Question: {question}\nReference answer: {answer}\n\nExtract the evidence on this page "
       "relevant to the question and the reference answer, then rate the page's relevance from 0 "
       "to 10.\nRespond exactly as:\nEvidence: <evidence>\nRelevance: <number>"},
      {"flag_verdict",
       "{evidence}\n\nQuestion: {question}\nReference answer: {answer}\n\nCheck the question and "
       "reference answer against the document evidence above. Classify the item as one of: "
       "document_mismatch, underspecified, typo, incorrect_answer, ok.\nRespond exactly "
       "as:\nIssue: <kind>\nRationale: <one or two sentences>"},
  };
  return t;
}

std::shared_ptr<const PromptLibrary>& global_slot() {
  static std::shared_ptr<const PromptLibrary> slot =
      std::make_shared<const PromptLibrary>(PromptLibrary::defaults());
  return slot;
}

}  // namespace

PromptLibrary PromptLibrary::defaults() {
  PromptLibrary lib;
  lib.templates_ = builtin();
  return lib;
}

void PromptLibrary::load_overrides(const std::filesystem::path& dir) {
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    const auto name = entry.path().stem().string();
    if (templates_.count(name) == 0) {
      throw std::invalid_argument(fmt::format("unknown prompt template '{}' in {}", name,
                                              dir.string()));
    }
    templates_[name] = read_file(entry.path());
  }
}

const std::string& PromptLibrary::raw(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) {
    throw std::out_of_range(fmt::format("unknown prompt template '{}'", name));
  }
  return it->second;
}

std::vector<std::string> PromptLibrary::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : templates_) out.push_back(name);
  return out;
}

std::string PromptLibrary::render(const std::string& name,
                                  const std::map<std::string, std::string>& values) const {
  fmt::dynamic_format_arg_store<fmt::format_context> store;
  for (const auto& [key, value] : values) {
    store.push_back(fmt::arg(key.c_str(), value));
  }
  try {
    return fmt::vformat(raw(name), store);
  } catch (const fmt::format_error& e) {
    throw std::invalid_argument(fmt::format("prompt template '{}': {}", name, e.what()));
  }
}

const PromptLibrary& prompts() { return *global_slot(); }

void set_prompts(PromptLibrary library) {
  global_slot() = std::make_shared<const PromptLibrary>(std::move(library));
}

}  // namespace lcdoc
