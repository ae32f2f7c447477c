// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the unit and acceptance suites.

#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include <fmt/format.h>

#include "lcdoc/corpus.hpp"
#include "lcdoc/genclient.hpp"
#include "lcdoc/util.hpp"

namespace lcdoc::testing {

inline std::filesystem::path fixture_path(const std::string& name) {
  return std::filesystem::path(LCDOC_FIXTURE_DIR) / name;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            fmt::format("lcdoc-test-{}-{}", ::getpid(), counter++);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

/// Page text with `words` words; word j of page p is "w{p}x{j}".
inline std::string synthetic_text(std::int64_t page, std::int64_t words) {
  std::vector<std::string> parts;
  for (std::int64_t j = 0; j < words; ++j) parts.push_back(fmt::format("w{}x{}", page, j));
  return join(parts, " ");
}

inline Document make_document(const std::string& doc_id, std::int64_t pages,
                              std::int64_t words_per_page = 150) {
  Document doc;
  doc.doc_id = doc_id;
  doc.source_url = "https://example.org/" + doc_id + ".pdf";
  doc.category = "report";
  doc.language = "en";
  for (std::int64_t i = 0; i < pages; ++i) {
    Page p;
    p.page_id = fmt::format("{}-p{:02d}", doc_id, i);
    p.doc_id = doc_id;
    p.index = i;
    p.image_ref = fmt::format("images/{}/{:02d}.png", doc_id, i);
    p.width_px = 840;
    p.height_px = 1188;
    p.parsed_text = synthetic_text(i, words_per_page);
    p.word_count = words_per_page;
    doc.pages.push_back(std::move(p));
  }
  return doc;
}

inline std::vector<PageRef> page_refs(const Document& doc) {
  std::vector<PageRef> out;
  for (const auto& p : doc.pages) out.push_back(p.ref());
  return out;
}

/// ChatClient answering through a callback; records every request.
class ScriptedClient : public ChatClient {
public:
  using Handler = std::function<std::string(const ChatRequest&)>;

  explicit ScriptedClient(Handler handler) : handler_(std::move(handler)) {}

  GenerationResult complete(const ChatRequest& request) override {
    {
      std::lock_guard lock(mutex_);
      requests_.push_back(request);
    }
    GenerationResult out;
    out.text = handler_(request);
    out.request_tag = request.request_tag;
    return out;
  }

  std::vector<ChatRequest> requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
  }

private:
  Handler handler_;
  mutable std::mutex mutex_;
  std::vector<ChatRequest> requests_;
};

/// Page id embedded in a request tag of the form "<prefix>:...:<page_id>".
inline std::string tag_page(const std::string& tag) {
  return tag.substr(tag.rfind(':') + 1);
}

}  // namespace lcdoc::testing
