// SPDX-License-Identifier: Apache-2.0
//
// REST service over a ReviewStore:
//   GET  /api/flags?status=          flag listing
//   GET  /api/flags/{id}             flag, item, evidence, page images, decisions
//   POST /api/flags/{id}/decision    record a keep / modify / remove decision
//   GET  /api/export                 corrected benchmark as JSONL
//   GET  /api/stats                  {pending, kept, modified, removed}
// Static UI assets are served at / when a directory is configured.

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "lcdoc/flagging.hpp"

namespace lcdoc {

struct BindAddress {
  std::string host = "127.0.0.1";
  int port = 8080;

  /// "host:port", ":port" or "port".
  static BindAddress parse(const std::string& text);
  /// REVIEW_BIND_ADDR, or the default when unset.
  static BindAddress from_env();
};

class ReviewServer {
public:
  explicit ReviewServer(ReviewStore& store,
                        std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~ReviewServer();

  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds the socket; port 0 picks a free port. Throws on bind failure.
  int bind(const BindAddress& address);

  /// Serves until stop() is called. Requires a prior bind().
  void listen();
  void stop();

  int port() const { return port_; }

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace lcdoc
