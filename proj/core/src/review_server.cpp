// SPDX-License-Identifier: Apache-2.0

#include "lcdoc/review_server.hpp"

#include <cstdlib>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "httplib.h"

namespace lcdoc {

BindAddress BindAddress::parse(const std::string& text) {
  BindAddress addr;
  const auto colon = text.rfind(':');
  std::string port_text = text;
  if (colon != std::string::npos) {
    if (colon > 0) addr.host = text.substr(0, colon);
    port_text = text.substr(colon + 1);
  }
  try {
    std::size_t used = 0;
    const int port = std::stoi(port_text, &used);
    if (used != port_text.size() || port < 0 || port > 65535) throw std::out_of_range("port");
    addr.port = port;
  } catch (const std::exception&) {
    throw std::invalid_argument(fmt::format("invalid bind address '{}'", text));
  }
  return addr;
}

BindAddress BindAddress::from_env() {
  const char* v = std::getenv("REVIEW_BIND_ADDR");
  if (v == nullptr || *v == '\0') return BindAddress{};
  return parse(v);
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, json{{"error", message}});
}

constexpr const char* kPlaceholderPage =
    "<!DOCTYPE html><html><head><meta charset=\"utf-8\"><title>Review</title></head>"
    "<body><p>No UI assets are configured. The API is served under /api/.</p></body></html>";

}  // namespace

struct ReviewServer::Impl {
  ReviewStore& store;
  httplib::Server server;

  explicit Impl(ReviewStore& s) : store(s) {}
};

ReviewServer::ReviewServer(ReviewStore& store, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(store)) {
  auto& srv = impl_->server;
  auto& st = impl_->store;

  srv.Get("/api/flags", [&st](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> status;
    if (req.has_param("status")) status = req.get_param_value("status");
    try {
      send_json(res, 200, json{{"flags", st.list_flags(status)}});
    } catch (const std::invalid_argument& e) {
      send_error(res, 400, e.what());
    }
  });

  srv.Get(R"(/api/flags/([^/]+))", [&st](const httplib::Request& req, httplib::Response& res) {
    const auto detail = st.flag_detail(req.matches[1].str());
    if (!detail) return send_error(res, 404, fmt::format("unknown flag '{}'", req.matches[1].str()));
    send_json(res, 200, *detail);
  });

  srv.Post(R"(/api/flags/([^/]+)/decision)",
           [&st](const httplib::Request& req, httplib::Response& res) {
             const std::string flag_id = req.matches[1].str();
             try {
               const auto body = json::parse(req.body);
               auto decision = decision_from_json(body);
               send_json(res, 200, st.record_decision(flag_id, std::move(decision)));
             } catch (const std::out_of_range& e) {
               send_error(res, 404, e.what());
             } catch (const json::exception& e) {
               send_error(res, 400, fmt::format("malformed decision: {}", e.what()));
             } catch (const std::invalid_argument& e) {
               send_error(res, 400, e.what());
             } catch (const std::exception& e) {
               spdlog::error("decision for {} failed: {}", flag_id, e.what());
               send_error(res, 500, e.what());
             }
           });

  srv.Get("/api/export", [&st](const httplib::Request&, httplib::Response& res) {
    res.set_header("X-Provenance-Note", st.provenance_note());
    res.set_content(st.export_jsonl(), "application/x-ndjson");
  });

  srv.Get("/api/stats", [&st](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, to_json(st.stats()));
  });

  if (static_dir) {
    if (!srv.set_mount_point("/", static_dir->string())) {
      throw std::runtime_error(
          fmt::format("static asset directory {} does not exist", static_dir->string()));
    }
  } else {
    srv.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kPlaceholderPage, "text/html");
    });
  }

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    } catch (...) {
      send_error(res, 500, "unknown error");
    }
  });
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind(const BindAddress& address) {
  auto& srv = impl_->server;
  if (address.port == 0) {
    port_ = srv.bind_to_any_port(address.host);
  } else {
    port_ = srv.bind_to_port(address.host, address.port) ? address.port : -1;
  }
  if (port_ <= 0) {
    throw std::runtime_error(fmt::format("cannot bind {}:{}", address.host, address.port));
  }
  return port_;
}

void ReviewServer::listen() {
  if (port_ <= 0) throw std::logic_error("ReviewServer::listen called before bind");
  impl_->server.listen_after_bind();
}

void ReviewServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace lcdoc
