// SPDX-License-Identifier: Apache-2.0

#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "lcdoc/review_server.hpp"
#include "support.hpp"

namespace lcdoc {
namespace {

using testing::fixture_path;
using testing::TempDir;

class ReviewApi : public ::testing::Test {
protected:
  void SetUp() override {
    std::vector<BenchmarkItem> items;
    for_each_jsonl(fixture_path("items.jsonl"),
                   [&](std::size_t, const json& j) { items.push_back(benchmark_item_from_json(j)); });
    ASSERT_EQ(items.size(), 10u);
    std::vector<FlagReport> flags;
    for (const char* id : {"item-03", "item-05", "item-07", "item-09"}) {
      FlagReport f;
      f.item_id = id;
      f.flag_id = std::string("flag-") + id;
      f.issue_kind = IssueKind::underspecified;
      f.rationale = "check";
      f.evidence.push_back(FlagEvidence{"doc-alpha-p01", "snippet", 4.0});
      flags.push_back(f);
    }
    ReviewStore::initialize(dir_.path(), items, flags, fixture_path("corpus.jsonl"));
    store_ = std::make_unique<ReviewStore>(dir_.path());
    server_ = std::make_unique<ReviewServer>(*store_);
    const int port = server_->bind(BindAddress{"127.0.0.1", 0});
    thread_ = std::thread([this] { server_->listen(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port);
  }

  void TearDown() override {
    server_->stop();
    if (thread_.joinable()) thread_.join();
  }

  json get_json(const std::string& path, int expect = 200) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res) << path;
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << path << ": " << res->body;
    return json::parse(res->body);
  }

  json post(const std::string& flag, const json& body, int expect = 200) {
    auto res = client_->Post("/api/flags/" + flag + "/decision", body.dump(), "application/json");
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << res->body;
    return json::parse(res->body);
  }

  std::vector<json> exported() {
    auto res = client_->Get("/api/export");
    EXPECT_TRUE(res);
    std::vector<json> out;
    std::size_t pos = 0;
    while (res && pos < res->body.size()) {
      const auto nl = res->body.find('\n', pos);
      out.push_back(json::parse(res->body.substr(pos, nl - pos)));
      pos = nl + 1;
    }
    return out;
  }

  TempDir dir_;
  std::unique_ptr<ReviewStore> store_;
  std::unique_ptr<ReviewServer> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
};

TEST_F(ReviewApi, FullReviewSession) {
  EXPECT_EQ(get_json("/api/flags").at("flags").size(), 4u);
  EXPECT_EQ(get_json("/api/flags?status=pending").at("flags").size(), 4u);

  const auto detail = get_json("/api/flags/flag-item-03");
  EXPECT_EQ(detail.at("status"), "pending");
  EXPECT_EQ(detail.at("item").at("item_id"), "item-03");
  EXPECT_EQ(detail.at("evidence").size(), 1u);
  ASSERT_FALSE(detail.at("pages").empty());
  EXPECT_TRUE(detail.at("pages")[0].at("page_id").get<std::string>().starts_with("doc-charlie-"));

  auto r = post("flag-item-07", {{"action", "remove"}, {"reviewer", "ann"}});
  EXPECT_EQ(r.at("status"), "removed");
  EXPECT_EQ(r.at("stats").at("pending"), 3);
  EXPECT_EQ(get_json("/api/flags?status=pending").at("flags").size(), 3u);
  auto items = exported();
  EXPECT_EQ(items.size(), 9u);
  for (const auto& i : items) EXPECT_NE(i.at("item_id"), "item-07");

  post("flag-item-09", {{"action", "keep"}, {"reviewer", "ann"}});
  r = post("flag-item-03", {{"action", "modify"},
                            {"new_question", "What is the lease term for the clinic building?"},
                            {"reviewer", "ann"}});
  EXPECT_EQ(r.at("item").at("question"), "What is the lease term for the clinic building?");
  post("flag-item-05", {{"action", "modify"}, {"new_answer", "14"}, {"reviewer", "bob"}});

  items = exported();
  ASSERT_EQ(items.size(), 9u);
  std::size_t with_provenance = 0;
  for (const auto& i : items) {
    if (!i.contains("provenance")) continue;
    ++with_provenance;
    const auto& p = i.at("provenance")[0];
    EXPECT_TRUE(p.contains("before"));
    EXPECT_TRUE(p.contains("after"));
    EXPECT_FALSE(p.at("reviewer").get<std::string>().empty());
    EXPECT_FALSE(p.at("timestamp").get<std::string>().empty());
  }
  EXPECT_EQ(with_provenance, 2u);

  const auto stats = get_json("/api/stats");
  EXPECT_EQ(stats, (json{{"pending", 0}, {"kept", 1}, {"modified", 2}, {"removed", 1}}));
  auto res = client_->Get("/api/export");
  ASSERT_TRUE(res);
  EXPECT_TRUE(res->has_header("X-Provenance-Note"));
  EXPECT_FALSE(res->get_header_value("X-Provenance-Note").empty());
  EXPECT_EQ(get_json("/api/flags?status=modified").at("flags").size(), 2u);
}

TEST_F(ReviewApi, ErrorPaths) {
  get_json("/api/flags/flag-missing", 404);
  post("flag-missing", {{"action", "keep"}, {"reviewer", "ann"}}, 404);
  post("flag-item-03", {{"action", "modify"}, {"reviewer", "ann"}}, 400);
  post("flag-item-03", {{"action", "keep"}}, 400);
  post("flag-item-03", {{"action", "explode"}, {"reviewer", "ann"}}, 400);
  auto res = client_->Post("/api/flags/flag-item-03/decision", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  get_json("/api/flags?status=weird", 400);
  EXPECT_EQ(get_json("/api/stats").at("pending"), 4);
}

TEST(BindAddress, Parsing) {
  EXPECT_EQ(BindAddress::parse("0.0.0.0:9000").host, "0.0.0.0");
  EXPECT_EQ(BindAddress::parse("0.0.0.0:9000").port, 9000);
  EXPECT_EQ(BindAddress::parse(":81").port, 81);
  EXPECT_EQ(BindAddress::parse("81").host, "127.0.0.1");
  EXPECT_ANY_THROW(BindAddress::parse("host:notaport"));
}

}  // namespace
}  // namespace lcdoc
