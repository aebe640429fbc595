#include <fstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "labelfuse/error.hpp"
#include "labelfuse/manifest_io.hpp"
#include "labelfuse/review.hpp"
#include "labelfuse/review_server.hpp"
#include "test_support.hpp"

using namespace labelfuse;
using testing::ann;
using nlohmann::json;

namespace {

std::vector<TieRecord> sample_ties() {
  std::vector<Cluster> clusters;
  for (const char* image : {"b", "a"}) {
    auto cs = form_clusters(std::vector{ann(10, 10, 40, 40, "CP", "A", image), ann(11, 10, 40, 41, "MH", "B", image)});
    clusters.insert(clusters.end(), cs.begin(), cs.end());
  }
  auto ties = collect_ties(clusters);
  for (auto& t : ties) t.image_width = t.image_height = 100;
  return ties;
}

const std::vector<ClassId> kVocab{"CP", "MH", "PCH", "MD"};

}  // namespace

TEST_CASE("tie and decision records round-trip through JSON") {
  auto t = sample_ties()[0];
  CHECK(tie_from_json(tie_to_json(t)) == t);
  CHECK(tie_to_json(t)["schema"] == kTieSchema);
  t.resolution = Resolution{"PCH", "expert", "2026-01-01T00:00:00Z", true};
  CHECK(tie_from_json(tie_to_json(t)) == t);
  CHECK(tie_to_json(t)["status"] == "resolved");

  Decision d{"abc", "img", "CP", "expert", "2026-01-01T00:00:00Z", false};
  CHECK(decision_from_json(decision_to_json(d)) == d);
  auto bad = decision_to_json(d);
  bad["schema"] = "other";
  CHECK_THROWS_AS(decision_from_json(bad), ValidationError);
}

TEST_CASE("tie queue file appends only new ties") {
  testing::TempDir dir;
  const auto path = dir / "ties.jsonl";
  const auto ties = sample_ties();
  CHECK(read_tie_queue(path).empty());
  CHECK(append_tie_queue(path, ties) == 2);
  CHECK(append_tie_queue(path, ties) == 0);
  CHECK(read_tie_queue(path) == ties);
}

TEST_CASE("queue lifecycle") {
  testing::TempDir dir;
  const auto log = dir / "decisions.jsonl";
  const auto ties = sample_ties();
  TieQueue q(ties, kVocab, log);
  q.set_clock([] { return std::string("2026-10-15T00:00:00Z"); });

  CHECK(q.list().size() == 2);
  CHECK(q.list()[0].image_id == "a");
  CHECK(q.progress().resolved == 0);
  CHECK(q.progress().total == 2);

  const auto id = q.list()[0].tie_id;
  CHECK_THROWS_AS(q.get("missing"), NotFoundError);
  CHECK_THROWS_AS(q.post_decision("missing", "CP", "e"), NotFoundError);
  CHECK_THROWS_AS(q.post_decision(id, "XYZ", "e"), ValidationError);

  const auto resolved = q.post_decision(id, "CP", "expert");
  REQUIRE(resolved.resolution);
  CHECK(resolved.resolution->chosen_class == "CP");
  CHECK_FALSE(resolved.resolution->override_vote);
  CHECK(q.post_decision(id, "CP", "someone-else").resolution->resolver == "expert");
  CHECK_THROWS_AS(q.post_decision(id, "MH", "expert"), ConflictError);
  CHECK(read_decisions(log).size() == 1);

  const auto other = q.list(TieStatus::pending)[0].tie_id;
  CHECK(q.post_decision(other, "PCH", "expert").resolution->override_vote);
  CHECK(q.list(TieStatus::resolved).size() == 2);
  CHECK(q.progress().resolved == 2);

  // A restarted queue picks up where the log left off.
  TieQueue again(ties, kVocab, log);
  CHECK(again.progress().resolved == 2);
  CHECK(again.get(other).resolution->chosen_class == "PCH");
}

TEST_CASE("decisions log survives truncation at any byte") {
  testing::TempDir dir;
  const auto log = dir / "decisions.jsonl";
  const auto ties = sample_ties();
  {
    TieQueue q(ties, kVocab, log);
    q.post_decision(ties[0].tie_id, "CP", "e1");
    q.post_decision(ties[1].tie_id, "MH", "e2");
  }
  const auto full = read_text_file(log);
  const auto decisions = read_decisions(log);
  REQUIRE(decisions.size() == 2);
  const auto cut = dir / "cut.jsonl";
  for (std::size_t n = 0; n <= full.size(); ++n) {
    write_text_file(cut, full.substr(0, n));
    std::vector<std::string> warnings;
    const auto got = read_decisions(cut, [&](const std::string& w) { warnings.push_back(w); });
    REQUIRE(got.size() <= decisions.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == decisions[i]);
    TieQueue resumed(ties, kVocab, cut);
    CHECK(resumed.progress().resolved == got.size());
  }
}

TEST_CASE("replay keeps the first decision") {
  const auto ties = sample_ties();
  const std::vector<Decision> ds{{ties[0].tie_id, ties[0].image_id, "CP", "e", "t1", false},
                                 {ties[0].tie_id, ties[0].image_id, "MH", "e", "t2", false},
                                 {"unknown", "a", "CP", "e", "t3", false}};
  std::vector<std::string> warnings;
  const auto out = replay(ties, ds, [&](const std::string& w) { warnings.push_back(w); });
  CHECK(out[0].resolution->chosen_class == "CP");
  CHECK(out[1].pending());
  CHECK(warnings.size() == 2);
}

TEST_CASE("crops clamp to the image and shift overlays") {
  testing::TempDir dir;
  const auto ties = sample_ties();
  TieQueue q(ties, kVocab, dir / "d.jsonl");
  const auto id = q.list()[0].tie_id;

  auto c = q.crop(id, 5, {});
  CHECK(c.x == 5);
  CHECK(c.y == 5);
  CHECK(c.width == 40);
  CHECK(c.height == 41);
  CHECK_FALSE(c.image.has_value());
  CHECK(c.members[0].box.x_min == 5);

  c = q.crop(id, 500, {});
  CHECK(c.x == 0);
  CHECK(c.y == 0);
  CHECK(c.width == 100);
  CHECK(c.height == 100);
  CHECK_THROWS_AS(q.crop(id, -1, {}), ValidationError);

  GrayImage img(100, 100, 7);
  img.at(12, 30) = 200;
  write_pgm(img, dir / "a.pgm");
  c = q.crop(id, 5, dir.path());
  REQUIRE(c.image);
  CHECK(c.image->width == 40);
  CHECK(c.image->at(7, 25) == 200);
  CHECK(crop_overlay_json(c)["members"].size() == 2);
}

TEST_CASE("resume and priority over clusters") {
  const auto clusters = form_clusters(std::vector{ann(0, 0, 10, 10, "CP"), ann(0, 0, 10, 10, "MH", "B")});
  CHECK_THROWS_AS(resume_with_decisions(clusters, {}), ReviewRequired);
  const std::vector<Decision> ds{{clusters[0].cluster_id, "img", "MH", "e", "t", false}};
  const auto resumed = resume_with_decisions(clusters, ds);
  for (const auto& m : resumed[0].members) CHECK(m.class_id == "MH");
  const auto auto_resolved = resolve_with_priority(clusters, default_tie_priority());
  for (const auto& m : auto_resolved[0].members) CHECK(m.class_id == "CP");
}

TEST_CASE("HTTP review API") {
  testing::TempDir dir;
  const auto ties = sample_ties();
  TieQueue q(ties, kVocab, dir / "decisions.jsonl");
  GrayImage img(100, 100, 9);
  write_pgm(img, dir / "a.pgm");
  std::filesystem::create_directories(dir / "static");
  write_text_file(dir / "static" / "index.html", "<html>review</html>");

  ServerOptions opts;
  opts.port = 0;
  opts.image_dir = dir.path();
  opts.static_dir = dir / "static";
  ReviewServer server(q, opts);
  const int port = server.start();
  httplib::Client cli("127.0.0.1", port);

  auto res = cli.Get("/api/ties?status=pending");
  REQUIRE(res);
  CHECK(res->status == 200);
  auto body = json::parse(res->body);
  CHECK(body["ties"].size() == 2);
  CHECK(body["progress"]["pending"] == 2);
  const std::string id_a = body["ties"][0]["tie_id"];
  const std::string id_b = body["ties"][1]["tie_id"];

  res = cli.Get("/api/ties/" + id_a);
  REQUIRE(res);
  CHECK(json::parse(res->body)["image_id"] == "a");
  CHECK(cli.Get("/api/ties/nope")->status == 404);
  CHECK(cli.Get("/api/ties?status=bogus")->status == 400);

  res = cli.Get("/api/ties/" + id_a + "/crop?margin=5");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("X-Crop-Status") == "ok");
  CHECK(decode_pgm(res->body).width == 40);
  res = cli.Get(res->get_header_value("X-Overlay-Metadata"));
  CHECK(json::parse(res->body)["width"] == 40);

  res = cli.Get("/api/ties/" + id_b + "/crop");
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["status"] == "no-image");

  const auto post = [&](const std::string& id, const std::string& payload) {
    return cli.Post("/api/ties/" + id + "/decision", payload, "application/json");
  };
  CHECK(post(id_a, R"({"class":"CP","resolver":"web"})")->status == 200);
  CHECK(post(id_a, R"({"class":"CP","resolver":"web"})")->status == 200);
  CHECK(post(id_a, R"({"class":"MH"})")->status == 409);
  CHECK(post(id_b, R"({"class":"XYZ"})")->status == 400);
  CHECK(post(id_b, "not json")->status == 400);
  CHECK(post("nope", R"({"class":"CP"})")->status == 404);

  body = json::parse(cli.Get("/api/progress")->body);
  CHECK(body["resolved"] == 1);
  CHECK(body["total"] == 2);
  CHECK(read_decisions(dir / "decisions.jsonl").size() == 1);

  res = cli.Get("/index.html");
  REQUIRE(res);
  CHECK(res->body == "<html>review</html>");

  // Concurrent posts to one tie: exactly one decision lands in the log.
  std::vector<std::thread> workers;
  std::atomic<int> ok{0}, conflict{0};
  for (int i = 0; i < 8; ++i) {
    workers.emplace_back([&, i] {
      httplib::Client c("127.0.0.1", port);
      auto r = c.Post("/api/ties/" + id_b + "/decision", json{{"class", i % 2 ? "CP" : "MH"}}.dump(),
                      "application/json");
      if (r && r->status == 200) ++ok;
      if (r && r->status == 409) ++conflict;
    });
  }
  for (auto& w : workers) w.join();
  CHECK(ok + conflict == 8);
  CHECK(read_decisions(dir / "decisions.jsonl").size() == 2);
  server.stop();
}
