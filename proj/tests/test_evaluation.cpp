#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "labelfuse/error.hpp"
#include "labelfuse/evaluation.hpp"
#include "test_support.hpp"

using namespace labelfuse;
using testing::ann;

namespace {

// Integrates the interpolated precision over recall one label at a time:
// the i-th recall step (width 1/L) is worth the best precision of any
// ranking prefix that has found at least i labels.
double oracle_ap(std::vector<ScoredFlag> flags, std::size_t labels) {
  std::stable_sort(flags.begin(), flags.end(),
                   [](const ScoredFlag& a, const ScoredFlag& b) { return a.confidence > b.confidence; });
  double ap = 0.0;
  for (std::size_t i = 1; i <= labels; ++i) {
    double best = 0.0;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < flags.size(); ++k) {
      tp += flags[k].true_positive;
      if (tp >= i) best = std::max(best, static_cast<double>(tp) / static_cast<double>(k + 1));
    }
    ap += best / static_cast<double>(labels);
  }
  return ap;
}

// Visits detections by confidence and tries every free label, keeping the
// strictly better IoU, as a second reading of the matching rule.
std::vector<bool> oracle_match(const std::vector<Annotation>& dets, const std::vector<Annotation>& gts, double thr) {
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < dets.size(); ++i) order.emplace_back(-dets[i].confidence, i);
  std::stable_sort(order.begin(), order.end(), [](auto& a, auto& b) { return a.first < b.first; });
  std::vector<bool> used(gts.size()), tp(dets.size());
  for (auto [neg, d] : order) {
    std::optional<std::size_t> pick;
    for (std::size_t l = 0; l < gts.size(); ++l) {
      if (used[l] || iou(dets[d].box, gts[l].box) < thr) continue;
      if (!pick || iou(dets[d].box, gts[l].box) > iou(dets[d].box, gts[*pick].box)) pick = l;
    }
    if (pick) used[*pick] = tp[d] = true;
  }
  return tp;
}

DatasetManifest two_images(std::vector<Annotation> a, std::vector<Annotation> b) {
  DatasetManifest m;
  m.vocabulary = {"CP", "MH", "PCH", "MD"};
  for (auto [id, anns] : {std::pair{"a", &a}, {"b", &b}}) {
    ImageRecord r;
    r.image_id = id;
    r.width = r.height = 1000;
    for (auto& x : *anns) x.image_id = id;
    r.annotations = *anns;
    m.images.push_back(r);
  }
  return m;
}

}  // namespace

TEST_CASE("matching examples") {
  const std::vector label{ann(0, 0, 10, 10, "CP")};
  auto r = match_detections(std::vector{ann(0, 0, 10, 12.5, "CP", "m", "img", 0.9)}, label, 0.5);  // IoU 0.8
  CHECK(r.true_positive == std::vector<bool>{true});
  CHECK(r.false_negatives == 0);

  r = match_detections(std::vector{ann(0, 0, 10, 10, "CP", "m", "img", 0.8), ann(0, 0, 10, 11, "CP", "m", "img", 0.9)},
                       label, 0.5);
  CHECK(r.true_positive == std::vector<bool>{false, true});

  r = match_detections(std::vector{ann(0, 0, 4, 10, "CP", "m", "img", 0.9)}, label, 0.5);  // IoU 0.4
  CHECK(r.true_positive == std::vector<bool>{false});
  CHECK(r.false_negatives == 1);

  // Highest IoU wins; equal IoU goes to the lower label index.
  r = match_detections(std::vector{ann(0, 0, 10, 10, "CP")},
                       std::vector{ann(0, 0, 10, 12, "CP"), ann(0, 0, 10, 10, "CP"), ann(0, 0, 10, 10, "CP")}, 0.5);
  CHECK(r.true_positive[0]);
  CHECK(r.false_negatives == 2);
}

TEST_CASE("average precision examples") {
  CHECK(*average_precision(std::vector<ScoredFlag>{{0.9, true}}, 1) == 1.0);
  CHECK(*average_precision(std::vector<ScoredFlag>{}, 3) == 0.0);
  CHECK(*average_precision(std::vector<ScoredFlag>{{0.9, true}, {0.8, false}, {0.7, true}}, 2) ==
        doctest::Approx(0.8333).epsilon(1e-4));
  CHECK_FALSE(average_precision(std::vector<ScoredFlag>{}, 0).has_value());
  CHECK(*average_precision(std::vector<ScoredFlag>{{0.5, false}}, 0) == 0.0);
}

TEST_CASE("fitness") {
  CHECK(fitness(1, 1) == 1.0);
  CHECK(fitness(0, 0) == 0.0);
  CHECK(fitness(0.8, 0.6) == doctest::Approx(0.62).epsilon(1e-15));
  const auto t = coco_thresholds();
  REQUIRE(t.size() == 10);
  CHECK(t.front() == 0.5);
  CHECK(t.back() == doctest::Approx(0.95));
}

TEST_CASE("AP agrees with the brute-force oracle on small fixtures") {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::size_t labels = gen() % 7;
    const std::size_t n = gen() % 7;
    std::vector<ScoredFlag> flags;
    std::size_t tps = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool tp = tps < labels && gen() % 2;
      tps += tp;
      flags.push_back({static_cast<double>(gen() % 5) / 4.0, tp});  // repeated scores exercise ties
    }
    const auto ap = average_precision(flags, labels);
    if (labels == 0) {
      CHECK(ap.has_value() == !flags.empty());
      continue;
    }
    REQUIRE(ap.has_value());
    CHECK(std::abs(*ap - oracle_ap(flags, labels)) <= 1e-9);
  }
}

TEST_CASE("mAP over detections agrees with oracle matching and AP") {
  std::mt19937_64 gen(29);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Annotation> gts, dets;
    const std::size_t nl = 1 + gen() % 6, nd = gen() % 7;
    for (std::size_t i = 0; i < nl; ++i) {
      Annotation a = ann(0, 0, 1, 1, "MH");
      a.box = testing::random_box(gen, 120, 10, 40);
      gts.push_back(a);
    }
    std::uniform_real_distribution<double> conf(0.01, 1.0), shift(-6, 6);
    for (std::size_t i = 0; i < nd; ++i) {
      Annotation d = gts[gen() % nl];
      if (gen() % 4 == 0) d.box = testing::random_box(gen, 120, 10, 40);
      const double dx = shift(gen), dy = shift(gen);
      d.box = BBox(std::max(0.0, d.box.x_min + dx), std::max(0.0, d.box.y_min + dy), d.box.x_max + dx + 6,
                   d.box.y_max + dy + 6);
      d.confidence = conf(gen);
      dets.push_back(d);
    }
    const auto preds = testing::one_image_manifest(dets);
    const auto labels = testing::one_image_manifest(gts);
    double oracle_sum = 0.0;
    for (double thr : coco_thresholds()) {
      const auto tp = oracle_match(dets, gts, thr);
      std::vector<ScoredFlag> flags;
      for (std::size_t i = 0; i < dets.size(); ++i) flags.push_back({dets[i].confidence, tp[i]});
      const double expected = oracle_ap(flags, gts.size());
      oracle_sum += expected;
      if (thr == 0.5) CHECK(std::abs(mean_average_precision(preds, labels, thr) - expected) <= 1e-9);
    }
    const double range = map_range(preds, labels);
    CHECK(std::abs(range - oracle_sum / 10) <= 1e-9);
    const auto report = eval_report(preds, labels);
    CHECK(report.fitness == 0.1 * report.map50 + 0.9 * report.map50_95);
  }
}

TEST_CASE("AP invariants") {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> conf(0.05, 0.95);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t labels = 1 + gen() % 6;
    std::vector<ScoredFlag> flags;
    std::size_t tps = 0;
    for (int i = 0; i < 6; ++i) {
      const bool tp = tps + 1 < labels && gen() % 2;
      tps += tp;
      flags.push_back({conf(gen), tp});
    }
    const double base = *average_precision(flags, labels);

    auto top = flags;
    top.push_back({1.0, true});
    CHECK(*average_precision(top, labels) >= base - 1e-12);

    auto scaled = flags;
    for (auto& f : scaled) f.confidence *= 0.37;
    CHECK(*average_precision(scaled, labels) == base);

    auto bottom = flags;
    bottom.push_back({0.0, false});
    CHECK(*average_precision(bottom, labels) <= base + 1e-12);
  }
}

TEST_CASE("mAP50:95 never exceeds mAP50 on shrinking overlaps") {
  // Detections shifted by growing amounts so AP falls with the threshold.
  std::vector<Annotation> gts, dets;
  for (int i = 0; i < 5; ++i) {
    const double x = 100.0 * i;
    gts.push_back(ann(x, 0, x + 50, 50, "PCH"));
    dets.push_back(ann(x + 3.0 * i, 0, x + 50 + 3.0 * i, 50, "PCH", "m", "img", 0.9 - 0.1 * i));
  }
  const auto r = eval_report(testing::one_image_manifest(dets), testing::one_image_manifest(gts));
  const auto* pch = r.find("PCH");
  REQUIRE(pch != nullptr);
  for (std::size_t t = 1; t < pch->ap.size(); ++t) CHECK(*pch->ap[t] <= *pch->ap[t - 1]);
  CHECK(r.map50_95 <= r.map50);
  CHECK(r.map50 == 1.0);
}

TEST_CASE("eval_report") {
  const auto labels = two_images({ann(0, 0, 20, 20, "MH"), ann(100, 100, 300, 300, "CP")}, {ann(0, 0, 20, 20, "PCH")});
  auto same = labels;
  for (auto& img : same.images) {
    for (auto& a : img.annotations) a.confidence = 0.9;
  }
  auto r = eval_report(same, labels);
  CHECK(r.map50 == 1.0);
  CHECK(r.map50_95 == 1.0);
  CHECK(r.fitness == 1.0);
  CHECK(r.images == 2);
  CHECK(r.find("MD")->label_count == 0);
  CHECK_FALSE(r.find("MD")->ap[0].has_value());
  CHECK(report_to_json(r)["fitness"] == 1.0);
  CHECK(report_table(r).find("mAP") != std::string::npos);

  // Empty predictions score zero.
  auto empty = labels;
  for (auto& img : empty.images) img.annotations.clear();
  CHECK(eval_report(empty, labels).map50 == 0.0);

  // Predictions referring to an unknown image are rejected.
  auto stray = same;
  stray.images[0].image_id = "zzz";
  for (auto& a : stray.images[0].annotations) a.image_id = "zzz";
  CHECK_THROWS_AS(eval_report(stray, labels), ValidationError);

  CHECK_THROWS_AS(eval_report(empty, empty), ValidationError);

  // A predicted class nobody labeled is flagged and left out of the mean.
  auto extra = same;
  extra.images[0].annotations.push_back(ann(500, 500, 520, 520, "MD", "m", "a", 0.5));
  r = eval_report(extra, labels);
  CHECK(r.find("MD")->unlabeled);
  CHECK(*r.find("MD")->ap[0] == 0.0);
  CHECK(r.map50 == 1.0);
}

TEST_CASE("eval_report excludes a partition from both sides") {
  auto labels = two_images({ann(0, 0, 20, 20, "MH")}, {ann(0, 0, 20, 20, "MH"), ann(50, 50, 70, 70, "MH")});
  labels.images[1].partition_tag = "MD";
  auto preds = two_images({ann(0, 0, 20, 20, "MH", "m", "", 0.8)}, {ann(200, 200, 220, 220, "MH", "m", "", 0.9)});

  const auto all = eval_report(preds, labels);
  EvalOptions opts;
  opts.exclude_partition = "MD";
  const auto no_md = eval_report(preds, labels, opts);
  // Oracle: ranked FP@0.9, TP@0.8 over 3 labels -> 1/3 * 1/2
  CHECK(all.map50 == doctest::Approx(1.0 / 6));
  CHECK(no_md.map50 == 1.0);
  CHECK(no_md.images == 1);
}

TEST_CASE("eval_report post-processes predictions") {
  const auto labels = testing::one_image_manifest({ann(100, 100, 300, 300, "CP"), ann(500, 500, 520, 520, "PCH")});
  const auto preds = testing::one_image_manifest({ann(100, 100, 300, 300, "CP", "m", "img", 0.9),
                                                  ann(150, 150, 170, 170, "PCH", "m", "img", 0.9),
                                                  ann(500, 500, 520, 520, "PCH", "m", "img", 0.5)});
  const auto raw = eval_report(preds, labels);
  EvalOptions opts;
  opts.post_process_preds = RuleConfig{};
  const auto post = eval_report(preds, labels, opts);
  // Oracle: PCH ranked FP@0.9, TP@0.5 over 1 label -> 0.5; the rules drop the FP.
  CHECK(*raw.find("PCH")->ap[0] == doctest::Approx(0.5));
  CHECK(*post.find("PCH")->ap[0] == 1.0);
  CHECK(post.map50 > raw.map50);
}

TEST_CASE("count_matches is class aware") {
  const auto labels = testing::one_image_manifest({ann(0, 0, 10, 10, "CP"), ann(20, 20, 30, 30, "MH")});
  const auto preds = testing::one_image_manifest({ann(0, 0, 10, 10, "MH"), ann(20, 20, 30, 30, "MH")});
  const auto c = count_matches(preds, labels);
  CHECK(c.tp == 1);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(c.precision() == 0.5);
  CHECK(c.recall() == 0.5);
  CHECK(c.f1() == 0.5);
}
