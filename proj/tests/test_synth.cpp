#include <cmath>

#include "doctest.h"
#include "labelfuse/error.hpp"
#include "labelfuse/synth.hpp"

using namespace labelfuse;

namespace {

SceneParams busy() {
  SceneParams p;
  p.pch_rate = 0.01;
  p.mh_rate = 0.01;
  p.cp_rate = 0.005;
  p.render = false;
  return p;
}

}  // namespace

TEST_CASE("defect-free lattice") {
  SceneParams p;
  p.pch_rate = p.mh_rate = p.cp_rate = 0;
  const auto s = generate_scene(p, 1);
  CHECK(s.ground_truth.empty());
  CHECK_FALSE(s.partition_tag.has_value());
  CHECK(s.sites.size() > 500);
  CHECK(s.raster.width == 1000);
  CHECK(s.raster.pixels.size() == 1000u * 1000u);
}

TEST_CASE("scene parameter validation") {
  SceneParams p;
  p.pitch = 20;
  CHECK_THROWS_AS(generate_scene(p, 1), ValidationError);
  p = {};
  p.mh_rate = 1.5;
  CHECK_THROWS_AS(generate_scene(p, 1), ValidationError);
  p = {};
  p.width = p.height = 20;
  CHECK_THROWS_AS(generate_scene(p, 1), ValidationError);
  p = {};
  p.cp_min_holes = 1;
  CHECK_THROWS_AS(generate_scene(p, 1), ValidationError);
}

TEST_CASE("scenes are deterministic per seed") {
  SceneParams p = busy();
  p.render = true;
  const auto a = generate_scene(p, 99, "x");
  const auto b = generate_scene(p, 99, "x");
  CHECK(a.ground_truth == b.ground_truth);
  CHECK(a.raster.pixels == b.raster.pixels);
  CHECK(generate_scene(p, 100, "x").ground_truth != a.ground_truth);
}

TEST_CASE("ground-truth structure") {
  const auto p = busy();
  std::size_t cps = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto s = generate_scene(p, seed);
    REQUIRE(s.defect_sites.size() == s.ground_truth.size());
    for (std::size_t i = 0; i < s.ground_truth.size(); ++i) {
      const auto& gt = s.ground_truth[i];
      std::vector<BBox> bounds;
      for (std::size_t site : s.defect_sites[i]) bounds.push_back(s.site_bounds(site));
      CHECK(gt.box == enclosing_box(bounds));
      if (gt.class_id == "CP") {
        ++cps;
        CHECK(s.defect_sites[i].size() >= 2);
        CHECK(s.defect_sites[i].size() <= 6);
      } else {
        CHECK(s.defect_sites[i].size() == 1);
      }
      for (std::size_t j = i + 1; j < s.ground_truth.size(); ++j) {
        CHECK(intersection_area(gt.box, s.ground_truth[j].box) == 0.0);
      }
    }
    if (s.ground_truth.size() == 1) CHECK(s.partition_tag == s.ground_truth[0].class_id);
    if (s.ground_truth.size() > 1) CHECK(s.partition_tag == "MD");
    CHECK(s.raster.pixels.empty());
  }
  CHECK(cps > 0);
}

TEST_CASE("annotator simulation") {
  const auto s = generate_scene(busy(), 7);
  REQUIRE(s.ground_truth.size() >= 3);

  const auto same = simulate_annotator(s, AnnotatorProfile::identity("id"), 1);
  REQUIRE(same.size() == s.ground_truth.size());
  for (std::size_t i = 0; i < same.size(); ++i) {
    CHECK(same[i].box == s.ground_truth[i].box);
    CHECK(same[i].class_id == s.ground_truth[i].class_id);
    CHECK(same[i].annotator == "id");
  }

  auto blind = AnnotatorProfile::identity("blind");
  blind.miss_rate = {{"CP", 1.0}, {"MH", 1.0}, {"PCH", 1.0}};
  CHECK(simulate_annotator(s, blind, 1).empty());

  auto collapse = AnnotatorProfile::identity("c");
  collapse.md_collapse = true;
  const auto md = simulate_annotator(s, collapse, 1);
  CHECK(md.size() == s.ground_truth.size());
  for (const auto& a : md) CHECK(a.class_id == "MD");

  CHECK(simulate_annotator(s, AnnotatorProfile::over_labeler(), 3) ==
        simulate_annotator(s, AnnotatorProfile::over_labeler(), 3));

  auto bad = AnnotatorProfile::identity("bad");
  bad.misclassification = {{"MH", {{"MH", 0.5}, {"PCH", 0.2}}}};
  CHECK_THROWS_AS(simulate_annotator(s, bad, 1), ValidationError);
}

TEST_CASE("miss rate matches its binomial expectation") {
  const auto p = busy();
  auto profile = AnnotatorProfile::identity("m");
  profile.miss_rate = {{"CP", 0.3}, {"MH", 0.3}, {"PCH", 0.3}};
  std::size_t total = 0, kept = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = generate_scene(p, seed);
    total += s.ground_truth.size();
    kept += simulate_annotator(s, profile, seed + 1000).size();
  }
  const double expected = 0.7 * static_cast<double>(total);
  const double sigma = std::sqrt(static_cast<double>(total) * 0.3 * 0.7);
  CHECK(std::abs(static_cast<double>(kept) - expected) <= 4 * sigma);
}

TEST_CASE("benchmark bundles") {
  const auto b = make_benchmark(busy(), 5, 3, {AnnotatorProfile::over_labeler(), AnnotatorProfile::baseline()});
  CHECK(b.ground_truth.images.size() == 5);
  REQUIRE(b.annotators.size() == 2);
  CHECK(b.annotators[0].provenance == std::vector<std::string>{"A"});
  CHECK(b.ground_truth.images[4].image_id == "img_0004");
  for (const auto& m : b.annotators) CHECK_NOTHROW(validate(m));
  CHECK_NOTHROW(validate(b.ground_truth));
  const auto again = make_benchmark(busy(), 5, 3, {AnnotatorProfile::over_labeler(), AnnotatorProfile::baseline()});
  CHECK(again.annotators == b.annotators);
}
