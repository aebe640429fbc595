#include "doctest.h"
#include "labelfuse/error.hpp"
#include "labelfuse/evaluation.hpp"
#include "labelfuse/pipeline.hpp"
#include "labelfuse/synth.hpp"
#include "test_support.hpp"

using namespace labelfuse;
using testing::ann;

namespace {

DatasetManifest labeler(const std::string& name, std::vector<Annotation> anns) {
  auto m = testing::one_image_manifest(std::move(anns));
  m.provenance = {name};
  return m;
}

SynthBenchmark small_benchmark() {
  SceneParams p;
  p.render = false;
  p.pch_rate = 0.004;
  p.mh_rate = 0.003;
  p.cp_rate = 0.002;
  return make_benchmark(p, 12, 8,
                        {AnnotatorProfile::over_labeler(), AnnotatorProfile::baseline(),
                         AnnotatorProfile::md_collapser()});
}

}  // namespace

TEST_CASE("unanimous labelers reproduce their labels") {
  const std::vector anns{ann(0, 0, 10, 10, "MH", ""), ann(50, 50, 90, 80, "CP", "")};
  const std::vector inputs{labeler("A", anns), labeler("B", anns), labeler("C", anns)};
  const auto r = combine_datasets(inputs, {});
  CHECK_FALSE(r.review_required());
  CHECK(r.ties.empty());
  REQUIRE(r.combined.images.size() == 1);
  const auto& out = r.combined.images[0].annotations;
  REQUIRE(out.size() == 2);
  for (const auto& a : anns) {
    CHECK(std::any_of(out.begin(), out.end(), [&](const Annotation& o) { return o.box == a.box && o.class_id == a.class_id; }));
  }
  CHECK(r.combined.provenance == std::vector<std::string>{"A", "B", "C"});
}

TEST_CASE("majority vote then fusion across labelers") {
  const std::vector inputs{labeler("A", {ann(0, 0, 90, 90, "MH", "")}), labeler("B", {ann(0, 0, 100, 100, "CP", "")}),
                           labeler("C", {ann(10, 10, 100, 100, "CP", "")})};
  const auto r = combine_datasets(inputs, {});
  REQUIRE(r.combined.images[0].annotations.size() == 1);
  const auto& fused = r.combined.images[0].annotations[0];
  CHECK(fused.class_id == "CP");
  CHECK(fused.box.x_min == doctest::Approx(10.0 / 3).epsilon(1e-12));
  CHECK(fused.box.y_max == doctest::Approx(290.0 / 3).epsilon(1e-12));
  CHECK(r.fusion_diagnostics.size() == 1);
}

TEST_CASE("ties block combine until decided") {
  const std::vector inputs{labeler("A", {ann(0, 0, 10, 10, "MH", "")}), labeler("B", {ann(0, 0, 10, 10, "PCH", "")})};
  CombineOptions opts;
  auto r = combine_datasets(inputs, opts);
  CHECK(r.review_required());
  CHECK(r.combined.images.empty());
  REQUIRE(r.pending.size() == 1);
  CHECK(r.ties[0].tied_classes == std::vector<ClassId>{"MH", "PCH"});

  opts.decisions = {{r.pending[0], "img", "PCH", "expert", "t", false}};
  const auto decided = combine_datasets(inputs, opts);
  CHECK_FALSE(decided.review_required());
  CHECK(decided.combined.images[0].annotations[0].class_id == "PCH");
  CHECK(decided.ties[0].resolution->resolver == "expert");

  opts.decisions.clear();
  opts.tie_policy = TiePolicy::priority;
  const auto headless = combine_datasets(inputs, opts);
  CHECK(headless.combined.images[0].annotations[0].class_id == "MH");
  CHECK(headless.ties[0].resolution->resolver == "auto:priority");
}

TEST_CASE("combine rejects mismatched image sets") {
  auto a = labeler("A", {});
  auto b = labeler("B", {});
  b.images[0].image_id = "other";
  CHECK_THROWS_AS(combine_datasets(std::vector{a, b}, {}), ValidationError);
  CHECK(tie_policy_from_string(to_string(TiePolicy::priority)) == TiePolicy::priority);
  CHECK_THROWS_AS(tie_policy_from_string("coin"), ValidationError);
}

TEST_CASE("combine and finalize do not depend on the worker count") {
  const auto bench = small_benchmark();
  CombineOptions opts;
  opts.tie_policy = TiePolicy::priority;
  const auto one = combine_datasets(bench.annotators, opts);
  opts.workers = 4;
  const auto four = combine_datasets(bench.annotators, opts);
  CHECK(one.combined == four.combined);
  CHECK(one.ties == four.ties);
  CHECK(one.fusion_diagnostics == four.fusion_diagnostics);

  const auto f1 = finalize_dataset(one.combined, {}, &one.combined, 1);
  const auto f4 = finalize_dataset(one.combined, {}, &one.combined, 4);
  CHECK(f1.final_manifest == f4.final_manifest);
  CHECK(f1.audit == f4.audit);
  REQUIRE(f1.md_area_threshold);
  for (const auto& img : f1.final_manifest.images) {
    for (const auto& a : img.annotations) CHECK(a.class_id != "MD");
  }
  CHECK(f1.final_manifest.metadata.count("finalize.rule_order") == 1);
}

TEST_CASE("finalize needs a threshold when MDs remain") {
  const auto combined = testing::one_image_manifest({ann(0, 0, 50, 50, "MD")});
  CHECK_THROWS_AS(finalize_dataset(combined, {}, nullptr), ValidationError);
  RuleConfig cfg;
  cfg.residual_md_area_threshold = 100;
  const auto r = finalize_dataset(combined, cfg, nullptr);
  CHECK(r.final_manifest.images[0].annotations[0].class_id == "CP");
}

TEST_CASE("consensus improves on the individual labelers") {
  const auto bench = small_benchmark();
  CombineOptions opts;
  opts.tie_policy = TiePolicy::priority;
  const auto combined = combine_datasets(bench.annotators, opts);
  const auto final = finalize_dataset(combined.combined, {}, &combined.combined);
  const double f1 = count_matches(final.final_manifest, bench.ground_truth).f1();
  for (const auto& m : bench.annotators) CHECK(f1 >= count_matches(m, bench.ground_truth).f1());
}
