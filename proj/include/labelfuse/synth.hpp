#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "labelfuse/annotation.hpp"
#include "labelfuse/raster.hpp"

namespace labelfuse {

/// Hexagonal contact-hole lattice scene parameters.
struct SceneParams {
  int width = 1000;
  int height = 1000;
  double pitch = 40.0;        // center distance between neighboring holes
  double hole_radius = 12.0;
  // Per-site probabilities of seeding each defect type.
  double pch_rate = 0.0015;
  double mh_rate = 0.0010;
  double cp_rate = 0.0008;
  int cp_min_holes = 2;
  int cp_max_holes = 6;
  double noise_sigma = 8.0;
  bool render = true;  // skip the raster when only labels are needed

  void validate() const;
};

struct LatticeSite {
  double x = 0.0;
  double y = 0.0;
};

struct Scene {
  std::string image_id;
  int width = 0;
  int height = 0;
  double hole_radius = 0.0;
  std::vector<LatticeSite> sites;
  std::vector<Annotation> ground_truth;
  /// Lattice sites behind each ground-truth label (aligned with ground_truth).
  std::vector<std::vector<std::size_t>> defect_sites;
  std::optional<std::string> partition_tag;  // single class, "MD", or none
  GrayImage raster;                          // empty unless params.render

  BBox site_bounds(std::size_t site) const;
};

std::vector<LatticeSite> hex_lattice(const SceneParams& params);

/// Deterministic per seed. Ground truth follows the final-dataset
/// convention: one box per closed patch and no hole labels inside it.
Scene generate_scene(const SceneParams& params, std::uint64_t seed, std::string image_id = "scene");

/// Simulated labeler behaviour.
struct AnnotatorProfile {
  std::string name;
  std::map<ClassId, double> miss_rate;  // absent class = never missed
  double jitter_sigma = 0.0;            // px, per box corner coordinate
  double extra_label_rate = 0.0;        // per defect-free lattice site
  ClassId extra_label_class = "PCH";
  /// true class -> distribution over emitted classes; absent row = identity.
  std::map<ClassId, std::map<ClassId, double>> misclassification;
  /// Label every defect as MD in images with two or more defects.
  bool md_collapse = false;
  /// Also label each closed hole inside a CP as a separate MH.
  bool label_cp_constituents = false;

  void validate() const;

  static AnnotatorProfile identity(std::string name);
  /// Labels holes inside closed patches separately, misses some PCHs and
  /// adds a few spurious labels.
  static AnnotatorProfile over_labeler(std::string name = "A");
  static AnnotatorProfile baseline(std::string name = "B");
  /// Collapses multi-defect images into the MD class.
  static AnnotatorProfile md_collapser(std::string name = "C");
};

std::vector<Annotation> simulate_annotator(const Scene& scene, const AnnotatorProfile& profile,
                                           std::uint64_t seed);

/// Ground truth plus one manifest per simulated annotator over the same images.
struct SynthBenchmark {
  DatasetManifest ground_truth;
  std::vector<DatasetManifest> annotators;
  std::vector<Scene> scenes;
};

SynthBenchmark make_benchmark(const SceneParams& params, std::size_t image_count,
                              std::uint64_t seed, const std::vector<AnnotatorProfile>& profiles);

std::vector<ClassId> default_vocabulary();  // CP, MH, PCH, MD

}  // namespace labelfuse
