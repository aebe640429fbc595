#include "labelfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "labelfuse/error.hpp"
#include "labelfuse/random.hpp"

namespace labelfuse {

namespace {

constexpr std::uint8_t kBackground = 180;
constexpr std::uint8_t kHole = 40;
constexpr std::uint8_t kPartialHole = 90;
constexpr double kRowFactor = 0.8660254037844386;  // sqrt(3)/2

BBox expanded(const BBox& b, double by) {
  return BBox(b.x_min - by, b.y_min - by, b.x_max + by, b.y_max + by);
}

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

std::vector<std::vector<std::size_t>> neighbors(const std::vector<LatticeSite>& sites, double pitch) {
  std::vector<std::vector<std::size_t>> adj(sites.size());
  const double reach = pitch * 1.05;
  // Sites are generated row by row, so candidates lie within a window of
  // roughly three rows.
  for (std::size_t i = 0; i < sites.size(); ++i) {
    for (std::size_t j = i + 1; j < sites.size(); ++j) {
      if (sites[j].y - sites[i].y > reach) break;
      if (std::hypot(sites[j].x - sites[i].x, sites[j].y - sites[i].y) <= reach) {
        adj[i].push_back(j);
        adj[j].push_back(i);
      }
    }
  }
  return adj;
}

void draw_disk(GrayImage& img, double cx, double cy, double r, std::uint8_t value) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + r)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= r * r) img.at(x, y) = value;
    }
  }
}

BBox jitter(const BBox& b, double sigma, int width, int height, Rng& rng) {
  if (sigma <= 0.0) return b;
  double x0 = b.x_min + rng.normal(0.0, sigma), y0 = b.y_min + rng.normal(0.0, sigma);
  double x1 = b.x_max + rng.normal(0.0, sigma), y1 = b.y_max + rng.normal(0.0, sigma);
  if (x1 < x0) std::swap(x0, x1);
  if (y1 < y0) std::swap(y0, y1);
  x0 = std::clamp(x0, 0.0, width - 1.0);
  y0 = std::clamp(y0, 0.0, height - 1.0);
  x1 = std::clamp(std::max(x1, x0 + 1.0), 1.0, static_cast<double>(width));
  y1 = std::clamp(std::max(y1, y0 + 1.0), 1.0, static_cast<double>(height));
  return BBox(x0, y0, x1, y1);
}

}  // namespace

void SceneParams::validate() const {
  if (width <= 0 || height <= 0) throw ValidationError("scene size must be positive");
  if (!(hole_radius > 0.0) || !(pitch > 2.0 * hole_radius)) {
    throw ValidationError("lattice pitch must exceed twice the hole radius");
  }
  if (!in_unit(pch_rate) || !in_unit(mh_rate) || !in_unit(cp_rate)) {
    throw ValidationError("defect rates must lie in [0,1]");
  }
  if (cp_min_holes < 2 || cp_max_holes < cp_min_holes) {
    throw ValidationError("closed patches need 2 <= min holes <= max holes");
  }
  if (noise_sigma < 0.0) throw ValidationError("noise sigma must be non-negative");
}

BBox Scene::site_bounds(std::size_t site) const {
  const auto& s = sites.at(site);
  return BBox(s.x - hole_radius, s.y - hole_radius, s.x + hole_radius, s.y + hole_radius);
}

std::vector<LatticeSite> hex_lattice(const SceneParams& params) {
  std::vector<LatticeSite> sites;
  const double margin = params.hole_radius + 2.0;
  const double dy = params.pitch * kRowFactor;
  int row = 0;
  for (double y = margin; y + margin <= params.height; y += dy, ++row) {
    for (double x = margin + (row % 2 ? params.pitch / 2 : 0.0); x + margin <= params.width;
         x += params.pitch) {
      sites.push_back({x, y});
    }
  }
  return sites;
}

Scene generate_scene(const SceneParams& params, std::uint64_t seed, std::string image_id) {
  params.validate();
  Scene scene;
  scene.image_id = std::move(image_id);
  scene.width = params.width;
  scene.height = params.height;
  scene.hole_radius = params.hole_radius;
  scene.sites = hex_lattice(params);
  if (scene.sites.empty()) throw ValidationError("scene parameters leave no lattice sites");

  const auto adj = neighbors(scene.sites, params.pitch);
  enum class Site { open, removed, partial };
  std::vector<Site> state(scene.sites.size(), Site::open);
  std::vector<bool> blocked(scene.sites.size(), false);
  std::vector<BBox> cp_boxes;
  Rng rng(seed);

  auto add_label = [&](const BBox& box, std::string_view cls, std::vector<std::size_t> sites) {
    scene.ground_truth.push_back(Annotation{box, ClassId(cls), 1.0, "ground_truth", scene.image_id});
    scene.defect_sites.push_back(std::move(sites));
  };

  for (std::size_t s = 0; s < scene.sites.size(); ++s) {
    if (blocked[s] || state[s] != Site::open || !rng.bernoulli(params.cp_rate)) continue;
    const auto target = static_cast<std::size_t>(
        params.cp_min_holes + rng.below(static_cast<std::uint64_t>(params.cp_max_holes - params.cp_min_holes + 1)));
    std::vector<std::size_t> patch{s};
    while (patch.size() < target) {
      std::set<std::size_t> frontier;
      for (std::size_t p : patch) {
        for (std::size_t q : adj[p]) {
          if (!blocked[q] && state[q] == Site::open &&
              std::find(patch.begin(), patch.end(), q) == patch.end()) {
            frontier.insert(q);
          }
        }
      }
      if (frontier.empty()) break;
      patch.push_back(*std::next(frontier.begin(), static_cast<std::ptrdiff_t>(rng.below(frontier.size()))));
    }
    if (patch.size() < static_cast<std::size_t>(params.cp_min_holes)) continue;
    std::vector<BBox> bounds;
    for (std::size_t p : patch) bounds.push_back(scene.site_bounds(p));
    const BBox box = enclosing_box(bounds);
    const BBox keep_out = expanded(box, params.pitch);
    if (std::any_of(cp_boxes.begin(), cp_boxes.end(),
                    [&](const BBox& other) { return intersects(keep_out, other); })) {
      continue;
    }
    for (std::size_t p : patch) state[p] = Site::removed;
    const BBox block_zone = expanded(box, params.pitch / 2);
    for (std::size_t q = 0; q < scene.sites.size(); ++q) {
      if (intersects(block_zone, scene.site_bounds(q))) blocked[q] = true;
    }
    cp_boxes.push_back(box);
    std::sort(patch.begin(), patch.end());
    add_label(box, classes::kClosedPatch, std::move(patch));
  }

  for (std::size_t s = 0; s < scene.sites.size(); ++s) {
    const double u = rng.uniform();
    if (blocked[s] || state[s] != Site::open) continue;
    if (u < params.mh_rate) {
      state[s] = Site::removed;
      add_label(scene.site_bounds(s), classes::kMissingHole, {s});
    } else if (u < params.mh_rate + params.pch_rate) {
      state[s] = Site::partial;
      add_label(scene.site_bounds(s), classes::kPartiallyClosedHole, {s});
    }
  }

  if (scene.ground_truth.size() == 1) {
    scene.partition_tag = scene.ground_truth.front().class_id;
  } else if (scene.ground_truth.size() > 1) {
    scene.partition_tag = std::string(classes::kMultipleDefect);
  }

  if (params.render) {
    scene.raster = GrayImage(params.width, params.height, kBackground);
    for (std::size_t s = 0; s < scene.sites.size(); ++s) {
      if (state[s] == Site::removed) continue;
      const bool partial = state[s] == Site::partial;
      draw_disk(scene.raster, scene.sites[s].x, scene.sites[s].y,
                params.hole_radius * (partial ? 0.45 : 1.0), partial ? kPartialHole : kHole);
    }
    if (params.noise_sigma > 0.0) {
      Rng noise(mix_seed(seed, 1));
      for (auto& px : scene.raster.pixels) {
        px = static_cast<std::uint8_t>(std::clamp(std::lround(px + noise.normal(0.0, params.noise_sigma)), 0L, 255L));
      }
    }
  }
  return scene;
}

void AnnotatorProfile::validate() const {
  for (const auto& [cls, r] : miss_rate) {
    if (!in_unit(r)) throw ValidationError("miss rate for " + cls + " outside [0,1]");
  }
  if (!in_unit(extra_label_rate)) throw ValidationError("extra label rate outside [0,1]");
  if (jitter_sigma < 0.0) throw ValidationError("jitter sigma must be non-negative");
  for (const auto& [cls, row] : misclassification) {
    double sum = 0.0;
    for (const auto& [to, p] : row) {
      if (!in_unit(p)) throw ValidationError("misclassification probability outside [0,1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ValidationError("misclassification row for " + cls + " does not sum to 1");
    }
  }
}

AnnotatorProfile AnnotatorProfile::identity(std::string name) {
  AnnotatorProfile p;
  p.name = std::move(name);
  return p;
}

AnnotatorProfile AnnotatorProfile::over_labeler(std::string name) {
  AnnotatorProfile p;
  p.name = std::move(name);
  p.miss_rate = {{"PCH", 0.30}, {"MH", 0.05}, {"CP", 0.02}};
  p.jitter_sigma = 0.5;
  p.extra_label_rate = 0.0002;
  p.label_cp_constituents = true;
  return p;
}

AnnotatorProfile AnnotatorProfile::baseline(std::string name) {
  AnnotatorProfile p;
  p.name = std::move(name);
  p.miss_rate = {{"PCH", 0.10}, {"MH", 0.10}, {"CP", 0.05}};
  p.jitter_sigma = 0.5;
  p.misclassification = {{"MH", {{"MH", 0.95}, {"PCH", 0.05}}},
                         {"PCH", {{"PCH", 0.95}, {"MH", 0.05}}}};
  return p;
}

AnnotatorProfile AnnotatorProfile::md_collapser(std::string name) {
  AnnotatorProfile p;
  p.name = std::move(name);
  p.miss_rate = {{"PCH", 0.08}, {"MH", 0.08}, {"CP", 0.03}};
  p.jitter_sigma = 0.5;
  p.md_collapse = true;
  return p;
}

std::vector<Annotation> simulate_annotator(const Scene& scene, const AnnotatorProfile& profile,
                                           std::uint64_t seed) {
  profile.validate();
  Rng rng(seed);
  const bool collapse = profile.md_collapse && scene.ground_truth.size() >= 2;
  std::vector<Annotation> out;
  auto emit = [&](const BBox& box, const ClassId& cls) {
    out.push_back(Annotation{jitter(box, profile.jitter_sigma, scene.width, scene.height, rng),
                             collapse ? ClassId(classes::kMultipleDefect) : cls, 1.0, profile.name,
                             scene.image_id});
  };
  auto redraw = [&](const ClassId& cls) {
    auto row = profile.misclassification.find(cls);
    if (row == profile.misclassification.end() || row->second.empty()) return cls;
    const double u = rng.uniform();
    double acc = 0.0;
    for (const auto& [to, p] : row->second) {
      acc += p;
      if (u < acc) return to;
    }
    return row->second.rbegin()->first;
  };

  std::vector<bool> defect_site(scene.sites.size(), false);
  for (std::size_t i = 0; i < scene.ground_truth.size(); ++i) {
    const auto& gt = scene.ground_truth[i];
    for (std::size_t s : scene.defect_sites[i]) defect_site[s] = true;
    auto miss = profile.miss_rate.find(gt.class_id);
    if (miss != profile.miss_rate.end() && rng.bernoulli(miss->second)) continue;
    emit(gt.box, redraw(gt.class_id));
    if (profile.label_cp_constituents && gt.class_id == classes::kClosedPatch) {
      for (std::size_t s : scene.defect_sites[i]) {
        emit(scene.site_bounds(s), ClassId(classes::kMissingHole));
      }
    }
  }
  if (profile.extra_label_rate > 0.0) {
    for (std::size_t s = 0; s < scene.sites.size(); ++s) {
      if (!defect_site[s] && rng.bernoulli(profile.extra_label_rate)) {
        emit(scene.site_bounds(s), profile.extra_label_class);
      }
    }
  }
  return out;
}

std::vector<ClassId> default_vocabulary() { return {"CP", "MH", "PCH", "MD"}; }

SynthBenchmark make_benchmark(const SceneParams& params, std::size_t image_count,
                              std::uint64_t seed, const std::vector<AnnotatorProfile>& profiles) {
  SynthBenchmark b;
  b.ground_truth.vocabulary = default_vocabulary();
  b.ground_truth.provenance = {"ground_truth"};
  b.ground_truth.metadata = {{"synth.generator", Rng::kAlgorithm}, {"synth.seed", std::to_string(seed)}};
  for (const auto& p : profiles) {
    DatasetManifest m;
    m.vocabulary = default_vocabulary();
    m.provenance = {p.name};
    m.metadata = b.ground_truth.metadata;
    b.annotators.push_back(std::move(m));
  }
  for (std::size_t i = 0; i < image_count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "img_%04zu", i);
    const std::uint64_t scene_seed = mix_seed(seed, i);
    Scene scene = generate_scene(params, scene_seed, id);
    ImageRecord rec{scene.image_id, scene.width, scene.height, scene.partition_tag, std::nullopt, {}};
    ImageRecord gt = rec;
    gt.annotations = scene.ground_truth;
    b.ground_truth.images.push_back(std::move(gt));
    for (std::size_t j = 0; j < profiles.size(); ++j) {
      ImageRecord ann = rec;
      ann.annotations = simulate_annotator(scene, profiles[j], mix_seed(scene_seed, 1000 + j));
      b.annotators[j].images.push_back(std::move(ann));
    }
    b.scenes.push_back(std::move(scene));
  }
  return b;
}

}  // namespace labelfuse
