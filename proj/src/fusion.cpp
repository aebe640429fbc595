#include "labelfuse/fusion.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

#include "labelfuse/error.hpp"

namespace labelfuse {

namespace {

bool summation_less(const Annotation& a, const Annotation& b) {
  return std::tie(a.annotator, a.box.x_min, a.box.y_min, a.box.x_max, a.box.y_max, a.confidence) <
         std::tie(b.annotator, b.box.x_min, b.box.y_min, b.box.x_max, b.box.y_max, b.confidence);
}

bool uniform_class(const Cluster& c) {
  return std::all_of(c.members.begin(), c.members.end(), [&](const Annotation& m) {
    return m.class_id == c.members.front().class_id;
  });
}

}  // namespace

Annotation fuse_cluster(const Cluster& c) {
  if (c.members.empty()) throw ValidationError("cannot fuse an empty cluster");
  if (!uniform_class(c)) {
    throw ValidationError("cluster " + c.cluster_id + " has mixed classes; vote before fusing");
  }
  std::vector<const Annotation*> ordered;
  ordered.reserve(c.members.size());
  for (const auto& m : c.members) {
    if (!(m.confidence > 0.0 && m.confidence <= 1.0)) {
      throw ValidationError("cluster " + c.cluster_id + " has a confidence outside (0,1]");
    }
    ordered.push_back(&m);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const Annotation* a, const Annotation* b) { return summation_less(*a, *b); });

  double wsum = 0.0, x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
  for (const Annotation* m : ordered) {
    wsum += m->confidence;
    x0 += m->confidence * m->box.x_min;
    y0 += m->confidence * m->box.y_min;
    x1 += m->confidence * m->box.x_max;
    y1 += m->confidence * m->box.y_max;
  }
  // Clamp against rounding so each coordinate stays inside its member range.
  auto bounded = [&](double v, auto field) {
    double lo = (*ordered.front()).box.*field, hi = lo;
    for (const Annotation* m : ordered) {
      lo = std::min(lo, m->box.*field);
      hi = std::max(hi, m->box.*field);
    }
    return std::clamp(v, lo, hi);
  };

  Annotation out;
  out.box = BBox(bounded(x0 / wsum, &BBox::x_min), bounded(y0 / wsum, &BBox::y_min),
                 bounded(x1 / wsum, &BBox::x_max), bounded(y1 / wsum, &BBox::y_max));
  out.class_id = c.members.front().class_id;
  out.confidence = wsum / static_cast<double>(ordered.size());
  out.annotator = std::string(kConsensusAnnotator);
  out.image_id = c.image_id;
  return out;
}

double wbf_rescaled_confidence(const Cluster& c, std::size_t model_count) {
  if (c.members.empty() || model_count == 0) return 0.0;
  double sum = 0.0;
  for (const auto& m : c.members) sum += m.confidence;
  const double n = static_cast<double>(c.members.size());
  const double models = static_cast<double>(model_count);
  return sum / n * std::min(n, models) / models;
}

std::vector<Annotation> fuse_image(std::span<const Cluster> clusters) {
  std::vector<std::string> pending;
  for (const auto& c : clusters) {
    if (!uniform_class(c)) pending.push_back(c.cluster_id);
  }
  if (!pending.empty()) {
    std::string ids;
    for (const auto& id : pending) ids += (ids.empty() ? "" : ", ") + id;
    throw ReviewRequired("unresolved clusters: " + ids);
  }
  std::vector<const Cluster*> ordered;
  for (const auto& c : clusters) ordered.push_back(&c);
  std::stable_sort(ordered.begin(), ordered.end(), [](const Cluster* a, const Cluster* b) {
    return a->cluster_id < b->cluster_id;
  });
  std::vector<Annotation> out;
  out.reserve(ordered.size());
  for (const Cluster* c : ordered) out.push_back(fuse_cluster(*c));
  return out;
}

}  // namespace labelfuse
