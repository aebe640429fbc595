#include "labelfuse/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <tuple>

#include "labelfuse/error.hpp"

namespace labelfuse {

bool seed_order_less(const Annotation& a, const Annotation& b) {
  const double area_a = area(a.box), area_b = area(b.box);
  if (area_a != area_b) return area_a > area_b;
  return std::tie(a.box.x_min, a.box.y_min, a.annotator, a.box.x_max, a.box.y_max, a.class_id,
                  a.confidence) < std::tie(b.box.x_min, b.box.y_min, b.annotator, b.box.x_max,
                                           b.box.y_max, b.class_id, b.confidence);
}

namespace {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string rounded(double v) {
  char buf[48];
  // llround keeps "-0.00" and "0.00" from hashing differently.
  const long long hundredths = std::llround(v * 100.0);
  std::snprintf(buf, sizeof(buf), "%lld", hundredths);
  return buf;
}

}  // namespace

std::string cluster_hash(std::string_view image_id, std::span<const Annotation> members) {
  std::vector<std::string> tuples;
  tuples.reserve(members.size());
  for (const auto& m : members) {
    tuples.push_back(m.annotator + '\x1f' + m.class_id + '\x1f' + rounded(m.box.x_min) + ',' +
                     rounded(m.box.y_min) + ',' + rounded(m.box.x_max) + ',' +
                     rounded(m.box.y_max));
  }
  std::sort(tuples.begin(), tuples.end());
  std::uint64_t h = fnv1a(image_id);
  for (const auto& t : tuples) {
    h = fnv1a("\x1e", h);
    h = fnv1a(t, h);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<Cluster> form_clusters(std::span<const Annotation> annotations, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw ValidationError("clustering IoU threshold must lie in (0,1]");
  }
  if (annotations.empty()) return {};
  const std::string& image_id = annotations.front().image_id;
  for (const auto& a : annotations) {
    if (a.image_id != image_id) {
      throw ValidationError("form_clusters got annotations from images '" + image_id + "' and '" +
                            a.image_id + "'");
    }
  }

  std::vector<std::size_t> order(annotations.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return seed_order_less(annotations[i], annotations[j]);
  });

  std::vector<bool> assigned(annotations.size(), false);
  std::vector<Cluster> clusters;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t seed = order[oi];
    if (assigned[seed]) continue;
    assigned[seed] = true;
    Cluster c;
    c.image_id = image_id;
    c.seed_index = 0;
    c.members.push_back(annotations[seed]);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t k = order[oj];
      if (assigned[k]) continue;
      if (iou(annotations[k].box, annotations[seed].box) >= iou_threshold) {
        assigned[k] = true;
        c.members.push_back(annotations[k]);
      }
    }
    c.cluster_id = cluster_hash(image_id, c.members);
    clusters.push_back(std::move(c));
  }
  return clusters;
}

VoteOutcome vote(const Cluster& c) {
  std::map<ClassId, std::size_t> counts;
  for (const auto& m : c.members) ++counts[m.class_id];
  std::size_t best = 0;
  for (const auto& [cls, n] : counts) best = std::max(best, n);
  std::vector<ClassId> top;
  for (const auto& [cls, n] : counts) {
    if (n == best) top.push_back(cls);
  }
  if (top.size() == 1) return Decided{top.front()};
  return Tie{std::move(top)};  // std::map iteration already sorted
}

Cluster apply_vote(Cluster c, const ClassId& cls) {
  for (auto& m : c.members) m.class_id = cls;
  return c;
}

Cluster apply_vote(Cluster c, const VoteOutcome& outcome) {
  if (const auto* d = std::get_if<Decided>(&outcome)) return apply_vote(std::move(c), d->class_id);
  throw ValidationError("cluster " + c.cluster_id + " has a tied vote; resolve it first");
}

std::vector<TieRecord> collect_ties(std::span<const Cluster> clusters) {
  std::vector<TieRecord> out;
  for (const auto& c : clusters) {
    auto outcome = vote(c);
    if (auto* t = std::get_if<Tie>(&outcome)) {
      TieRecord rec;
      rec.tie_id = c.cluster_id;
      rec.image_id = c.image_id;
      rec.members = c.members;
      rec.tied_classes = std::move(t->classes);
      out.push_back(std::move(rec));
    }
  }
  std::sort(out.begin(), out.end(), [](const TieRecord& a, const TieRecord& b) {
    return std::tie(a.image_id, a.tie_id) < std::tie(b.image_id, b.tie_id);
  });
  return out;
}

ClassId resolve_by_priority(const Tie& tie, std::span<const ClassId> priority) {
  for (const auto& p : priority) {
    if (std::find(tie.classes.begin(), tie.classes.end(), p) != tie.classes.end()) return p;
  }
  if (tie.classes.empty()) throw ValidationError("empty tie");
  return tie.classes.front();
}

}  // namespace labelfuse
