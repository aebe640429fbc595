#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "labelfuse/annotation.hpp"

namespace labelfuse {

inline constexpr double kClusterIoU = 0.5;

/// Group of overlapping annotations from one image awaiting vote and fusion.
struct Cluster {
  std::string cluster_id;  // content hash, stable across runs
  std::string image_id;
  std::vector<Annotation> members;
  std::size_t seed_index = 0;  // index into members

  friend bool operator==(const Cluster&, const Cluster&) = default;
};

struct Decided {
  ClassId class_id;
  friend bool operator==(const Decided&, const Decided&) = default;
};

struct Tie {
  std::vector<ClassId> classes;  // sorted, size >= 2
  friend bool operator==(const Tie&, const Tie&) = default;
};

using VoteOutcome = std::variant<Decided, Tie>;

/// Expert decision attached to a tie.
struct Resolution {
  ClassId chosen_class;
  std::string resolver;
  std::string timestamp;  // ISO-8601 UTC
  bool override_vote = false;  // chosen class was not among the tied classes

  friend bool operator==(const Resolution&, const Resolution&) = default;
};

/// Pending vote tie, persisted in the tie queue so review can resume later.
struct TieRecord {
  std::string tie_id;  // equals the cluster_id
  std::string image_id;
  int image_width = 0;  // 0 when unknown
  int image_height = 0;
  std::vector<Annotation> members;
  std::vector<ClassId> tied_classes;
  std::optional<Resolution> resolution;  // empty while pending

  bool pending() const noexcept { return !resolution.has_value(); }
  friend bool operator==(const TieRecord&, const TieRecord&) = default;
};

/// Strict weak order used to pick seeds: larger area first, then x_min,
/// y_min, annotator, with the remaining fields as final tie-breakers.
bool seed_order_less(const Annotation& a, const Annotation& b);

/// Stable id of a cluster: FNV-1a over the image id and the sorted
/// (annotator, class, box rounded to 0.01 px) member tuples.
std::string cluster_hash(std::string_view image_id, std::span<const Annotation> members);

/// Partitions one image's annotations. Each seed (in seed order) collects
/// every unassigned annotation whose IoU with the seed is >= threshold.
/// Throws ValidationError on mixed image ids or a threshold outside (0,1].
std::vector<Cluster> form_clusters(std::span<const Annotation> annotations,
                                   double iou_threshold = kClusterIoU);

VoteOutcome vote(const Cluster& c);

/// Relabels every member with `cls`. Geometry and the cluster id are kept.
Cluster apply_vote(Cluster c, const ClassId& cls);
/// Throws ValidationError if the outcome is a Tie.
Cluster apply_vote(Cluster c, const VoteOutcome& outcome);

/// One record per tied cluster, ordered by (image_id, tie_id).
std::vector<TieRecord> collect_ties(std::span<const Cluster> clusters);

/// Headless tie policy: the first class of `priority` that is tied wins;
/// tied classes missing from the list lose, in alphabetical order.
ClassId resolve_by_priority(const Tie& tie, std::span<const ClassId> priority);

}  // namespace labelfuse
