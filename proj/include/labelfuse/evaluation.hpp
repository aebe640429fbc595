#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "labelfuse/annotation.hpp"
#include "labelfuse/rules.hpp"

namespace labelfuse {

/// A prediction is an Annotation whose confidence is the model score.
using Detection = Annotation;

struct MatchResult {
  std::vector<bool> true_positive;  // aligned with the input detection order
  std::size_t false_negatives = 0;
};

/// Greedy matching for one image and one class. Detections are visited by
/// descending confidence (input order breaks ties); each takes the unmatched
/// label with the highest IoU >= iou_threshold, lowest label index on ties.
MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const Annotation> labels, double iou_threshold);

struct ScoredFlag {
  double confidence = 0.0;
  bool true_positive = false;
};

/// All-point interpolated AP: area under the running-max precision envelope
/// over recall, flags ranked by descending confidence (stable).
/// Returns nullopt when there are neither labels nor detections; 0 when
/// there are detections but no labels.
std::optional<double> average_precision(std::span<const ScoredFlag> flags, std::size_t total_labels);

/// IoU thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> coco_thresholds();

double fitness(double map50, double map50_95) noexcept;

struct ClassReport {
  ClassId class_id;
  std::size_t label_count = 0;
  std::size_t detection_count = 0;
  std::vector<std::optional<double>> ap;  // one per report threshold
  std::size_t tp = 0, fp = 0, fn = 0;     // at IoU 0.5
  /// Predicted but never labeled: AP reported as 0 and left out of the means.
  bool unlabeled = false;
};

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<ClassReport> classes;
  double map50 = 0.0;
  double map50_95 = 0.0;
  double fitness = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  std::size_t images = 0;

  const ClassReport* find(std::string_view cls) const;
};

struct EvalOptions {
  /// Drop images with this partition tag (taken from the label manifest).
  std::optional<std::string> exclude_partition;
  /// Run the expert rules over the predictions before scoring.
  std::optional<RuleConfig> post_process_preds;
};

/// Mean over classes that have labels of the per-class AP at one threshold.
/// Throws ValidationError when the label manifest has no labels.
double mean_average_precision(const DatasetManifest& predictions, const DatasetManifest& labels,
                              double iou_threshold);

/// mAP averaged over coco_thresholds().
double map_range(const DatasetManifest& predictions, const DatasetManifest& labels);

/// Throws ValidationError when a prediction refers to an image missing
/// from the label manifest, or when nothing is labeled.
EvalReport eval_report(const DatasetManifest& predictions, const DatasetManifest& labels,
                       const EvalOptions& options = {});

nlohmann::json report_to_json(const EvalReport& r);
/// Plain-text table: per-class AP@0.5, mAP@0.5, mAP@0.5:0.95, fitness.
std::string report_table(const EvalReport& r);

}  // namespace labelfuse

namespace labelfuse {

/// Class-aware one-to-one matching counts with every score treated equal.
struct MatchCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision() const noexcept;
  double recall() const noexcept;
  double f1() const noexcept;
};

MatchCounts count_matches(const DatasetManifest& predictions, const DatasetManifest& labels,
                          double iou_threshold = 0.5);

}  // namespace labelfuse
