#include "labelfuse/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "labelfuse/error.hpp"

namespace labelfuse {

MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const Annotation> labels, double iou_threshold) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].confidence > detections[b].confidence;
  });

  MatchResult r;
  r.true_positive.assign(detections.size(), false);
  std::vector<bool> taken(labels.size(), false);
  std::size_t matched = 0;
  for (std::size_t d : order) {
    double best_iou = -1.0;
    std::size_t best = labels.size();
    for (std::size_t l = 0; l < labels.size(); ++l) {
      if (taken[l]) continue;
      const double v = iou(detections[d].box, labels[l].box);
      if (v >= iou_threshold && v > best_iou) {
        best_iou = v;
        best = l;
      }
    }
    if (best < labels.size()) {
      taken[best] = true;
      r.true_positive[d] = true;
      ++matched;
    }
  }
  r.false_negatives = labels.size() - matched;
  return r;
}

std::optional<double> average_precision(std::span<const ScoredFlag> flags, std::size_t total_labels) {
  if (total_labels == 0) {
    if (flags.empty()) return std::nullopt;
    return 0.0;
  }
  std::vector<std::size_t> order(flags.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return flags[a].confidence > flags[b].confidence;
  });

  const double labels = static_cast<double>(total_labels);
  std::vector<double> precision(flags.size()), recall(flags.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (flags[order[k]].true_positive) ++tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / labels;
  }
  for (std::size_t k = precision.size(); k-- > 1;) {
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < recall.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return std::clamp(ap, 0.0, 1.0);
}

std::vector<double> coco_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

double fitness(double map50, double map50_95) noexcept { return 0.1 * map50 + 0.9 * map50_95; }

const ClassReport* EvalReport::find(std::string_view cls) const {
  for (const auto& c : classes) {
    if (c.class_id == cls) return &c;
  }
  return nullptr;
}

namespace {

struct Scope {
  std::vector<const ImageRecord*> label_images;
  std::vector<const ImageRecord*> pred_images;  // aligned, nullptr when no predictions
  std::vector<ClassId> classes;
};

Scope make_scope(const DatasetManifest& preds, const DatasetManifest& labels,
                 const std::optional<std::string>& exclude_partition) {
  std::map<std::string_view, const ImageRecord*> pred_by_id;
  for (const auto& img : preds.images) {
    if (!labels.find_image(img.image_id)) {
      throw ValidationError("prediction for unknown image '" + img.image_id + "'");
    }
    pred_by_id[img.image_id] = &img;
  }
  Scope s;
  s.classes = labels.vocabulary;
  auto add_class = [&](const ClassId& c) {
    if (std::find(s.classes.begin(), s.classes.end(), c) == s.classes.end()) s.classes.push_back(c);
  };
  for (const auto& img : labels.images) {
    if (exclude_partition && img.partition_tag == *exclude_partition) continue;
    s.label_images.push_back(&img);
    auto it = pred_by_id.find(img.image_id);
    s.pred_images.push_back(it == pred_by_id.end() ? nullptr : it->second);
    for (const auto& a : img.annotations) add_class(a.class_id);
    if (it != pred_by_id.end()) {
      for (const auto& a : it->second->annotations) add_class(a.class_id);
    }
  }
  return s;
}

std::vector<Annotation> of_class(const ImageRecord* img, const ClassId& cls) {
  std::vector<Annotation> out;
  if (!img) return out;
  for (const auto& a : img->annotations) {
    if (a.class_id == cls) out.push_back(a);
  }
  return out;
}

EvalReport evaluate(const DatasetManifest& preds, const DatasetManifest& labels,
                    const std::optional<std::string>& exclude_partition,
                    const std::vector<double>& thresholds) {
  const Scope scope = make_scope(preds, labels, exclude_partition);
  EvalReport r;
  r.thresholds = thresholds;
  r.images = scope.label_images.size();
  std::size_t total_labels = 0;

  const auto t50 = std::find(thresholds.begin(), thresholds.end(), 0.5);
  for (const auto& cls : scope.classes) {
    ClassReport cr;
    cr.class_id = cls;
    std::vector<std::vector<Annotation>> dets(scope.label_images.size()), gts(dets.size());
    for (std::size_t i = 0; i < dets.size(); ++i) {
      dets[i] = of_class(scope.pred_images[i], cls);
      gts[i] = of_class(scope.label_images[i], cls);
      cr.detection_count += dets[i].size();
      cr.label_count += gts[i].size();
    }
    cr.unlabeled = cr.label_count == 0 && cr.detection_count > 0;
    for (double thr : thresholds) {
      std::vector<ScoredFlag> flags;
      std::size_t fn = 0;
      for (std::size_t i = 0; i < dets.size(); ++i) {
        const auto m = match_detections(dets[i], gts[i], thr);
        for (std::size_t d = 0; d < dets[i].size(); ++d) {
          flags.push_back({dets[i][d].confidence, m.true_positive[d]});
        }
        fn += m.false_negatives;
      }
      if (t50 != thresholds.end() && thr == 0.5) {
        cr.tp = static_cast<std::size_t>(
            std::count_if(flags.begin(), flags.end(), [](const ScoredFlag& f) { return f.true_positive; }));
        cr.fp = flags.size() - cr.tp;
        cr.fn = fn;
      }
      cr.ap.push_back(average_precision(flags, cr.label_count));
    }
    total_labels += cr.label_count;
    r.tp += cr.tp;
    r.fp += cr.fp;
    r.fn += cr.fn;
    r.classes.push_back(std::move(cr));
  }
  if (total_labels == 0) throw ValidationError("label manifest has no labels to evaluate against");
  return r;
}

double class_mean(const EvalReport& r, std::size_t threshold_index) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : r.classes) {
    if (c.label_count == 0) continue;
    sum += c.ap[threshold_index].value_or(0.0);
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace

double mean_average_precision(const DatasetManifest& predictions, const DatasetManifest& labels,
                              double iou_threshold) {
  return class_mean(evaluate(predictions, labels, std::nullopt, {iou_threshold}), 0);
}

double map_range(const DatasetManifest& predictions, const DatasetManifest& labels) {
  const auto r = evaluate(predictions, labels, std::nullopt, coco_thresholds());
  double sum = 0.0;
  for (std::size_t t = 0; t < r.thresholds.size(); ++t) sum += class_mean(r, t);
  return sum / static_cast<double>(r.thresholds.size());
}

EvalReport eval_report(const DatasetManifest& predictions, const DatasetManifest& labels,
                       const EvalOptions& options) {
  const DatasetManifest* preds = &predictions;
  DatasetManifest processed;
  if (options.post_process_preds) {
    processed = apply_rules(predictions, *options.post_process_preds);
    preds = &processed;
  }
  EvalReport r = evaluate(*preds, labels, options.exclude_partition, coco_thresholds());
  double sum = 0.0;
  for (std::size_t t = 0; t < r.thresholds.size(); ++t) sum += class_mean(r, t);
  r.map50 = class_mean(r, 0);
  r.map50_95 = sum / static_cast<double>(r.thresholds.size());
  r.fitness = fitness(r.map50, r.map50_95);
  return r;
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : r.classes) {
    nlohmann::json ap = nlohmann::json::array();
    for (const auto& v : c.ap) ap.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
    classes.push_back({{"class", c.class_id},
                       {"labels", c.label_count},
                       {"detections", c.detection_count},
                       {"ap", ap},
                       {"ap50", c.ap.empty() || !c.ap[0] ? nlohmann::json(nullptr) : nlohmann::json(*c.ap[0])},
                       {"tp", c.tp},
                       {"fp", c.fp},
                       {"fn", c.fn},
                       {"unlabeled", c.unlabeled}});
  }
  return {{"thresholds", r.thresholds}, {"classes", classes}, {"map50", r.map50},
          {"map50_95", r.map50_95},     {"fitness", r.fitness}, {"tp", r.tp},
          {"fp", r.fp},                 {"fn", r.fn},           {"images", r.images}};
}

std::string report_table(const EvalReport& r) {
  std::ostringstream os;
  char buf[64];
  os << "AP (@0.5 IoU) over " << r.images << " images\n";
  for (const auto& c : r.classes) {
    std::snprintf(buf, sizeof(buf), "%-8s", c.class_id.c_str());
    os << buf;
  }
  os << "All (mAP)\n";
  for (const auto& c : r.classes) {
    if (c.ap.empty() || !c.ap[0] || c.label_count == 0) {
      std::snprintf(buf, sizeof(buf), "%-8s", "--");
    } else {
      std::snprintf(buf, sizeof(buf), "%-8.3f", *c.ap[0]);
    }
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "%.3f\n", r.map50);
  os << buf;
  std::snprintf(buf, sizeof(buf), "mAP@0.5:0.95 %.3f  fitness %.3f  TP %zu FP %zu FN %zu\n",
                r.map50_95, r.fitness, r.tp, r.fp, r.fn);
  os << buf;
  for (const auto& c : r.classes) {
    if (c.unlabeled) os << "note: class " << c.class_id << " is predicted but never labeled\n";
  }
  return os.str();
}

}  // namespace labelfuse

namespace labelfuse {

double MatchCounts::precision() const noexcept {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double MatchCounts::recall() const noexcept {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double MatchCounts::f1() const noexcept {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

MatchCounts count_matches(const DatasetManifest& predictions, const DatasetManifest& labels,
                          double iou_threshold) {
  const Scope scope = make_scope(predictions, labels, std::nullopt);
  MatchCounts c;
  for (std::size_t i = 0; i < scope.label_images.size(); ++i) {
    for (const auto& cls : scope.classes) {
      const auto dets = of_class(scope.pred_images[i], cls);
      const auto gts = of_class(scope.label_images[i], cls);
      const auto m = match_detections(dets, gts, iou_threshold);
      const auto tp = static_cast<std::size_t>(std::count(m.true_positive.begin(), m.true_positive.end(), true));
      c.tp += tp;
      c.fp += dets.size() - tp;
      c.fn += m.false_negatives;
    }
  }
  return c;
}

}  // namespace labelfuse
