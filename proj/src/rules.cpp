#include "labelfuse/rules.hpp"

#include <algorithm>
#include <tuple>

#include "labelfuse/error.hpp"
#include "labelfuse/manifest_io.hpp"

namespace labelfuse {

namespace {

bool is_class(const Annotation& a, std::string_view cls) { return a.class_id == cls; }

bool is_hole_defect(const Annotation& a) {
  return is_class(a, classes::kMissingHole) || is_class(a, classes::kPartiallyClosedHole);
}

bool canonical_less(const Annotation& a, const Annotation& b) {
  return std::tie(a.box.x_min, a.box.y_min, a.box.x_max, a.box.y_max, a.confidence, a.annotator) <
         std::tie(b.box.x_min, b.box.y_min, b.box.x_max, b.box.y_max, b.confidence, b.annotator);
}

std::vector<Annotation> apply_rule(Rule r, std::vector<Annotation> anns, const RuleConfig& cfg,
                                   AuditLog* audit) {
  switch (r) {
    case Rule::reclassify_residual_md: return rule_reclassify_residual_md(std::move(anns), cfg, audit);
    case Rule::remove_contained: return rule_remove_contained(std::move(anns), cfg, audit);
    case Rule::merge_cp: return rule_merge_cp(std::move(anns), cfg, audit);
  }
  return anns;
}

}  // namespace

std::string_view to_string(Rule r) noexcept {
  switch (r) {
    case Rule::reclassify_residual_md: return "reclassify-residual-md";
    case Rule::remove_contained: return "remove-contained";
    case Rule::merge_cp: return "merge-cp";
  }
  return "";
}

Rule rule_from_string(std::string_view s) {
  for (Rule r : {Rule::reclassify_residual_md, Rule::remove_contained, Rule::merge_cp}) {
    if (to_string(r) == s) return r;
  }
  throw ValidationError("unknown rule '" + std::string(s) + "'");
}

void RuleConfig::validate() const {
  if (!(containment_threshold > 0.0 && containment_threshold <= 1.0)) {
    throw ValidationError("containment threshold must lie in (0,1]");
  }
  if (!(cp_merge_iou > 0.0 && cp_merge_iou <= 1.0)) {
    throw ValidationError("CP merge IoU must lie in (0,1]");
  }
  if (residual_md_area_threshold && !(*residual_md_area_threshold > 0.0)) {
    throw ValidationError("residual MD area threshold must be positive");
  }
}

std::vector<Annotation> rule_remove_contained(std::vector<Annotation> annotations,
                                              const RuleConfig& cfg, AuditLog* audit) {
  std::vector<const Annotation*> cps;
  for (const auto& a : annotations) {
    if (is_class(a, classes::kClosedPatch)) cps.push_back(&a);
  }
  if (cps.empty()) return annotations;

  std::vector<Annotation> kept;
  kept.reserve(annotations.size());
  for (const auto& a : annotations) {
    const Annotation* container = nullptr;
    if (is_hole_defect(a)) {
      for (const Annotation* cp : cps) {
        if (containment_fraction(a.box, cp->box) >= cfg.containment_threshold) {
          container = cp;
          break;
        }
      }
    }
    if (container == nullptr) {
      kept.push_back(a);
    } else if (audit) {
      audit->push_back(AuditRecord{a.image_id, Rule::remove_contained, {a, *container}, {}, true});
    }
  }
  return kept;
}

std::vector<Annotation> rule_merge_cp(std::vector<Annotation> annotations, const RuleConfig& cfg,
                                      AuditLog* audit) {
  std::vector<Annotation> others, cps;
  for (auto& a : annotations) {
    (is_class(a, classes::kClosedPatch) ? cps : others).push_back(std::move(a));
  }
  std::sort(cps.begin(), cps.end(), canonical_less);

  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i < cps.size() && !merged; ++i) {
      for (std::size_t j = i + 1; j < cps.size() && !merged; ++j) {
        if (iou(cps[i].box, cps[j].box) < cfg.cp_merge_iou) continue;
        const BBox pair[2] = {cps[i].box, cps[j].box};
        Annotation m = cps[i];
        m.box = enclosing_box(pair);
        m.confidence = std::max(cps[i].confidence, cps[j].confidence);
        if (cps[i].annotator != cps[j].annotator) m.annotator = "consensus";
        if (audit) audit->push_back(AuditRecord{m.image_id, Rule::merge_cp, {cps[i], cps[j]}, m, false});
        cps.erase(cps.begin() + static_cast<std::ptrdiff_t>(j));
        cps[i] = std::move(m);
        std::sort(cps.begin(), cps.end(), canonical_less);
        merged = true;
      }
    }
  }
  others.insert(others.end(), std::make_move_iterator(cps.begin()),
                std::make_move_iterator(cps.end()));
  return others;
}

std::vector<Annotation> rule_reclassify_residual_md(std::vector<Annotation> annotations,
                                                    const RuleConfig& cfg, AuditLog* audit) {
  for (auto& a : annotations) {
    if (!is_class(a, classes::kMultipleDefect)) continue;
    if (!cfg.residual_md_area_threshold) {
      throw ValidationError("image '" + a.image_id +
                            "' has MD labels but no residual MD size threshold is set");
    }
    const Annotation before = a;
    a.class_id = std::string(area(a.box) > *cfg.residual_md_area_threshold
                                 ? classes::kClosedPatch
                                 : classes::kPartiallyClosedHole);
    if (audit) audit->push_back(AuditRecord{a.image_id, Rule::reclassify_residual_md, {before}, a, false});
  }
  return annotations;
}

double derive_size_threshold(const DatasetManifest& reference) {
  std::optional<double> largest;
  for (const auto& img : reference.images) {
    for (const auto& a : img.annotations) {
      if (is_hole_defect(a)) largest = std::max(largest.value_or(0.0), area(a.box));
    }
  }
  if (!largest) throw ValidationError("reference dataset has no MH or PCH labels");
  return *largest;
}

DatasetManifest apply_rules(DatasetManifest manifest, const RuleConfig& cfg, AuditLog* audit) {
  cfg.validate();
  for (auto& img : manifest.images) {
    // Every changing pass drops a label, merges two, or retires an MD, so
    // the loop is bounded by twice the label count.
    const std::size_t max_passes = 2 * img.annotations.size() + 2;
    for (std::size_t pass = 0; pass < max_passes; ++pass) {
      auto next = img.annotations;
      for (Rule r : cfg.order) next = apply_rule(r, std::move(next), cfg, audit);
      if (next == img.annotations) break;
      img.annotations = std::move(next);
    }
  }
  for (std::string_view cls : {classes::kClosedPatch, classes::kPartiallyClosedHole}) {
    if (manifest.annotation_count() > 0 && !manifest.has_class(cls)) {
      bool used = false;
      for (const auto& img : manifest.images) {
        for (const auto& a : img.annotations) used = used || a.class_id == cls;
      }
      if (used) manifest.vocabulary.emplace_back(cls);
    }
  }
  return manifest;
}

nlohmann::json audit_to_json(const AuditRecord& r) {
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& a : r.inputs) inputs.push_back(annotation_to_json(a, false));
  nlohmann::json j = {{"image_id", r.image_id}, {"rule", to_string(r.rule)}, {"inputs", inputs}};
  if (r.removed) {
    j["removed"] = true;
  } else {
    j["output"] = annotation_to_json(r.output, false);
  }
  return j;
}

}  // namespace labelfuse
