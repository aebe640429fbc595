#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "labelfuse/annotation.hpp"

namespace labelfuse {

enum class Rule { reclassify_residual_md, remove_contained, merge_cp };

std::string_view to_string(Rule r) noexcept;
Rule rule_from_string(std::string_view s);

/// Post-processing configuration that turns a combined dataset into a final one.
struct RuleConfig {
  double containment_threshold = 0.9;
  /// Overlapping CPs are merged at IoU >= this; "more than zero" in practice.
  double cp_merge_iou = 0.0001;
  /// px^2. Residual MD labels larger than this become CP, the rest PCH.
  std::optional<double> residual_md_area_threshold;
  std::vector<Rule> order{Rule::reclassify_residual_md, Rule::remove_contained, Rule::merge_cp};

  /// Throws ValidationError for ratios outside (0,1] or a non-positive area.
  void validate() const;
};

/// One rule action, written to the audit trail.
struct AuditRecord {
  std::string image_id;
  Rule rule;
  std::vector<Annotation> inputs;
  Annotation output;     // the merged/reclassified label; unused for removals
  bool removed = false;  // remove_contained: inputs.front() was dropped

  friend bool operator==(const AuditRecord&, const AuditRecord&) = default;
};

using AuditLog = std::vector<AuditRecord>;

// Each rule works on the annotations of a single image and appends its
// actions to `audit` when one is given.

std::vector<Annotation> rule_remove_contained(std::vector<Annotation> annotations,
                                              const RuleConfig& cfg, AuditLog* audit = nullptr);

/// Merges CP pairs with IoU >= cfg.cp_merge_iou into their enclosing box
/// until no such pair remains. CPs are canonically sorted first, so the
/// result does not depend on input order. Non-CP labels keep their relative
/// order and come first; merged CPs follow in sorted order.
std::vector<Annotation> rule_merge_cp(std::vector<Annotation> annotations, const RuleConfig& cfg,
                                      AuditLog* audit = nullptr);

std::vector<Annotation> rule_reclassify_residual_md(std::vector<Annotation> annotations,
                                                    const RuleConfig& cfg,
                                                    AuditLog* audit = nullptr);

/// Largest MH or PCH area in the reference dataset. Throws if it has none.
double derive_size_threshold(const DatasetManifest& reference);

/// Runs the configured rule sequence on every image, repeating the sequence
/// until a pass changes nothing. The result is therefore a fixpoint and
/// applying it again is the identity.
DatasetManifest apply_rules(DatasetManifest manifest, const RuleConfig& cfg,
                            AuditLog* audit = nullptr);

nlohmann::json audit_to_json(const AuditRecord& r);

}  // namespace labelfuse
