#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "labelfuse/consensus.hpp"
#include "labelfuse/review.hpp"
#include "labelfuse/rules.hpp"

namespace labelfuse {

enum class TiePolicy { interactive, priority };

TiePolicy tie_policy_from_string(std::string_view s);
std::string_view to_string(TiePolicy p) noexcept;

struct CombineOptions {
  double iou_threshold = kClusterIoU;
  TiePolicy tie_policy = TiePolicy::interactive;
  std::vector<ClassId> priority = default_tie_priority();
  /// Expert decisions replayed before any policy applies.
  std::vector<Decision> decisions;
  unsigned workers = 1;
};

struct CombineResult {
  /// Empty (no images) when review is required.
  DatasetManifest combined;
  /// Every tie seen, ordered by (image_id, tie_id), with resolution state.
  std::vector<TieRecord> ties;
  std::vector<std::string> pending;  // tie ids still waiting for an expert
  std::vector<nlohmann::json> fusion_diagnostics;
  std::vector<std::string> warnings;

  bool review_required() const noexcept { return !pending.empty(); }
};

/// Per image: pool every labeler's annotations, cluster, vote, resolve ties
/// (decisions first, then the policy), and fuse. Inputs must cover the same
/// image ids; otherwise ValidationError lists the asymmetric ids. Output is
/// independent of the worker count.
CombineResult combine_datasets(std::span<const DatasetManifest> inputs, const CombineOptions& options);

struct FinalizeResult {
  DatasetManifest final_manifest;
  AuditLog audit;
  std::optional<double> md_area_threshold;
};

/// Derives the residual-MD threshold from `reference` (unless the config
/// already fixes one) and applies the expert rules.
FinalizeResult finalize_dataset(const DatasetManifest& combined, RuleConfig rules,
                                const DatasetManifest* reference, unsigned workers = 1);

}  // namespace labelfuse
