#include "labelfuse/pipeline.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "labelfuse/error.hpp"
#include "labelfuse/formats.hpp"
#include "labelfuse/fusion.hpp"
#include "parallel.hpp"

namespace labelfuse {

TiePolicy tie_policy_from_string(std::string_view s) {
  if (s == "interactive") return TiePolicy::interactive;
  if (s == "priority" || s == "auto") return TiePolicy::priority;
  throw ValidationError("unknown tie policy '" + std::string(s) + "'");
}

std::string_view to_string(TiePolicy p) noexcept {
  return p == TiePolicy::interactive ? "interactive" : "priority";
}

namespace {

void check_same_images(std::span<const DatasetManifest> inputs) {
  std::set<std::string> reference;
  for (const auto& img : inputs.front().images) reference.insert(img.image_id);
  std::set<std::string> asymmetric;
  for (const auto& m : inputs.subspan(1)) {
    std::set<std::string> ids;
    for (const auto& img : m.images) ids.insert(img.image_id);
    std::set_symmetric_difference(reference.begin(), reference.end(), ids.begin(), ids.end(),
                                  std::inserter(asymmetric, asymmetric.end()));
  }
  if (!asymmetric.empty()) {
    std::string list;
    for (const auto& id : asymmetric) list += (list.empty() ? "" : ", ") + id;
    throw ValidationError("input datasets cover different images: " + list);
  }
}

struct ImageWork {
  std::vector<Cluster> clusters;
  std::vector<TieRecord> ties;
  std::vector<std::string> pending;
  std::vector<Annotation> fused;
  std::vector<nlohmann::json> diagnostics;
};

}  // namespace

CombineResult combine_datasets(std::span<const DatasetManifest> inputs, const CombineOptions& options) {
  if (inputs.size() < 2) throw ValidationError("combine needs at least two labeled datasets");
  check_same_images(inputs);

  std::vector<std::string> labelers;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    labelers.push_back(!inputs[i].provenance.empty() ? inputs[i].provenance.front()
                                                     : "input" + std::to_string(i + 1));
  }
  std::map<std::string, const Decision*> decisions;
  for (const auto& d : options.decisions) decisions.emplace(d.tie_id, &d);

  const auto& base = inputs.front();
  std::vector<std::map<std::string, const ImageRecord*>> lookup(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (const auto& img : inputs[i].images) lookup[i][img.image_id] = &img;
  }

  std::vector<ImageWork> work(base.images.size());
  detail::parallel_for(base.images.size(), options.workers, [&](std::size_t k) {
    const auto& head = base.images[k];
    std::vector<Annotation> pooled;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      for (auto a : lookup[i].at(head.image_id)->annotations) {
        if (a.annotator.empty()) a.annotator = labelers[i];
        a.image_id = head.image_id;
        a.confidence = 1.0;
        pooled.push_back(std::move(a));
      }
    }
    auto& w = work[k];
    w.clusters = form_clusters(pooled, options.iou_threshold);
    w.ties = collect_ties(w.clusters);
    for (auto& t : w.ties) {
      t.image_width = head.width;
      t.image_height = head.height;
    }
    for (auto& c : w.clusters) {
      const auto outcome = vote(c);
      if (const auto* decided = std::get_if<Decided>(&outcome)) {
        c = apply_vote(std::move(c), decided->class_id);
        continue;
      }
      auto rec = std::find_if(w.ties.begin(), w.ties.end(),
                              [&](const TieRecord& t) { return t.tie_id == c.cluster_id; });
      if (auto d = decisions.find(c.cluster_id); d != decisions.end()) {
        const auto& dec = *d->second;
        rec->resolution = Resolution{dec.chosen_class, dec.resolver, dec.timestamp, dec.override_vote};
        c = apply_vote(std::move(c), dec.chosen_class);
      } else if (options.tie_policy == TiePolicy::priority) {
        const auto chosen = resolve_by_priority(std::get<Tie>(outcome), options.priority);
        rec->resolution = Resolution{chosen, "auto:priority", "", false};
        c = apply_vote(std::move(c), chosen);
      } else {
        w.pending.push_back(c.cluster_id);
      }
    }
    if (!w.pending.empty()) return;
    w.fused = fuse_image(w.clusters);
    for (const auto& c : w.clusters) {
      w.diagnostics.push_back({{"image_id", c.image_id},
                               {"cluster_id", c.cluster_id},
                               {"members", c.members.size()},
                               {"class", c.members.front().class_id},
                               {"wbf_rescaled_confidence", wbf_rescaled_confidence(c, inputs.size())}});
    }
  });

  CombineResult result;
  std::set<std::string> known_ties;
  for (auto& w : work) {
    for (auto& t : w.ties) {
      known_ties.insert(t.tie_id);
      result.ties.push_back(std::move(t));
    }
    result.pending.insert(result.pending.end(), w.pending.begin(), w.pending.end());
  }
  std::sort(result.ties.begin(), result.ties.end(), [](const TieRecord& a, const TieRecord& b) {
    return std::tie(a.image_id, a.tie_id) < std::tie(b.image_id, b.tie_id);
  });
  for (const auto& [id, d] : decisions) {
    if (!known_ties.count(id)) result.warnings.push_back("decision for unknown tie " + id + " ignored");
  }
  if (result.review_required()) return result;

  auto& out = result.combined;
  for (const auto& m : inputs) {
    for (const auto& c : m.vocabulary) {
      if (!out.has_class(c)) out.vocabulary.push_back(c);
    }
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (std::find(out.provenance.begin(), out.provenance.end(), labelers[i]) == out.provenance.end()) {
      out.provenance.push_back(labelers[i]);
    }
  }
  out.metadata["combine.iou_threshold"] = format_double(options.iou_threshold);
  out.metadata["combine.tie_policy"] = std::string(to_string(options.tie_policy));
  out.metadata["combine.inputs"] = std::to_string(inputs.size());
  for (std::size_t k = 0; k < base.images.size(); ++k) {
    ImageRecord img = base.images[k];
    img.annotations = std::move(work[k].fused);
    out.images.push_back(std::move(img));
    for (auto& d : work[k].diagnostics) result.fusion_diagnostics.push_back(std::move(d));
  }
  validate(out);
  return result;
}

FinalizeResult finalize_dataset(const DatasetManifest& combined, RuleConfig rules,
                                const DatasetManifest* reference, unsigned workers) {
  FinalizeResult r;
  if (!rules.residual_md_area_threshold && reference) {
    rules.residual_md_area_threshold = derive_size_threshold(*reference);
  }
  r.md_area_threshold = rules.residual_md_area_threshold;
  rules.validate();

  // Rules are per image; run them image by image and keep audit order stable.
  std::vector<DatasetManifest> parts(combined.images.size());
  std::vector<AuditLog> audits(combined.images.size());
  detail::parallel_for(combined.images.size(), workers, [&](std::size_t k) {
    DatasetManifest one;
    one.vocabulary = combined.vocabulary;
    one.images.push_back(combined.images[k]);
    parts[k] = apply_rules(std::move(one), rules, &audits[k]);
  });

  r.final_manifest = combined;
  r.final_manifest.images.clear();
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (const auto& c : parts[k].vocabulary) {
      if (!r.final_manifest.has_class(c)) r.final_manifest.vocabulary.push_back(c);
    }
    r.final_manifest.images.push_back(std::move(parts[k].images.front()));
    r.audit.insert(r.audit.end(), audits[k].begin(), audits[k].end());
  }
  std::string order;
  for (Rule rule : rules.order) order += (order.empty() ? "" : ",") + std::string(to_string(rule));
  auto& meta = r.final_manifest.metadata;
  meta["finalize.rule_order"] = order;
  meta["finalize.containment_threshold"] = format_double(rules.containment_threshold);
  meta["finalize.cp_merge_iou"] = format_double(rules.cp_merge_iou);
  if (r.md_area_threshold) meta["finalize.md_area_threshold"] = format_double(*r.md_area_threshold);
  return r;
}

}  // namespace labelfuse
