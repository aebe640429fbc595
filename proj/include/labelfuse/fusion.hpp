#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "labelfuse/annotation.hpp"
#include "labelfuse/consensus.hpp"

namespace labelfuse {

inline constexpr std::string_view kConsensusAnnotator = "consensus";

/// Weighted-Box-Fusion of one voted cluster.
///
/// Each fused coordinate is sum(conf_i * coord_i) / sum(conf_i), summed in
/// (annotator, box, confidence) order so the result does not depend on
/// member order. Confidence is the mean member confidence and the annotator
/// becomes "consensus". With unit confidences this is the plain coordinate
/// mean. Throws ValidationError when the members disagree on class.
Annotation fuse_cluster(const Cluster& c);

/// WBF's score rescaling, mean confidence * min(members, models) / models.
/// Diagnostic only; labels keep their fused mean confidence.
double wbf_rescaled_confidence(const Cluster& c, std::size_t model_count);

/// One annotation per cluster, ordered by cluster_id. Throws ReviewRequired
/// listing every cluster whose members still carry more than one class.
std::vector<Annotation> fuse_image(std::span<const Cluster> clusters);

}  // namespace labelfuse
