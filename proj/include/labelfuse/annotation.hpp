#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "labelfuse/geometry.hpp"

namespace labelfuse {

/// Symbolic class name drawn from a dataset vocabulary.
using ClassId = std::string;

namespace classes {
inline constexpr std::string_view kClosedPatch = "CP";
inline constexpr std::string_view kMissingHole = "MH";
inline constexpr std::string_view kPartiallyClosedHole = "PCH";
inline constexpr std::string_view kMultipleDefect = "MD";
}  // namespace classes

struct Annotation {
  BBox box;
  ClassId class_id;
  double confidence = 1.0;  // human labels are always 1
  std::string annotator;
  std::string image_id;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

enum class Split { train, val, test };

std::string_view to_string(Split s) noexcept;
/// Accepts "train", "val"/"validation", "test". Throws ValidationError otherwise.
Split split_from_string(std::string_view s);

struct ImageRecord {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::optional<std::string> partition_tag;
  std::optional<Split> split;
  std::vector<Annotation> annotations;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct DatasetManifest {
  std::vector<ClassId> vocabulary;
  std::vector<ImageRecord> images;
  std::vector<std::string> provenance;         // annotator identities merged in
  std::map<std::string, std::string> metadata;  // generator choices, effective config

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;

  const ImageRecord* find_image(std::string_view image_id) const;
  bool has_class(std::string_view cls) const;
  std::size_t annotation_count() const;
};

/// Checks manifest invariants: unique image ids, positive image size,
/// known classes, annotation image ids matching their record.
void validate(const DatasetManifest& m);

}  // namespace labelfuse
