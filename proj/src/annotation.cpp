#include "labelfuse/annotation.hpp"

#include <algorithm>
#include <unordered_set>

#include "labelfuse/error.hpp"

namespace labelfuse {

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val" || s == "validation") return Split::val;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

const ImageRecord* DatasetManifest::find_image(std::string_view image_id) const {
  auto it = std::find_if(images.begin(), images.end(),
                         [&](const ImageRecord& r) { return r.image_id == image_id; });
  return it == images.end() ? nullptr : &*it;
}

bool DatasetManifest::has_class(std::string_view cls) const {
  return std::find(vocabulary.begin(), vocabulary.end(), cls) != vocabulary.end();
}

std::size_t DatasetManifest::annotation_count() const {
  std::size_t n = 0;
  for (const auto& img : images) n += img.annotations.size();
  return n;
}

void validate(const DatasetManifest& m) {
  std::unordered_set<std::string> seen;
  for (const auto& img : m.images) {
    if (!seen.insert(img.image_id).second) {
      throw ValidationError("duplicate image_id '" + img.image_id + "'");
    }
    if (img.width <= 0 || img.height <= 0) {
      throw ValidationError("image '" + img.image_id + "' has non-positive size");
    }
    for (const auto& a : img.annotations) {
      if (!m.has_class(a.class_id)) {
        throw ValidationError("class '" + a.class_id + "' in image '" + img.image_id +
                              "' is not in the vocabulary");
      }
      if (a.image_id != img.image_id) {
        throw ValidationError("annotation image_id '" + a.image_id + "' filed under '" +
                              img.image_id + "'");
      }
      if (!(a.confidence >= 0.0 && a.confidence <= 1.0)) {
        throw ValidationError("confidence out of [0,1] in image '" + img.image_id + "'");
      }
    }
  }
}

}  // namespace labelfuse
