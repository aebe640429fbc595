#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"
#include "labelfuse/annotation.hpp"

namespace labelfuse {

inline constexpr std::string_view kManifestSchema = "labelfuse.manifest";
inline constexpr int kManifestVersion = 1;

/// Canonical manifest text: JSON with sorted keys, two-space indent and
/// shortest round-trip doubles, so read(write(m)) == m exactly.
std::string write_manifest(const DatasetManifest& m);

/// Throws ValidationError on unknown schema/version, duplicate image ids or
/// any other manifest invariant violation.
DatasetManifest read_manifest(std::string_view text);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

nlohmann::json box_to_json(const BBox& b);
BBox box_from_json(const nlohmann::json& j);

/// Annotation as a JSON object; image_id included only when `with_image` is set.
nlohmann::json annotation_to_json(const Annotation& a, bool with_image);
Annotation annotation_from_json(const nlohmann::json& j, std::string_view image_id);

std::string read_text_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename so readers never see partial files.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace labelfuse
