#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "labelfuse/annotation.hpp"

namespace labelfuse {

/// Receives non-fatal ingestion warnings (for example off-canvas boxes that
/// were clamped). An empty sink discards them.
using WarningSink = std::function<void(const std::string&)>;

/// Clamps raw corner coordinates to [0,width] x [0,height]. Warns when the
/// box had to be clipped; throws ValidationError if nothing is left.
BBox clamp_to_image(double x0, double y0, double x1, double y1, int width, int height,
                    const std::string& context, const WarningSink& warn);

// YOLO: one text file per image, lines "idx cx cy w h" normalized to [0,1].

std::vector<Annotation> parse_yolo(std::string_view label_text, int image_width, int image_height,
                                   std::span<const ClassId> vocabulary,
                                   const std::string& annotator = {},
                                   const std::string& image_id = {},
                                   const WarningSink& warn = {});

std::string emit_yolo(std::span<const Annotation> annotations, int image_width, int image_height,
                      std::span<const ClassId> vocabulary);

// Pascal VOC XML as written by LabelImg: <size>, <object><name><bndbox>.

/// Returns the image header with its annotations filled in. The image id is
/// the stem of <filename>, or `fallback_image_id` when that is absent.
ImageRecord parse_voc(std::string_view xml_text, const std::string& annotator = {},
                      const std::string& fallback_image_id = {}, const WarningSink& warn = {});

std::string emit_voc(const ImageRecord& image);

// COCO detection JSON: images, annotations, categories; bbox is [x, y, w, h].

DatasetManifest parse_coco(std::string_view json_text, const std::string& annotator = {},
                           const WarningSink& warn = {});

std::string emit_coco(const DatasetManifest& m);

// Directory bundles used by the `convert` command.

/// Reads every *.txt (except classes.txt) in `dir`. Vocabulary comes from
/// `vocabulary` if non-empty, else from `dir/classes.txt`.
DatasetManifest load_yolo_dir(const std::filesystem::path& dir, int image_width, int image_height,
                              std::vector<ClassId> vocabulary, const std::string& annotator,
                              const WarningSink& warn = {});
void save_yolo_dir(const DatasetManifest& m, const std::filesystem::path& dir);

DatasetManifest load_voc_dir(const std::filesystem::path& dir, const std::string& annotator,
                             std::vector<ClassId> vocabulary = {}, const WarningSink& warn = {});
void save_voc_dir(const DatasetManifest& m, const std::filesystem::path& dir);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace labelfuse
