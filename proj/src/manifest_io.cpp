#include "labelfuse/manifest_io.hpp"

#include <fstream>
#include <sstream>

#include "labelfuse/error.hpp"

namespace labelfuse {

using nlohmann::json;

json box_to_json(const BBox& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

BBox box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ValidationError("box must be an array of 4 numbers");
  for (const auto& v : j) {
    if (!v.is_number()) throw ValidationError("box coordinates must be numbers");
  }
  return BBox(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

json annotation_to_json(const Annotation& a, bool with_image) {
  json j = {{"box", box_to_json(a.box)},
            {"class", a.class_id},
            {"confidence", a.confidence},
            {"annotator", a.annotator}};
  if (with_image) j["image_id"] = a.image_id;
  return j;
}

Annotation annotation_from_json(const json& j, std::string_view image_id) {
  Annotation a;
  a.box = box_from_json(j.at("box"));
  a.class_id = j.at("class").get<std::string>();
  a.confidence = j.value("confidence", 1.0);
  a.annotator = j.value("annotator", std::string{});
  a.image_id = j.contains("image_id") ? j.at("image_id").get<std::string>() : std::string(image_id);
  return a;
}

std::string write_manifest(const DatasetManifest& m) {
  json images = json::array();
  for (const auto& img : m.images) {
    json anns = json::array();
    for (const auto& a : img.annotations) anns.push_back(annotation_to_json(a, false));
    json rec = {{"image_id", img.image_id},
                {"width", img.width},
                {"height", img.height},
                {"annotations", std::move(anns)}};
    if (img.partition_tag) rec["partition_tag"] = *img.partition_tag;
    if (img.split) rec["split"] = std::string(to_string(*img.split));
    images.push_back(std::move(rec));
  }
  json doc = {{"schema", kManifestSchema},
              {"version", kManifestVersion},
              {"vocabulary", m.vocabulary},
              {"provenance", m.provenance},
              {"metadata", m.metadata},
              {"images", std::move(images)}};
  return doc.dump(2) + "\n";
}

DatasetManifest read_manifest(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    if (doc.value("schema", std::string{}) != kManifestSchema) {
      throw ValidationError("not a labelfuse manifest (schema field)");
    }
    const int version = doc.value("version", -1);
    if (version != kManifestVersion) {
      throw ValidationError("unsupported manifest version " + std::to_string(version));
    }
    DatasetManifest m;
    m.vocabulary = doc.at("vocabulary").get<std::vector<std::string>>();
    m.provenance = doc.value("provenance", std::vector<std::string>{});
    m.metadata = doc.value("metadata", std::map<std::string, std::string>{});
    for (const auto& rec : doc.at("images")) {
      ImageRecord img;
      img.image_id = rec.at("image_id").get<std::string>();
      img.width = rec.at("width").get<int>();
      img.height = rec.at("height").get<int>();
      if (rec.contains("partition_tag")) img.partition_tag = rec["partition_tag"].get<std::string>();
      if (rec.contains("split")) img.split = split_from_string(rec["split"].get<std::string>());
      for (const auto& a : rec.at("annotations")) {
        img.annotations.push_back(annotation_from_json(a, img.image_id));
      }
      m.images.push_back(std::move(img));
    }
    validate(m);
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error("short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  return read_manifest(read_text_file(path));
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  write_text_file(path, write_manifest(m));
}

}  // namespace labelfuse
