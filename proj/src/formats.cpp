#include "labelfuse/formats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "json.hpp"
#include "labelfuse/error.hpp"
#include "labelfuse/manifest_io.hpp"

namespace labelfuse {

namespace {

bool parse_number(std::string_view tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last && std::isfinite(out);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::size_t class_index(std::span<const ClassId> vocabulary, const ClassId& cls) {
  auto it = std::find(vocabulary.begin(), vocabulary.end(), cls);
  if (it == vocabulary.end()) throw ValidationError("class '" + cls + "' not in vocabulary");
  return static_cast<std::size_t>(it - vocabulary.begin());
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string stem_of(const std::string& file_name) {
  return std::filesystem::path(file_name).stem().string();
}

void add_missing_classes(DatasetManifest& m) {
  for (const auto& img : m.images) {
    for (const auto& a : img.annotations) {
      if (!m.has_class(a.class_id)) m.vocabulary.push_back(a.class_id);
    }
  }
}

std::vector<std::filesystem::path> sorted_files(const std::filesystem::path& dir,
                                                std::string_view ext) {
  if (!std::filesystem::is_directory(dir)) {
    throw ValidationError("'" + dir.string() + "' is not a directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

BBox clamp_to_image(double x0, double y0, double x1, double y1, int width, int height,
                    const std::string& context, const WarningSink& warn) {
  if (x1 < x0 || y1 < y0) throw ValidationError(context + ": inverted box");
  const double cx0 = std::clamp(x0, 0.0, static_cast<double>(width));
  const double cy0 = std::clamp(y0, 0.0, static_cast<double>(height));
  const double cx1 = std::clamp(x1, 0.0, static_cast<double>(width));
  const double cy1 = std::clamp(y1, 0.0, static_cast<double>(height));
  if (cx1 <= cx0 || cy1 <= cy0) throw ValidationError(context + ": zero-area box");
  if ((cx0 != x0 || cy0 != y0 || cx1 != x1 || cy1 != y1) && warn) {
    std::ostringstream os;
    os << context << ": box (" << x0 << ", " << y0 << ", " << x1 << ", " << y1
       << ") clamped to image " << width << "x" << height;
    warn(os.str());
  }
  return BBox(cx0, cy0, cx1, cy1);
}

std::vector<Annotation> parse_yolo(std::string_view label_text, int image_width, int image_height,
                                   std::span<const ClassId> vocabulary,
                                   const std::string& annotator, const std::string& image_id,
                                   const WarningSink& warn) {
  if (image_width <= 0 || image_height <= 0) throw ValidationError("image size must be positive");
  std::vector<Annotation> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < label_text.size()) {
    std::size_t end = label_text.find('\n', pos);
    if (end == std::string_view::npos) end = label_text.size();
    std::string_view line = label_text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 5) {
      throw ParseError("expected 5 tokens 'idx cx cy w h', got " + std::to_string(tokens.size()),
                       line_no);
    }
    std::size_t idx = 0;
    {
      auto [ptr, ec] = std::from_chars(tokens[0].data(), tokens[0].data() + tokens[0].size(), idx);
      if (ec != std::errc{} || ptr != tokens[0].data() + tokens[0].size()) {
        throw ParseError("class index '" + std::string(tokens[0]) + "' is not an integer", line_no);
      }
    }
    if (idx >= vocabulary.size()) {
      throw ParseError("class index " + std::to_string(idx) + " outside vocabulary of size " +
                           std::to_string(vocabulary.size()),
                       line_no);
    }
    double v[4];
    for (int k = 0; k < 4; ++k) {
      if (!parse_number(tokens[k + 1], v[k])) {
        throw ParseError("non-numeric token '" + std::string(tokens[k + 1]) + "'", line_no);
      }
      if (v[k] < 0.0 || v[k] > 1.0) {
        throw ParseError("normalized value " + std::string(tokens[k + 1]) + " outside [0,1]",
                         line_no);
      }
    }
    const double cx = v[0], cy = v[1], w = v[2], h = v[3];
    if (w <= 0.0 || h <= 0.0) throw ParseError("zero-area box", line_no);
    const double W = image_width, H = image_height;
    Annotation a;
    try {
      a.box = clamp_to_image((cx - w / 2) * W, (cy - h / 2) * H, (cx + w / 2) * W,
                             (cy + h / 2) * H, image_width, image_height,
                             "line " + std::to_string(line_no), warn);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
    a.class_id = vocabulary[idx];
    a.annotator = annotator;
    a.image_id = image_id;
    out.push_back(std::move(a));
  }
  return out;
}

std::string emit_yolo(std::span<const Annotation> annotations, int image_width, int image_height,
                      std::span<const ClassId> vocabulary) {
  std::string out;
  char buf[160];
  const double W = image_width, H = image_height;
  for (const auto& a : annotations) {
    const std::size_t idx = class_index(vocabulary, a.class_id);
    const double cx = (a.box.x_min + a.box.x_max) / 2 / W;
    const double cy = (a.box.y_min + a.box.y_max) / 2 / H;
    std::snprintf(buf, sizeof(buf), "%zu %.6f %.6f %.6f %.6f\n", idx, cx, cy, a.box.width() / W,
                  a.box.height() / H);
    out += buf;
  }
  return out;
}

ImageRecord parse_voc(std::string_view xml_text, const std::string& annotator,
                      const std::string& fallback_image_id, const WarningSink& warn) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in{std::string(xml_text)};
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(e.message(), e.line());
  }
  const auto root = tree.get_child_optional("annotation");
  if (!root) throw ParseError("missing <annotation> root");

  ImageRecord img;
  const auto file_name = root->get_optional<std::string>("filename");
  img.image_id = file_name && !file_name->empty() ? stem_of(*file_name) : fallback_image_id;
  if (img.image_id.empty()) throw ParseError("no <filename> and no fallback image id");

  const auto size = root->get_child_optional("size");
  if (!size) throw ParseError("missing <size>");
  try {
    img.width = size->get<int>("width");
    img.height = size->get<int>("height");
  } catch (const pt::ptree_error&) {
    throw ParseError("<size> needs integer <width> and <height>");
  }
  if (img.width <= 0 || img.height <= 0) throw ParseError("<size> must be positive");

  std::size_t object_no = 0;
  for (const auto& [tag, obj] : *root) {
    if (tag != "object") continue;
    ++object_no;
    const std::string where = "object " + std::to_string(object_no);
    const auto name = obj.get_optional<std::string>("name");
    if (!name || name->empty()) throw ParseError(where + ": missing <name>");
    const auto bnd = obj.get_child_optional("bndbox");
    if (!bnd) throw ParseError(where + ": missing <bndbox>");
    double c[4];
    const char* keys[4] = {"xmin", "ymin", "xmax", "ymax"};
    for (int k = 0; k < 4; ++k) {
      const auto txt = bnd->get_optional<std::string>(keys[k]);
      if (!txt || !parse_number(*txt, c[k])) {
        throw ParseError(where + ": bad or missing <" + std::string(keys[k]) + ">");
      }
    }
    if (c[2] < c[0] || c[3] < c[1]) throw ParseError(where + ": xmax < xmin or ymax < ymin");
    Annotation a;
    try {
      a.box = clamp_to_image(c[0], c[1], c[2], c[3], img.width, img.height,
                             img.image_id + " " + where, warn);
    } catch (const ValidationError& e) {
      throw ParseError(e.what());
    }
    a.class_id = *name;
    a.annotator = annotator;
    a.image_id = img.image_id;
    img.annotations.push_back(std::move(a));
  }
  return img;
}

std::string emit_voc(const ImageRecord& image) {
  std::ostringstream os;
  os << "<annotation>\n"
     << "  <filename>" << xml_escape(image.image_id) << "</filename>\n"
     << "  <size>\n"
     << "    <width>" << image.width << "</width>\n"
     << "    <height>" << image.height << "</height>\n"
     << "    <depth>1</depth>\n"
     << "  </size>\n";
  for (const auto& a : image.annotations) {
    os << "  <object>\n"
       << "    <name>" << xml_escape(a.class_id) << "</name>\n"
       << "    <bndbox>\n"
       << "      <xmin>" << format_double(a.box.x_min) << "</xmin>\n"
       << "      <ymin>" << format_double(a.box.y_min) << "</ymin>\n"
       << "      <xmax>" << format_double(a.box.x_max) << "</xmax>\n"
       << "      <ymax>" << format_double(a.box.y_max) << "</ymax>\n"
       << "    </bndbox>\n"
       << "  </object>\n";
  }
  os << "</annotation>\n";
  return os.str();
}

DatasetManifest parse_coco(std::string_view json_text, const std::string& annotator,
                           const WarningSink& warn) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("COCO file is not valid JSON: ") + e.what());
  }
  DatasetManifest m;
  if (!annotator.empty()) m.provenance.push_back(annotator);
  try {
    for (const char* key : {"images", "annotations", "categories"}) {
      if (!doc.contains(key) || !doc[key].is_array()) {
        throw ParseError(std::string("missing top-level array '") + key + "'");
      }
    }
    std::map<long long, std::string> category_names;
    for (const auto& c : doc["categories"]) {
      const auto id = c.at("id").get<long long>();
      auto name = c.at("name").get<std::string>();
      if (!category_names.emplace(id, name).second) {
        throw ParseError("duplicate category id " + std::to_string(id));
      }
      if (!m.has_class(name)) m.vocabulary.push_back(std::move(name));
    }
    std::map<long long, std::size_t> image_index;
    for (const auto& i : doc["images"]) {
      const auto id = i.at("id").get<long long>();
      ImageRecord img;
      const auto file_name = i.value("file_name", std::string{});
      img.image_id = file_name.empty() ? std::to_string(id) : stem_of(file_name);
      img.width = i.at("width").get<int>();
      img.height = i.at("height").get<int>();
      if (!image_index.emplace(id, m.images.size()).second) {
        throw ParseError("duplicate image id " + std::to_string(id));
      }
      m.images.push_back(std::move(img));
    }
    std::size_t n = 0;
    for (const auto& a : doc["annotations"]) {
      ++n;
      const std::string where = "annotation " + std::to_string(n);
      const auto img_id = a.at("image_id").get<long long>();
      const auto cat_id = a.at("category_id").get<long long>();
      auto img_it = image_index.find(img_id);
      if (img_it == image_index.end()) {
        throw ParseError(where + ": unknown image_id " + std::to_string(img_id));
      }
      auto cat_it = category_names.find(cat_id);
      if (cat_it == category_names.end()) {
        throw ParseError(where + ": unknown category_id " + std::to_string(cat_id));
      }
      const auto& bbox = a.at("bbox");
      if (!bbox.is_array() || bbox.size() != 4) throw ParseError(where + ": bbox needs 4 numbers");
      const double x = bbox[0].get<double>(), y = bbox[1].get<double>();
      const double w = bbox[2].get<double>(), h = bbox[3].get<double>();
      if (w < 0 || h < 0) throw ParseError(where + ": negative width or height");
      auto& img = m.images[img_it->second];
      Annotation ann;
      try {
        ann.box = clamp_to_image(x, y, x + w, y + h, img.width, img.height,
                                 img.image_id + " " + where, warn);
      } catch (const ValidationError& e) {
        throw ParseError(e.what());
      }
      ann.class_id = cat_it->second;
      ann.annotator = annotator;
      ann.image_id = img.image_id;
      img.annotations.push_back(std::move(ann));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed COCO document: ") + e.what());
  }
  validate(m);
  return m;
}

std::string emit_coco(const DatasetManifest& m) {
  using nlohmann::json;
  json images = json::array(), annotations = json::array(), categories = json::array();
  for (std::size_t c = 0; c < m.vocabulary.size(); ++c) {
    categories.push_back({{"id", c + 1}, {"name", m.vocabulary[c]}});
  }
  std::size_t ann_id = 0;
  for (std::size_t i = 0; i < m.images.size(); ++i) {
    const auto& img = m.images[i];
    images.push_back({{"id", i + 1},
                      {"file_name", img.image_id + ".png"},
                      {"width", img.width},
                      {"height", img.height}});
    for (const auto& a : img.annotations) {
      const double w = a.box.width(), h = a.box.height();
      annotations.push_back({{"id", ++ann_id},
                             {"image_id", i + 1},
                             {"category_id", class_index(m.vocabulary, a.class_id) + 1},
                             {"bbox", {a.box.x_min, a.box.y_min, w, h}},
                             {"area", w * h},
                             {"iscrowd", 0}});
    }
  }
  json doc = {{"images", images}, {"annotations", annotations}, {"categories", categories}};
  return doc.dump(2) + "\n";
}

DatasetManifest load_yolo_dir(const std::filesystem::path& dir, int image_width, int image_height,
                              std::vector<ClassId> vocabulary, const std::string& annotator,
                              const WarningSink& warn) {
  if (vocabulary.empty()) {
    const auto classes_file = dir / "classes.txt";
    if (!std::filesystem::exists(classes_file)) {
      throw ValidationError("YOLO directory needs classes.txt or an explicit vocabulary");
    }
    std::istringstream in(read_text_file(classes_file));
    for (std::string line; std::getline(in, line);) {
      auto tokens = split_ws(line);
      if (!tokens.empty()) vocabulary.emplace_back(tokens.front());
    }
  }
  DatasetManifest m;
  m.vocabulary = vocabulary;
  if (!annotator.empty()) m.provenance.push_back(annotator);
  for (const auto& file : sorted_files(dir, ".txt")) {
    if (file.filename() == "classes.txt") continue;
    ImageRecord img;
    img.image_id = file.stem().string();
    img.width = image_width;
    img.height = image_height;
    try {
      img.annotations = parse_yolo(read_text_file(file), image_width, image_height, vocabulary,
                                   annotator, img.image_id, warn);
    } catch (const ParseError& e) {
      throw ParseError(file.filename().string() + ": " + e.what());
    }
    m.images.push_back(std::move(img));
  }
  validate(m);
  return m;
}

void save_yolo_dir(const DatasetManifest& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string classes;
  for (const auto& c : m.vocabulary) classes += c + "\n";
  write_text_file(dir / "classes.txt", classes);
  for (const auto& img : m.images) {
    write_text_file(dir / (img.image_id + ".txt"),
                    emit_yolo(img.annotations, img.width, img.height, m.vocabulary));
  }
}

DatasetManifest load_voc_dir(const std::filesystem::path& dir, const std::string& annotator,
                             std::vector<ClassId> vocabulary, const WarningSink& warn) {
  DatasetManifest m;
  m.vocabulary = std::move(vocabulary);
  if (!annotator.empty()) m.provenance.push_back(annotator);
  for (const auto& file : sorted_files(dir, ".xml")) {
    try {
      m.images.push_back(parse_voc(read_text_file(file), annotator, file.stem().string(), warn));
    } catch (const ParseError& e) {
      throw ParseError(file.filename().string() + ": " + e.what());
    }
  }
  add_missing_classes(m);
  validate(m);
  return m;
}

void save_voc_dir(const DatasetManifest& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& img : m.images) write_text_file(dir / (img.image_id + ".xml"), emit_voc(img));
}

}  // namespace labelfuse
