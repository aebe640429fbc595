#include "labelfuse/review.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <ctime>
#include <map>
#include <mutex>
#include <set>
#include <tuple>

#include "labelfuse/error.hpp"
#include "labelfuse/manifest_io.hpp"

namespace labelfuse {

using nlohmann::json;

namespace {

void check_schema(const json& j, std::string_view schema) {
  if (j.value("schema", std::string{}) != schema) {
    throw ValidationError("expected a '" + std::string(schema) + "' record");
  }
  if (j.value("version", -1) != kReviewSchemaVersion) {
    throw ValidationError("unsupported " + std::string(schema) + " version");
  }
}

template <typename T, typename Parse>
std::vector<T> read_jsonl(const std::filesystem::path& path, Parse parse, const WarningSink& warn) {
  std::vector<T> out;
  if (!std::filesystem::exists(path)) return out;
  const std::string text = read_text_file(path);
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    const bool terminated = end != std::string::npos;
    if (!terminated) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse(json::parse(line)));
    } catch (const std::exception& e) {
      if (!terminated) {
        if (warn) warn(path.string() + ": skipping torn final line " + std::to_string(line_no));
        break;
      }
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void durable_append(const std::filesystem::path& path, const std::string& line) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw std::runtime_error("cannot open '" + path.string() + "': " + std::strerror(errno));
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw std::runtime_error("write to '" + path.string() + "' failed: " + std::strerror(err));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    const int err = errno;
    ::close(fd);
    throw std::runtime_error("fsync of '" + path.string() + "' failed: " + std::strerror(err));
  }
  ::close(fd);
}

bool contains(std::span<const ClassId> v, const ClassId& c) {
  return std::find(v.begin(), v.end(), c) != v.end();
}

}  // namespace

json tie_to_json(const TieRecord& t) {
  json members = json::array();
  for (const auto& m : t.members) members.push_back(annotation_to_json(m, false));
  json j = {{"schema", kTieSchema},       {"version", kReviewSchemaVersion},
            {"tie_id", t.tie_id},         {"image_id", t.image_id},
            {"image_width", t.image_width}, {"image_height", t.image_height},
            {"members", members},         {"tied_classes", t.tied_classes}};
  if (t.resolution) {
    j["status"] = "resolved";
    j["resolution"] = {{"class", t.resolution->chosen_class},
                       {"resolver", t.resolution->resolver},
                       {"timestamp", t.resolution->timestamp},
                       {"override", t.resolution->override_vote}};
  } else {
    j["status"] = "pending";
  }
  return j;
}

TieRecord tie_from_json(const json& j) {
  check_schema(j, kTieSchema);
  TieRecord t;
  t.tie_id = j.at("tie_id").get<std::string>();
  t.image_id = j.at("image_id").get<std::string>();
  t.image_width = j.value("image_width", 0);
  t.image_height = j.value("image_height", 0);
  for (const auto& m : j.at("members")) t.members.push_back(annotation_from_json(m, t.image_id));
  t.tied_classes = j.at("tied_classes").get<std::vector<ClassId>>();
  if (j.contains("resolution")) {
    const auto& r = j["resolution"];
    t.resolution = Resolution{r.at("class").get<std::string>(), r.value("resolver", std::string{}),
                              r.value("timestamp", std::string{}), r.value("override", false)};
  }
  return t;
}

json decision_to_json(const Decision& d) {
  return {{"schema", kDecisionSchema}, {"version", kReviewSchemaVersion},
          {"tie_id", d.tie_id},        {"image_id", d.image_id},
          {"class", d.chosen_class},   {"resolver", d.resolver},
          {"timestamp", d.timestamp},  {"override", d.override_vote}};
}

Decision decision_from_json(const json& j) {
  check_schema(j, kDecisionSchema);
  return Decision{j.at("tie_id").get<std::string>(),    j.value("image_id", std::string{}),
                  j.at("class").get<std::string>(),     j.value("resolver", std::string{}),
                  j.value("timestamp", std::string{}),  j.value("override", false)};
}

std::vector<TieRecord> read_tie_queue(const std::filesystem::path& path, const WarningSink& warn) {
  return read_jsonl<TieRecord>(path, tie_from_json, warn);
}

std::size_t append_tie_queue(const std::filesystem::path& path, std::span<const TieRecord> ties) {
  std::set<std::string> present;
  for (const auto& t : read_tie_queue(path)) present.insert(t.tie_id);
  std::string lines;
  std::size_t added = 0;
  for (const auto& t : ties) {
    if (!present.insert(t.tie_id).second) continue;
    TieRecord pending = t;
    pending.resolution.reset();  // resolution state lives in the decisions log
    lines += tie_to_json(pending).dump() + "\n";
    ++added;
  }
  if (!lines.empty()) durable_append(path, lines);
  return added;
}

std::vector<Decision> read_decisions(const std::filesystem::path& path, const WarningSink& warn) {
  return read_jsonl<Decision>(path, decision_from_json, warn);
}

void append_decision(const std::filesystem::path& path, const Decision& d) {
  durable_append(path, decision_to_json(d).dump() + "\n");
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<TieRecord> replay(std::vector<TieRecord> ties, std::span<const Decision> decisions,
                              const WarningSink& warn) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ties.size(); ++i) {
    ties[i].resolution.reset();
    index[ties[i].tie_id] = i;
  }
  for (const auto& d : decisions) {
    auto it = index.find(d.tie_id);
    if (it == index.end()) {
      if (warn) warn("decision for unknown tie " + d.tie_id + " ignored");
      continue;
    }
    auto& t = ties[it->second];
    if (!t.resolution) {
      t.resolution = Resolution{d.chosen_class, d.resolver, d.timestamp, d.override_vote};
    } else if (t.resolution->chosen_class != d.chosen_class && warn) {
      warn("conflicting decision for tie " + d.tie_id + " ignored");
    }
  }
  return ties;
}

TieStatus tie_status_from_string(std::string_view s) {
  if (s.empty() || s == "all") return TieStatus::all;
  if (s == "pending") return TieStatus::pending;
  if (s == "resolved") return TieStatus::resolved;
  throw ValidationError("unknown tie status '" + std::string(s) + "'");
}

json crop_overlay_json(const TieCrop& c) {
  json members = json::array();
  for (const auto& m : c.members) members.push_back(annotation_to_json(m, false));
  return {{"x", c.x},           {"y", c.y},          {"width", c.width},
          {"height", c.height}, {"members", members}, {"has_image", c.image.has_value()}};
}

TieQueue::TieQueue(std::vector<TieRecord> ties, std::vector<ClassId> vocabulary,
                   std::filesystem::path decisions_log, const WarningSink& warn)
    : vocabulary_(std::move(vocabulary)), log_(std::move(decisions_log)), clock_(utc_timestamp) {
  std::sort(ties.begin(), ties.end(), [](const TieRecord& a, const TieRecord& b) {
    return std::tie(a.image_id, a.tie_id) < std::tie(b.image_id, b.tie_id);
  });
  ties_ = replay(std::move(ties), read_decisions(log_, warn), warn);
  for (const auto& t : ties_) {
    for (const auto& c : t.tied_classes) {
      if (!contains(vocabulary_, c)) vocabulary_.push_back(c);
    }
  }
}

std::size_t TieQueue::index_of(const std::string& tie_id) const {
  for (std::size_t i = 0; i < ties_.size(); ++i) {
    if (ties_[i].tie_id == tie_id) return i;
  }
  throw NotFoundError("unknown tie '" + tie_id + "'");
}

std::vector<TieRecord> TieQueue::list(TieStatus status) const {
  std::shared_lock lock(mutex_);
  std::vector<TieRecord> out;
  for (const auto& t : ties_) {
    if (status == TieStatus::all || (status == TieStatus::pending) == t.pending()) out.push_back(t);
  }
  return out;
}

TieRecord TieQueue::get(const std::string& tie_id) const {
  std::shared_lock lock(mutex_);
  return ties_[index_of(tie_id)];
}

Progress TieQueue::progress() const {
  std::shared_lock lock(mutex_);
  Progress p;
  p.total = ties_.size();
  for (const auto& t : ties_) p.resolved += t.pending() ? 0 : 1;
  return p;
}

TieRecord TieQueue::post_decision(const std::string& tie_id, const ClassId& chosen_class,
                                  const std::string& resolver) {
  std::unique_lock lock(mutex_);
  auto& t = ties_[index_of(tie_id)];
  if (!contains(vocabulary_, chosen_class)) {
    throw ValidationError("class '" + chosen_class + "' is not in the vocabulary");
  }
  if (t.resolution) {
    if (t.resolution->chosen_class == chosen_class) return t;
    throw ConflictError("tie " + tie_id + " already resolved as " + t.resolution->chosen_class);
  }
  Decision d{tie_id, t.image_id, chosen_class, resolver, clock_(),
             !contains(t.tied_classes, chosen_class)};
  append_decision(log_, d);
  t.resolution = Resolution{d.chosen_class, d.resolver, d.timestamp, d.override_vote};
  return t;
}

TieCrop TieQueue::crop(const std::string& tie_id, int margin,
                       const std::filesystem::path& image_dir) const {
  if (margin < 0) throw ValidationError("crop margin must be non-negative");
  const TieRecord t = get(tie_id);
  std::optional<GrayImage> raster;
  const auto raster_path = image_dir / (t.image_id + ".pgm");
  if (!image_dir.empty() && std::filesystem::exists(raster_path)) raster = read_pgm(raster_path);

  std::vector<BBox> boxes;
  for (const auto& m : t.members) boxes.push_back(m.box);
  const BBox enc = enclosing_box(boxes);
  const int width = raster ? raster->width : t.image_width;
  const int height = raster ? raster->height : t.image_height;
  int x0 = std::max(0, static_cast<int>(std::floor(enc.x_min)) - margin);
  int y0 = std::max(0, static_cast<int>(std::floor(enc.y_min)) - margin);
  int x1 = static_cast<int>(std::ceil(enc.x_max)) + margin;
  int y1 = static_cast<int>(std::ceil(enc.y_max)) + margin;
  if (width > 0) x1 = std::min(x1, width);
  if (height > 0) y1 = std::min(y1, height);
  x0 = std::min(x0, std::max(0, x1 - 1));
  y0 = std::min(y0, std::max(0, y1 - 1));

  TieCrop c;
  c.x = x0;
  c.y = y0;
  c.width = x1 - x0;
  c.height = y1 - y0;
  for (auto m : t.members) {
    m.box = BBox(m.box.x_min - x0, m.box.y_min - y0, m.box.x_max - x0, m.box.y_max - y0);
    c.members.push_back(std::move(m));
  }
  if (raster) c.image = labelfuse::crop(*raster, c.x, c.y, c.width, c.height);
  return c;
}

std::vector<Cluster> resume_with_decisions(std::vector<Cluster> clusters,
                                           std::span<const Decision> decisions,
                                           const WarningSink& warn) {
  std::map<std::string, const Decision*> by_tie;
  for (const auto& d : decisions) {
    auto [it, inserted] = by_tie.emplace(d.tie_id, &d);
    if (!inserted && it->second->chosen_class != d.chosen_class && warn) {
      warn("conflicting decision for " + d.tie_id + " ignored");
    }
  }
  std::set<std::string> known;
  for (const auto& c : clusters) known.insert(c.cluster_id);
  for (const auto& [id, d] : by_tie) {
    if (!known.count(id) && warn) warn("decision for unknown cluster " + id + " ignored (stale?)");
  }

  std::vector<std::string> missing;
  for (auto& c : clusters) {
    const auto outcome = vote(c);
    if (const auto* decided = std::get_if<Decided>(&outcome)) {
      if (by_tie.count(c.cluster_id) && warn) {
        warn("decision for untied cluster " + c.cluster_id + " ignored");
      }
      c = apply_vote(std::move(c), decided->class_id);
    } else if (auto it = by_tie.find(c.cluster_id); it != by_tie.end()) {
      c = apply_vote(std::move(c), it->second->chosen_class);
    } else {
      missing.push_back(c.cluster_id);
    }
  }
  if (!missing.empty()) {
    std::string ids;
    for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
    throw ReviewRequired(std::to_string(missing.size()) + " tie(s) without a decision: " + ids);
  }
  return clusters;
}

std::vector<ClassId> default_tie_priority() { return {"CP", "MH", "PCH"}; }

std::vector<Cluster> resolve_with_priority(std::vector<Cluster> clusters,
                                           std::span<const ClassId> priority) {
  for (auto& c : clusters) {
    const auto outcome = vote(c);
    if (const auto* tie = std::get_if<Tie>(&outcome)) {
      c = apply_vote(std::move(c), resolve_by_priority(*tie, priority));
    } else {
      c = apply_vote(std::move(c), outcome);
    }
  }
  return clusters;
}

}  // namespace labelfuse
