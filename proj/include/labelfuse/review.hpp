#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "labelfuse/consensus.hpp"
#include "labelfuse/formats.hpp"
#include "labelfuse/raster.hpp"

namespace labelfuse {

inline constexpr std::string_view kTieSchema = "labelfuse.tie";
inline constexpr std::string_view kDecisionSchema = "labelfuse.decision";
inline constexpr int kReviewSchemaVersion = 1;

/// One line of the append-only decisions log.
struct Decision {
  std::string tie_id;
  std::string image_id;
  ClassId chosen_class;
  std::string resolver;
  std::string timestamp;
  bool override_vote = false;

  friend bool operator==(const Decision&, const Decision&) = default;
};

nlohmann::json tie_to_json(const TieRecord& t);
TieRecord tie_from_json(const nlohmann::json& j);
nlohmann::json decision_to_json(const Decision& d);
Decision decision_from_json(const nlohmann::json& j);

// Queue and log files hold one JSON object per line. A torn final line
// (no trailing newline and not parseable) is reported and skipped.

std::vector<TieRecord> read_tie_queue(const std::filesystem::path& path, const WarningSink& warn = {});
/// Appends records whose tie_id is not already in the file; returns how many.
std::size_t append_tie_queue(const std::filesystem::path& path, std::span<const TieRecord> ties);

std::vector<Decision> read_decisions(const std::filesystem::path& path, const WarningSink& warn = {});
/// Appends one line and fsyncs before returning.
void append_decision(const std::filesystem::path& path, const Decision& d);

std::string utc_timestamp();

/// Replays `decisions` in order over fresh copies of `ties`. The first
/// decision for a tie wins; later identical ones are no-ops and conflicting
/// ones are skipped with a warning.
std::vector<TieRecord> replay(std::vector<TieRecord> ties, std::span<const Decision> decisions,
                              const WarningSink& warn = {});

enum class TieStatus { all, pending, resolved };
TieStatus tie_status_from_string(std::string_view s);

struct Progress {
  std::size_t resolved = 0;
  std::size_t total = 0;
};

/// Crop around a tie's members plus overlay boxes in crop-local coordinates.
struct TieCrop {
  int x = 0, y = 0, width = 0, height = 0;  // crop rectangle in image pixels
  std::vector<Annotation> members;          // boxes shifted by (-x, -y)
  std::optional<GrayImage> image;           // empty when the raster is missing
};

nlohmann::json crop_overlay_json(const TieCrop& c);

/// Pending ties plus the durable decisions log that resolves them. Reads
/// run concurrently; decisions are serialized and acknowledged only after
/// the log append has been synced.
class TieQueue {
 public:
  using Clock = std::function<std::string()>;

  TieQueue(std::vector<TieRecord> ties, std::vector<ClassId> vocabulary,
           std::filesystem::path decisions_log, const WarningSink& warn = {});

  /// Ordered by (image_id, tie_id).
  std::vector<TieRecord> list(TieStatus status = TieStatus::all) const;
  /// Throws NotFoundError.
  TieRecord get(const std::string& tie_id) const;
  Progress progress() const;
  const std::vector<ClassId>& vocabulary() const noexcept { return vocabulary_; }

  /// Throws NotFoundError for an unknown tie, ValidationError for a class
  /// outside the vocabulary and ConflictError when a different class was
  /// already recorded. Reposting the recorded class is acknowledged without
  /// writing.
  TieRecord post_decision(const std::string& tie_id, const ClassId& chosen_class,
                          const std::string& resolver);

  /// Crop of `image_dir/<image_id>.pgm`, expanded by `margin` and clamped.
  TieCrop crop(const std::string& tie_id, int margin, const std::filesystem::path& image_dir) const;

  void set_clock(Clock clock) { clock_ = std::move(clock); }

 private:
  std::size_t index_of(const std::string& tie_id) const;

  mutable std::shared_mutex mutex_;
  std::vector<TieRecord> ties_;
  std::vector<ClassId> vocabulary_;
  std::filesystem::path log_;
  Clock clock_;
};

/// Applies the vote to every cluster, using `decisions` for the tied ones.
/// Throws ReviewRequired naming every tie without a decision. Decisions for
/// unknown or untied clusters are reported through `warn` and ignored.
std::vector<Cluster> resume_with_decisions(std::vector<Cluster> clusters,
                                           std::span<const Decision> decisions,
                                           const WarningSink& warn = {});

/// Headless tie policy used for batch runs. Default priority CP > MH > PCH.
std::vector<ClassId> default_tie_priority();
std::vector<Cluster> resolve_with_priority(std::vector<Cluster> clusters,
                                           std::span<const ClassId> priority);

}  // namespace labelfuse
