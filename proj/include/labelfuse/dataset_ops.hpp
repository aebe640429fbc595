#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "labelfuse/annotation.hpp"

namespace labelfuse {

using SplitRatios = std::array<double, 3>;  // train, val, test

/// Largest-remainder apportionment of n items; ties in the fractional part
/// go to the earlier subset.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios);

/// Assigns every image to exactly one split. A Fisher-Yates shuffle driven
/// by Rng(seed) (j = next() % (i + 1), i descending) permutes the manifest
/// order; the first sizes[0] images become train, the next sizes[1] val and
/// the rest test. The generator and seed are recorded in the metadata.
DatasetManifest split_dataset(DatasetManifest m, const SplitRatios& ratios, std::uint64_t seed);

/// Column key for images without a split.
inline constexpr const char* kUnsplit = "unsplit";
inline constexpr const char* kAllSplits = "all";
inline constexpr const char* kUntagged = "untagged";

/// split column -> class -> count. Columns train/val/test/all are always
/// present, unsplit only when needed. Every vocabulary class gets a row.
using CountTable = std::map<std::string, std::map<ClassId, std::size_t>>;

CountTable class_counts(const DatasetManifest& m,
                        const std::optional<std::string>& exclude_partition = std::nullopt);

/// class -> ascending list of label areas (px^2). No truncation.
std::map<ClassId, std::vector<double>> size_distribution(const DatasetManifest& m);

/// Partition x split image counts with row and column totals.
struct PartitionTable {
  std::vector<std::string> rows;     // partition tags, "untagged" last when present
  std::vector<std::string> columns;  // train, val, test, [unsplit]
  std::map<std::string, std::map<std::string, std::size_t>> cells;

  std::size_t row_total(const std::string& row) const;
  std::size_t column_total(const std::string& column) const;
  std::size_t total() const;
};

PartitionTable image_partition_table(const DatasetManifest& m);

// Tab-separated exports with a header row.
std::string class_counts_tsv(const CountTable& t, const std::vector<ClassId>& vocabulary);
std::string size_distribution_tsv(const std::map<ClassId, std::vector<double>>& sizes);
std::string partition_table_tsv(const PartitionTable& t);

}  // namespace labelfuse
