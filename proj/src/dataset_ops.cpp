#include "labelfuse/dataset_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "labelfuse/error.hpp"
#include "labelfuse/formats.hpp"
#include "labelfuse/random.hpp"

namespace labelfuse {

namespace {

constexpr double kRatioTolerance = 1e-9;

std::string split_column(const ImageRecord& img) {
  return img.split ? std::string(to_string(*img.split)) : std::string(kUnsplit);
}

}  // namespace

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw ValidationError("split ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > kRatioTolerance) {
    throw ValidationError("split ratios must sum to 1");
  }
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = ratios[i] * static_cast<double>(n);
    const double base = std::floor(quota + kRatioTolerance);
    sizes[i] = static_cast<std::size_t>(base);
    remainder[i] = std::max(0.0, quota - base);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b] + kRatioTolerance;
  });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % 3, ++assigned) ++sizes[order[k]];
  return sizes;
}

DatasetManifest split_dataset(DatasetManifest m, const SplitRatios& ratios, std::uint64_t seed) {
  const std::size_t n = m.images.size();
  if (n == 0) throw ValidationError("cannot split an empty dataset");
  const auto sizes = split_sizes(n, ratios);

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::swap(perm[i], perm[rng.below(i + 1)]);
  }
  for (std::size_t k = 0; k < n; ++k) {
    const Split s = k < sizes[0] ? Split::train : k < sizes[0] + sizes[1] ? Split::val : Split::test;
    m.images[perm[k]].split = s;
  }
  std::ostringstream r;
  r << format_double(ratios[0]) << "," << format_double(ratios[1]) << "," << format_double(ratios[2]);
  m.metadata["split.generator"] = std::string(Rng::kAlgorithm) + " fisher-yates";
  m.metadata["split.seed"] = std::to_string(seed);
  m.metadata["split.ratios"] = r.str();
  return m;
}

CountTable class_counts(const DatasetManifest& m, const std::optional<std::string>& exclude_partition) {
  CountTable t;
  std::vector<std::string> columns{"train", "val", "test", kAllSplits};
  for (const auto& img : m.images) {
    if (!img.split) {
      columns.emplace_back(kUnsplit);
      break;
    }
  }
  for (const auto& col : columns) {
    for (const auto& cls : m.vocabulary) t[col][cls] = 0;
  }
  for (const auto& img : m.images) {
    if (exclude_partition && img.partition_tag == *exclude_partition) continue;
    const auto col = split_column(img);
    for (const auto& a : img.annotations) {
      ++t[col][a.class_id];
      ++t[kAllSplits][a.class_id];
    }
  }
  return t;
}

std::map<ClassId, std::vector<double>> size_distribution(const DatasetManifest& m) {
  std::map<ClassId, std::vector<double>> out;
  for (const auto& cls : m.vocabulary) out[cls];
  for (const auto& img : m.images) {
    for (const auto& a : img.annotations) out[a.class_id].push_back(area(a.box));
  }
  for (auto& [cls, v] : out) std::sort(v.begin(), v.end());
  return out;
}

std::size_t PartitionTable::row_total(const std::string& row) const {
  std::size_t n = 0;
  if (auto it = cells.find(row); it != cells.end()) {
    for (const auto& [col, c] : it->second) n += c;
  }
  return n;
}

std::size_t PartitionTable::column_total(const std::string& column) const {
  std::size_t n = 0;
  for (const auto& [row, cols] : cells) {
    if (auto it = cols.find(column); it != cols.end()) n += it->second;
  }
  return n;
}

std::size_t PartitionTable::total() const {
  std::size_t n = 0;
  for (const auto& row : rows) n += row_total(row);
  return n;
}

PartitionTable image_partition_table(const DatasetManifest& m) {
  PartitionTable t;
  t.columns = {"train", "val", "test"};
  std::set<std::string> tags;
  bool untagged = false;
  for (const auto& img : m.images) {
    if (img.partition_tag) {
      tags.insert(*img.partition_tag);
    } else {
      untagged = true;
    }
    if (!img.split && std::find(t.columns.begin(), t.columns.end(), kUnsplit) == t.columns.end()) {
      t.columns.emplace_back(kUnsplit);
    }
  }
  for (std::string_view known : {classes::kPartiallyClosedHole, classes::kMissingHole,
                                 classes::kClosedPatch, classes::kMultipleDefect}) {
    if (tags.erase(std::string(known))) t.rows.emplace_back(known);
  }
  t.rows.insert(t.rows.end(), tags.begin(), tags.end());
  if (untagged) t.rows.emplace_back(kUntagged);
  for (const auto& row : t.rows) {
    for (const auto& col : t.columns) t.cells[row][col] = 0;
  }
  for (const auto& img : m.images) {
    ++t.cells[img.partition_tag.value_or(kUntagged)][split_column(img)];
  }
  return t;
}

std::string class_counts_tsv(const CountTable& t, const std::vector<ClassId>& vocabulary) {
  std::vector<std::string> columns;
  for (const char* c : {"train", "val", "test", kUnsplit, kAllSplits}) {
    if (t.count(c)) columns.emplace_back(c);
  }
  std::ostringstream os;
  os << "class";
  for (const auto& c : columns) os << '\t' << c;
  os << '\n';
  for (const auto& cls : vocabulary) {
    os << cls;
    for (const auto& c : columns) {
      const auto& col = t.at(c);
      auto it = col.find(cls);
      os << '\t' << (it == col.end() ? 0 : it->second);
    }
    os << '\n';
  }
  return os.str();
}

std::string size_distribution_tsv(const std::map<ClassId, std::vector<double>>& sizes) {
  std::ostringstream os;
  os << "# label areas in px^2, sorted ascending per class, untruncated\n";
  os << "class\tarea\n";
  for (const auto& [cls, v] : sizes) {
    for (double a : v) os << cls << '\t' << format_double(a) << '\n';
  }
  return os.str();
}

std::string partition_table_tsv(const PartitionTable& t) {
  std::ostringstream os;
  os << "partition";
  for (const auto& c : t.columns) os << '\t' << c;
  os << "\tall\n";
  for (const auto& row : t.rows) {
    os << row;
    for (const auto& c : t.columns) os << '\t' << t.cells.at(row).at(c);
    os << '\t' << t.row_total(row) << '\n';
  }
  os << "total";
  for (const auto& c : t.columns) os << '\t' << t.column_total(c);
  os << '\t' << t.total() << '\n';
  return os.str();
}

}  // namespace labelfuse
