#include <numeric>
#include <set>

#include "doctest.h"
#include "labelfuse/dataset_ops.hpp"
#include "labelfuse/error.hpp"
#include "labelfuse/random.hpp"
#include "test_support.hpp"

using namespace labelfuse;
using testing::ann;

namespace {

DatasetManifest blank_images(std::size_t n) {
  DatasetManifest m;
  m.vocabulary = {"CP", "MH", "PCH", "MD"};
  for (std::size_t i = 0; i < n; ++i) {
    ImageRecord r;
    r.image_id = "img_" + std::to_string(1000 + i);
    r.width = r.height = 1000;
    m.images.push_back(r);
  }
  return m;
}

}  // namespace

TEST_CASE("mt19937_64 engine matches the standard's reference output") {
  std::mt19937_64 e;
  e.discard(9999);
  CHECK(e() == 9981545732273789042ULL);
  Rng r(5489);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
  CHECK(mix_seed(7, 0) == mix_seed(7, 0));
}

TEST_CASE("split sizes use largest-remainder rounding") {
  CHECK(split_sizes(339, {0.70, 0.15, 0.15}) == std::array<std::size_t, 3>{237, 51, 51});
  CHECK(split_sizes(10, {0.7, 0.15, 0.15}) == std::array<std::size_t, 3>{7, 2, 1});
  CHECK(split_sizes(3, {1.0 / 3, 1.0 / 3, 1.0 / 3}) == std::array<std::size_t, 3>{1, 1, 1});
  CHECK(split_sizes(1, {0.5, 0.25, 0.25}) == std::array<std::size_t, 3>{1, 0, 0});
  CHECK_THROWS_AS(split_sizes(10, {0.7, 0.2, 0.2}), ValidationError);
  CHECK_THROWS_AS(split_sizes(10, {1.0, 0.0, 0.0}), ValidationError);
  for (std::size_t n = 1; n < 500; ++n) {
    const auto s = split_sizes(n, {0.7, 0.15, 0.15});
    CHECK(s[0] + s[1] + s[2] == n);
    for (int k = 0; k < 3; ++k) {
      const double exact = n * std::array{0.7, 0.15, 0.15}[k];
      CHECK(std::abs(static_cast<double>(s[k]) - exact) < 1.0);
    }
  }
}

TEST_CASE("split_dataset assignment") {
  const auto m = blank_images(339);
  const auto a = split_dataset(m, {0.70, 0.15, 0.15}, 42);
  const auto b = split_dataset(m, {0.70, 0.15, 0.15}, 42);
  CHECK(a == b);
  std::array<std::size_t, 3> counts{};
  for (const auto& img : a.images) {
    REQUIRE(img.split.has_value());
    ++counts[static_cast<std::size_t>(*img.split)];
  }
  CHECK(counts == std::array<std::size_t, 3>{237, 51, 51});
  CHECK(a.metadata.at("split.seed") == "42");
  CHECK(a.metadata.at("split.generator") == std::string(Rng::kAlgorithm) + " fisher-yates");

  const auto c = split_dataset(m, {0.70, 0.15, 0.15}, 43);
  CHECK(c.images != a.images);
  CHECK_THROWS_AS(split_dataset(DatasetManifest{}, {0.7, 0.15, 0.15}, 1), ValidationError);

  // Independent Fisher-Yates over the raw engine reproduces the assignment.
  std::vector<std::size_t> order(339);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 e(42);
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[e() % (i + 1)]);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const Split expected = pos < 237 ? Split::train : pos < 288 ? Split::val : Split::test;
    CHECK(a.images[order[pos]].split == expected);
  }
}

TEST_CASE("class counts") {
  auto m = testing::one_image_manifest({ann(0, 0, 1, 1, "CP"), ann(0, 0, 1, 1, "CP"), ann(0, 0, 1, 1, "CP"),
                                        ann(0, 0, 1, 1, "MH")});
  m.images[0].split = Split::val;
  auto t = class_counts(m);
  CHECK(t.at("val").at("CP") == 3);
  CHECK(t.at("val").at("MH") == 1);
  CHECK(t.at("val").at("PCH") == 0);
  CHECK(t.at("all").at("CP") == 3);
  CHECK(t.at("train").at("CP") == 0);
  CHECK(t.count(kUnsplit) == 0);

  m.images[0].partition_tag = "MD";
  t = class_counts(m, std::string("MD"));
  CHECK(t.at("all").at("CP") == 0);
  CHECK(t.at("all").at("MH") == 0);

  t = class_counts(DatasetManifest{{"CP", "MH"}, {}, {}, {}});
  CHECK(t.at("all").at("CP") == 0);

  m.images[0].split.reset();
  t = class_counts(m);
  CHECK(t.at(kUnsplit).at("CP") == 3);
  const auto tsv = class_counts_tsv(t, m.vocabulary);
  CHECK(tsv.rfind("class\t", 0) == 0);
}

TEST_CASE("size distribution") {
  auto m = testing::one_image_manifest({ann(0, 0, 50, 100, "CP"), ann(0, 0, 2, 2, "MH"), ann(5, 5, 7, 7, "MH")});
  const auto sizes = size_distribution(m);
  CHECK(sizes.at("CP") == std::vector<double>{5000});
  CHECK(sizes.at("MH") == std::vector<double>{4, 4});
  CHECK(sizes.at("PCH").empty());
  CHECK(size_distribution_tsv(sizes).find("5000") != std::string::npos);
}

TEST_CASE("partition table reproduces the published split grid") {
  struct Row {
    const char* tag;
    std::size_t train, val, test;
  };
  const Row rows[]{{"PCH", 73, 13, 18}, {"MH", 29, 8, 5}, {"CP", 72, 13, 19}, {"MD", 63, 17, 9}};
  DatasetManifest m;
  m.vocabulary = {"CP", "MH", "PCH", "MD"};
  int id = 0;
  for (const auto& r : rows) {
    for (auto [split, n] : {std::pair{Split::train, r.train}, {Split::val, r.val}, {Split::test, r.test}}) {
      for (std::size_t i = 0; i < n; ++i) {
        ImageRecord img;
        img.image_id = "i" + std::to_string(id++);
        img.width = img.height = 1000;
        img.partition_tag = r.tag;
        img.split = split;
        m.images.push_back(img);
      }
    }
  }
  const auto t = image_partition_table(m);
  CHECK(t.rows == std::vector<std::string>{"PCH", "MH", "CP", "MD"});
  CHECK(t.columns == std::vector<std::string>{"train", "val", "test"});
  for (const auto& r : rows) {
    CHECK(t.cells.at(r.tag).at("train") == r.train);
    CHECK(t.cells.at(r.tag).at("val") == r.val);
    CHECK(t.cells.at(r.tag).at("test") == r.test);
  }
  CHECK(t.column_total("train") == 237);
  CHECK(t.column_total("val") == 51);
  CHECK(t.column_total("test") == 51);
  CHECK(t.total() == 339);
  CHECK(t.row_total("MD") == 89);

  auto single = testing::one_image_manifest({});
  single.images[0].split = Split::test;
  const auto one = image_partition_table(single);
  CHECK(one.total() == 1);
  CHECK(one.cells.at(kUntagged).at("test") == 1);
  CHECK(partition_table_tsv(t).find("total\t237\t51\t51\t339\n") != std::string::npos);
}
