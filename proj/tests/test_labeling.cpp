#include <doctest.h>

#include <random>

#include "mitoseg/labeling.hpp"
#include "support/oracles.hpp"
#include "support/random_volumes.hpp"

using namespace mitoseg;
using testing::flood_fill_oracle;

TEST_CASE("two isolated seeds get labels 1 and 2") {
  SeedMap s(Dims{1, 1, 5});
  s[0] = 1;
  s[4] = 1;
  const auto l = label_components(s);
  CHECK(l[0] == 1);
  CHECK(l[4] == 2);
  CHECK(l[2] == 0);
}

TEST_CASE("diagonal neighbours merge only under 26-connectivity") {
  SeedMap s(Dims{2, 2, 2});
  s.at(0, 0, 0) = 1;
  s.at(1, 1, 1) = 1;
  const auto six = label_components(s, Connectivity::Six);
  CHECK(six.at(1, 1, 1) == 2);
  const auto full = label_components(s, Connectivity::TwentySix);
  CHECK(full.at(0, 0, 0) == 1);
  CHECK(full.at(1, 1, 1) == 1);
}

TEST_CASE("empty and full volumes") {
  const auto empty = label_components(SeedMap(Dims{3, 3, 3}));
  for (auto v : empty.data()) CHECK(v == 0);
  const auto full = label_components(SeedMap(Dims{3, 3, 3}, 1));
  for (auto v : full.data()) CHECK(v == 1);
}

TEST_CASE("min_size drops small components and renumbers") {
  SeedMap s(Dims{1, 1, 9});
  s[0] = 1;                        // size 1
  s[2] = s[3] = s[4] = 1;          // size 3
  s[6] = s[7] = 1;                 // size 2
  const auto l = label_components(s, Connectivity::Six, 2);
  CHECK(l[0] == 0);
  CHECK(l[2] == 1);
  CHECK(l[6] == 2);
  CHECK(l == flood_fill_oracle(s, 6, 2));
}

TEST_CASE("connectivity_from_int") {
  CHECK(connectivity_from_int(6) == Connectivity::Six);
  CHECK(connectivity_from_int(26) == Connectivity::TwentySix);
  CHECK_THROWS_AS(connectivity_from_int(18), Error);
}

TEST_CASE("non-binary seed map is rejected") {
  SeedMap s(Dims{1, 1, 2});
  s[0] = 2;
  CHECK_THROWS_AS(label_components(s), Error);
}

TEST_CASE("union-find") {
  UnionFind uf(5);
  CHECK_FALSE(uf.same(0, 1));
  uf.unite(0, 1);
  uf.unite(3, 4);
  CHECK(uf.same(0, 1));
  CHECK_FALSE(uf.same(1, 3));
  uf.unite(1, 4);
  CHECK(uf.same(0, 3));
  const auto n = uf.add();
  CHECK(n == 5);
  CHECK(uf.find(n) == n);
}

TEST_CASE("property: matches flood fill on random 64^3 volumes") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 4; ++trial) {
    const auto s = testing::random_binary(Dims{64, 64, 64}, trial % 2 ? 0.3 : 0.5, rng);
    for (int c : {6, 26}) {
      const auto conn = connectivity_from_int(c);
      CHECK(label_components(s, conn) == flood_fill_oracle(s, c));
    }
  }
}

TEST_CASE("chunked labeling equals whole-volume labeling") {
  std::mt19937_64 rng(3);
  const Dims vol{64, 64, 64};
  const auto s = testing::random_binary(vol, 0.4, rng);
  for (int c : {6, 26}) {
    const auto conn = connectivity_from_int(c);
    const auto whole = label_components(s, conn);
    for (const Dims chunk : {Dims{32, 32, 32}, Dims{16, 16, 16}, Dims{48, 32, 24}}) {
      const ChunkGrid g(vol, chunk, Dims{1, 1, 1});
      CHECK(label_components_chunked(s, g, conn, 0, 1) == whole);
      CHECK(label_components_chunked(s, g, conn, 0, 4) == whole);
    }
  }
}

TEST_CASE("a bar straddling four chunks is one instance") {
  SeedMap s(Dims{8, 8, 8});
  for (std::int64_t x = 0; x < 8; ++x) s.at(3, 3, x) = s.at(4, 4, x) = 1;
  for (std::int64_t x = 0; x < 8; ++x) s.at(4, 3, x) = 1;
  const ChunkGrid g(s.dims(), Dims{4, 4, 4}, Dims{1, 1, 1});
  const auto l = label_components_chunked(s, g, Connectivity::Six);
  for (std::size_t i = 0; i < l.size(); ++i) CHECK(l[i] == s[i]);
}

TEST_CASE("diagonal contact across a chunk corner under 26-connectivity") {
  SeedMap s(Dims{4, 4, 4});
  s.at(1, 1, 1) = 1;
  s.at(2, 2, 2) = 1;
  s.at(1, 2, 1) = 0;
  const ChunkGrid g(s.dims(), Dims{2, 2, 2}, Dims{1, 1, 1});
  const auto l = label_components_chunked(s, g, Connectivity::TwentySix);
  CHECK(l.at(1, 1, 1) == 1);
  CHECK(l.at(2, 2, 2) == 1);
  const auto l6 = label_components_chunked(s, g, Connectivity::Six);
  CHECK(l6.at(2, 2, 2) == 2);
}

TEST_CASE("chunked labeling errors") {
  SeedMap s(Dims{4, 4, 4}, 1);
  CHECK_THROWS_AS(label_components_chunked(s, ChunkGrid(s.dims(), Dims{2, 4, 4}), Connectivity::Six), Error);
  CHECK_THROWS_AS(label_components_chunked(s, ChunkGrid(Dims{4, 4, 5}, Dims{4, 4, 5}), Connectivity::Six), Error);
  // Halo is only required along split axes.
  CHECK_NOTHROW(label_components_chunked(s, ChunkGrid(s.dims(), Dims{2, 4, 4}, Dims{1, 0, 0}), Connectivity::Six));
}

TEST_CASE("64-bit labels match 32-bit labels") {
  std::mt19937_64 rng(8);
  const auto s = testing::random_binary(Dims{10, 12, 14}, 0.5, rng);
  const auto a = label_components<std::uint32_t>(s, Connectivity::TwentySix);
  const auto b = label_components<std::uint64_t>(s, Connectivity::TwentySix);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("instance table bins and scores") {
  LabelVolume<std::uint32_t> l(Dims{1, 100, 200});
  for (std::size_t i = 0; i < 4999; ++i) l[i] = 1;
  for (std::size_t i = 4999; i < 4999 + 5000; ++i) l[i] = 3;
  for (std::size_t i = 10000; i < 20000; ++i) l[i] = 7;
  const auto t = instance_table(l);
  REQUIRE(t.size() == 3);
  CHECK(t.find(1)->category == SizeCategory::Small);
  CHECK(t.find(3)->category == SizeCategory::Medium);
  CHECK(t.find(7)->voxels == 10000);
  CHECK(t.find(7)->category == SizeCategory::Medium);
  CHECK(t.find(2) == nullptr);
  CHECK(t.find(1)->score == doctest::Approx(4999.0));

  Volume<float> prob(l.dims(), 0.25f);
  const auto scored = instance_table(l, &prob);
  CHECK(scored.find(3)->score == doctest::Approx(0.25));

  SizeBins bins{10, 20};
  CHECK(bins.classify(9) == SizeCategory::Small);
  CHECK(bins.classify(10) == SizeCategory::Medium);
  CHECK(bins.classify(20) == SizeCategory::Large);
  CHECK(SizeBins{}.classify(15000) == SizeCategory::Large);
  CHECK_THROWS_AS((SizeBins{20, 10}.validate()), Error);
}

TEST_CASE("property: instance table agrees with a histogram") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto l = testing::random_labels(Dims{8, 9, 10}, 30, rng);
    const auto h = testing::histogram_oracle(l);
    const auto t = instance_table(l);
    CHECK(t.size() == h.size());
    for (const auto& [label, n] : h) {
      REQUIRE(t.find(label) != nullptr);
      CHECK(t.find(label)->voxels == n);
    }
  }
}
