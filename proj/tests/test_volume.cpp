#include <doctest.h>

#include <fstream>
#include <iterator>
#include <random>
#include <vector>

#include "mitoseg/volume.hpp"
#include "support/random_volumes.hpp"
#include "support/temp_dir.hpp"

using namespace mitoseg;
using mitoseg::testing::TempDir;

namespace {

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> header(std::uint8_t code, std::uint64_t d, std::uint64_t h, std::uint64_t w) {
  std::vector<unsigned char> b{'E', 'M', 'V', '1', code};
  for (std::uint64_t v : {d, h, w})
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
  return b;
}

}  // namespace

TEST_CASE("single voxel u8 file decodes") {
  TempDir tmp;
  auto bytes = header(0, 1, 1, 1);
  bytes.push_back(7);
  write_bytes(tmp / "one.emv", bytes);

  const auto v = load_volume_as<std::uint8_t>(tmp / "one.emv");
  CHECK(v.dims() == Dims{1, 1, 1});
  CHECK(v[0] == 7);
}

TEST_CASE("header layout is bit-exact") {
  TempDir tmp;
  Volume<std::uint16_t> v(Dims{2, 3, 4});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::uint16_t>(0x0100 + i);
  save_volume(tmp / "v.emv", v);

  const auto bytes = read_bytes(tmp / "v.emv");
  REQUIRE(bytes.size() == kEmv1HeaderBytes + v.size() * 2);
  const auto expected = header(1, 2, 3, 4);
  CHECK(std::equal(expected.begin(), expected.end(), reinterpret_cast<const unsigned char*>(bytes.data())));
  // Little-endian payload, x fastest.
  CHECK(static_cast<unsigned char>(bytes[29]) == 0x00);
  CHECK(static_cast<unsigned char>(bytes[30]) == 0x01);
  CHECK(static_cast<unsigned char>(bytes[31]) == 0x01);
}

TEST_CASE("f32 round trip is bitwise and files are byte-identical") {
  TempDir tmp;
  std::mt19937_64 rng(11);
  const auto v = mitoseg::testing::random_probability(Dims{8, 8, 8}, rng);
  save_volume(tmp / "a.emv", v);
  const auto back = load_volume_as<float>(tmp / "a.emv");
  CHECK(back == v);
  save_volume(tmp / "b.emv", back);
  CHECK(read_bytes(tmp / "a.emv") == read_bytes(tmp / "b.emv"));
}

TEST_CASE("every dtype survives save/load/save byte-for-byte") {
  TempDir tmp;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::uint64_t> u;
  std::uniform_int_distribution<int> dim(1, 6);
  for (int trial = 0; trial < 20; ++trial) {
    const Dims dims{dim(rng), dim(rng), dim(rng)};
    std::vector<AnyVolume> vols;
    Volume<std::uint8_t> a(dims);
    Volume<std::uint16_t> b(dims);
    Volume<std::uint32_t> c(dims);
    Volume<std::uint64_t> d(dims);
    Volume<float> e(dims);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto r = u(rng);
      a[i] = static_cast<std::uint8_t>(r);
      b[i] = static_cast<std::uint16_t>(r);
      c[i] = static_cast<std::uint32_t>(r);
      d[i] = r;
      e[i] = static_cast<float>(r % 1000) / 999.0f;
    }
    vols = {a, b, c, d, e};
    for (const auto& v : vols) {
      save_volume(tmp / "p.emv", v);
      const auto first = read_bytes(tmp / "p.emv");
      const auto loaded = load_volume(tmp / "p.emv");
      CHECK(dtype_of(loaded) == dtype_of(v));
      save_volume(tmp / "q.emv", loaded);
      CHECK(read_bytes(tmp / "q.emv") == first);
    }
  }
}

TEST_CASE("large u8 volume: voxel count matches file size minus header") {
  TempDir tmp;
  const Dims dims{4, 4096, 4096};
  const std::uint64_t voxels = 4ull * 4096ull * 4096ull;
  REQUIRE(voxels == 67'108'864ull);
  save_volume(tmp / "big.emv", Volume<std::uint8_t>(dims, 3));
  CHECK(std::filesystem::file_size(tmp / "big.emv") == voxels + kEmv1HeaderBytes);
  const auto v = load_volume_as<std::uint8_t>(tmp / "big.emv");
  CHECK(v.size() == voxels);
  CHECK(v.at(3, 4095, 4095) == 3);
}

TEST_CASE("load errors") {
  TempDir tmp;
  SUBCASE("bad magic") {
    auto bytes = header(0, 1, 1, 1);
    bytes[0] = 'X';
    bytes.push_back(0);
    write_bytes(tmp / "bad.emv", bytes);
    try {
      load_volume(tmp / "bad.emv");
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Format);
    }
  }
  SUBCASE("truncated payload") {
    auto bytes = header(4, 2, 2, 2);
    bytes.resize(bytes.size() + 7 * 4);
    write_bytes(tmp / "short.emv", bytes);
    try {
      load_volume(tmp / "short.emv");
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::SizeMismatch);
    }
  }
  SUBCASE("unknown dtype") {
    auto bytes = header(9, 1, 1, 1);
    bytes.push_back(0);
    write_bytes(tmp / "dt.emv", bytes);
    try {
      load_volume(tmp / "dt.emv");
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::UnsupportedDtype);
    }
  }
  SUBCASE("wrong requested dtype") {
    save_volume(tmp / "u8.emv", Volume<std::uint8_t>(Dims{1, 1, 1}));
    CHECK_THROWS_AS(load_volume_as<float>(tmp / "u8.emv"), Error);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_volume(tmp / "nope.emv"), Error); }
}

TEST_CASE("probability validation") {
  Volume<float> v(Dims{1, 1, 3}, 0.5f);
  CHECK_NOTHROW(validate_probability(v, "v"));
  v[1] = 1.5f;
  CHECK_THROWS_AS(validate_probability(v, "v"), Error);
  v[1] = std::nanf("");
  CHECK_THROWS_AS(validate_probability(v, "v"), Error);
}

TEST_CASE("chunk grid examples") {
  SUBCASE("one chunk") {
    ChunkGrid g(Dims{4, 4, 4}, Dims{4, 4, 4});
    CHECK(g.size() == 1);
  }
  SUBCASE("two slabs") {
    ChunkGrid g(Dims{4, 4, 4}, Dims{2, 4, 4});
    REQUIRE(g.size() == 2);
    CHECK(g.chunks()[0].core.origin == Dims{0, 0, 0});
    CHECK(g.chunks()[1].core.origin == Dims{2, 0, 0});
  }
  SUBCASE("test-set scale grid with clamped halo") {
    const Dims vol{100, 4096, 4096};
    ChunkGrid g(vol, Dims{100, 512, 512}, Dims{1, 1, 1});
    // Enumerate origins independently.
    std::size_t n = 0;
    for (std::int64_t z = 0; z < vol.d; z += 100)
      for (std::int64_t y = 0; y < vol.h; y += 512)
        for (std::int64_t x = 0; x < vol.w; x += 512) ++n;
    CHECK(n == 64);
    CHECK(g.size() == n);
    const auto& first = g.chunks().front();
    CHECK(first.with_halo.origin == Dims{0, 0, 0});
    CHECK(first.with_halo.extent == Dims{100, 513, 513});
    const auto& mid = g.chunks()[9];  // (0, 1, 1)
    CHECK(mid.with_halo.origin == Dims{0, 511, 511});
    CHECK(mid.with_halo.extent == Dims{100, 514, 514});
    const auto& last = g.chunks().back();
    CHECK(last.with_halo.origin.h + last.with_halo.extent.h == 4096);
  }
  SUBCASE("invalid grids") {
    CHECK_THROWS_AS(ChunkGrid(Dims{4, 4, 4}, Dims{0, 4, 4}), Error);
    CHECK_THROWS_AS(ChunkGrid(Dims{4, 4, 4}, Dims{5, 4, 4}), Error);
    CHECK_THROWS_AS(ChunkGrid(Dims{4, 4, 4}, Dims{2, 2, 2}, Dims{-1, 0, 0}), Error);
  }
}

TEST_CASE("property: chunk cores tile the volume exactly once") {
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<std::int64_t> dim(1, 20);
  std::uniform_int_distribution<std::int64_t> halo(0, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const Dims vol{dim(rng), dim(rng), dim(rng)};
    const Dims chunk{std::uniform_int_distribution<std::int64_t>(1, vol.d)(rng),
                     std::uniform_int_distribution<std::int64_t>(1, vol.h)(rng),
                     std::uniform_int_distribution<std::int64_t>(1, vol.w)(rng)};
    ChunkGrid g(vol, chunk, Dims{halo(rng), halo(rng), halo(rng)});
    Volume<std::uint8_t> v(vol);
    Volume<std::uint32_t> hits(vol);
    for (const auto& cv : iter_chunks(v, g)) {
      const Box& c = cv.chunk.core;
      const Box& h = cv.view.box();
      CHECK(h.origin.d >= 0);
      CHECK(h.origin.d + h.extent.d <= vol.d);
      CHECK(h.origin.h + h.extent.h <= vol.h);
      CHECK(h.origin.w + h.extent.w <= vol.w);
      for (std::int64_t z = c.origin.d; z < c.origin.d + c.extent.d; ++z)
        for (std::int64_t y = c.origin.h; y < c.origin.h + c.extent.h; ++y)
          for (std::int64_t x = c.origin.w; x < c.origin.w + c.extent.w; ++x) {
            ++hits.at(z, y, x);
            CHECK(g.chunk_index_of(z, y, x) == cv.chunk.index);
            CHECK(h.contains(z, y, x));
          }
    }
    std::uint64_t total = 0;
    bool all_one = true;
    for (auto n : hits.data()) {
      total += n;
      all_one = all_one && n == 1;
    }
    CHECK(all_one);
    CHECK(total == vol.voxels());
  }
}
