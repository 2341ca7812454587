#include <doctest.h>

#include <fstream>
#include <set>

#include "compvid/container.hpp"
#include "compvid/datagen.hpp"
#include "compvid/errors.hpp"
#include "support.hpp"

using namespace compvid;

TEST_CASE("container round trip keeps every field") {
  Container c;
  const std::uint8_t bytes[] = {1, 2, 3, 4, 5, 6};
  const float floats[] = {0.5f, -1.25f};
  c.add_u8("frames", {2, 3}, bytes);
  c.add_f32("centers", {1, 2}, floats);
  c.add_text("meta", "a = 1\n");
  const auto back = Container::deserialize(c.serialize());
  REQUIRE(back.fields().size() == 3);
  CHECK(back.get("frames").shape == std::vector<std::uint64_t>{2, 3});
  CHECK(back.get("frames").bytes == c.get("frames").bytes);
  CHECK(back.get("centers").dtype == DType::F32);
  CHECK(back.get("centers").bytes == c.get("centers").bytes);
  CHECK(std::string(back.get("meta").bytes.begin(), back.get("meta").bytes.end()) == "a = 1\n");
}

TEST_CASE("container rejects bad magic, duplicates and truncation") {
  Container c;
  const float floats[] = {1, 2, 3, 4};
  c.add_f32("centers", {4}, floats);
  CHECK_THROWS_AS(c.add_f32("centers", {4}, floats), ArgumentError);
  auto buf = c.serialize();
  auto bad = buf;
  bad[0] = 'X';
  CHECK_THROWS_AS(Container::deserialize(bad), FormatError);
  for (std::size_t cut : {buf.size() - 1, buf.size() - 9, std::size_t{10}}) {
    std::vector<std::uint8_t> truncated(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(cut));
    CHECK_THROWS_AS(Container::deserialize(truncated), FormatError);
  }
  try {
    Container::deserialize({buf.begin(), buf.end() - 1});
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("centers") != std::string::npos);
  }
}

TEST_CASE("key-value text round trip") {
  const std::map<std::string, std::string> kv{{"b", "2"}, {"a", "x y"}};
  CHECK(parse_key_values(format_key_values(kv)) == kv);
  CHECK(parse_key_values("# comment\n\n k =  v \n").at("k") == "v");
  CHECK_THROWS_AS(parse_key_values("novalue\n"), FormatError);
}

TEST_CASE("generate_sequence shape contract") {
  const auto s = generate_sequence(0, 3, 16, 64);
  CHECK(s.num_frames == 17);
  CHECK(s.height == 64);
  CHECK(s.width == 64);
  CHECK(s.num_entities == 3);
  CHECK(s.frames.size() == 17u * 64 * 64 * 3);
  CHECK(s.centers.size() == 17u * 3 * 2);
  for (float c : s.centers) {
    CHECK(c >= 0.0f);
    CHECK(c <= 1.0f);
  }
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("generate_sequence is deterministic") {
  CHECK(generate_sequence(7, 3, 16, 64) == generate_sequence(7, 3, 16, 64));
  CHECK_FALSE(generate_sequence(7, 3, 16, 64) == generate_sequence(8, 3, 16, 64));
}

TEST_CASE("generate_sequence argument errors") {
  CHECK_THROWS_AS(generate_sequence(0, 0, 16, 64), ArgumentError);
  CHECK_THROWS_AS(generate_sequence(0, 9, 16, 64), ArgumentError);
  CHECK_THROWS_AS(generate_sequence(0, 3, 0, 64), ArgumentError);
  CHECK_THROWS_AS(generate_sequence(0, 3, 16, 16), ArgumentError);
}

TEST_CASE("stable towers keep their centers") {
  GeneratorParams params;
  int stable = 0;
  for (std::uint64_t seed = 0; seed < 60 && stable < 5; ++seed) {
    const auto layout = sample_layout(seed, 3, params);
    if (instability_level(layout) >= 0) continue;
    ++stable;
    const auto s = render_layout(layout, params);
    for (int t = 0; t < s.num_frames; ++t) {
      for (int n = 0; n < s.num_entities; ++n) {
        CHECK(s.center(t, n, 0) == s.center(0, n, 0));
        CHECK(s.center(t, n, 1) == s.center(0, n, 1));
      }
    }
  }
  CHECK(stable > 0);

  // A perfectly aligned square tower is stable.
  auto layout = sample_layout(3, 4, params);
  std::fill(layout.offsets.begin(), layout.offsets.end(), 0.0);
  std::fill(layout.shapes.begin(), layout.shapes.end(), BlockShape::Square);
  CHECK(instability_level(layout) == -1);
  const auto s = render_layout(layout, params);
  for (int t = 1; t < s.num_frames; ++t) {
    for (int n = 0; n < 4; ++n) CHECK(s.center(t, n, 1) == s.center(0, n, 1));
  }
}

TEST_CASE("unstable towers fall and the base stays put") {
  GeneratorParams params;
  int seen = 0;
  for (std::uint64_t seed = 0; seed < 100 && seen < 5; ++seed) {
    const auto layout = sample_layout(seed, 3, params);
    const int k = instability_level(layout);
    if (k < 0) continue;
    ++seen;
    const auto s = render_layout(layout, params);
    const int T = s.horizon();
    for (int n = 0; n < k; ++n) CHECK(s.center(T, n, 0) == s.center(0, n, 0));
    // The top block drops after the fall.
    CHECK(s.center(T, 2, 1) > s.center(0, 2, 1));
  }
  CHECK(seen > 0);
}

TEST_CASE("ambiguous towers: frame 0 hides the direction and both directions are balanced") {
  GeneratorParams params;
  int left = 0, right = 0, checked = 0;
  for (std::uint64_t seed = 0; left + right < 240; ++seed) {
    REQUIRE(seed < 5000);
    const auto layout = sample_layout(seed, 3, params);
    if (!is_ambiguous(layout)) continue;
    (layout.fall_direction > 0 ? right : left) += 1;
    if (checked < 10) {
      auto mirrored = layout;
      mirrored.fall_direction = -layout.fall_direction;
      const auto a = render_layout(layout, params), b = render_layout(mirrored, params);
      const std::size_t frame_bytes = static_cast<std::size_t>(a.height) * a.width * 3;
      CHECK(std::equal(a.frames.begin(), a.frames.begin() + static_cast<std::ptrdiff_t>(frame_bytes), b.frames.begin()));
      CHECK_FALSE(a.frames == b.frames);
      ++checked;
    }
  }
  const double freq = static_cast<double>(right) / (left + right);
  CHECK(freq >= 0.4);
  CHECK(freq <= 0.6);
}

TEST_CASE("sequence file round trip and errors") {
  testutil::TempDir dir("seq");
  const auto s = generate_sequence(11, 4, 8, 48);
  const auto path = dir.path() / "s.cvps";
  write_sequence(s, path);
  CHECK(load_sequence(path) == s);

  // Truncated file.
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 100);
  CHECK_THROWS_AS(load_sequence(path), FormatError);

  // Centers outside [0,1].
  auto bad = s;
  bad.centers[3] = 1.5f;
  Container c;
  c.add_u8("frames", {static_cast<std::uint64_t>(bad.num_frames), 48, 48, 3}, bad.frames.data());
  c.add_f32("centers", {static_cast<std::uint64_t>(bad.num_frames), 4, 2}, bad.centers.data());
  c.add_text("meta", format_key_values(bad.meta));
  c.write(dir.path() / "bad.cvps");
  CHECK_THROWS_AS(load_sequence(dir.path() / "bad.cvps"), ValidationError);

  CHECK_THROWS_AS(load_sequence(dir.path() / "missing.cvps"), IoError);
}

TEST_CASE("generate_dataset counts, disjoint seeds and determinism") {
  testutil::TempDir a("ds_a"), b("ds_b");
  GeneratorParams g;
  g.horizon = 4;
  const auto m = generate_dataset(a.path(), 8, 2, 2, g, 3, 0);
  CHECK(m.total_paths() == 12);
  std::set<std::uint64_t> seeds;
  for (const auto& split : m.splits) {
    for (auto s : split.seeds) CHECK(seeds.insert(s).second);
  }
  const auto loaded = load_manifest(a.path() / kManifestName);
  CHECK(loaded.split("train").paths.size() == 8);
  CHECK(loaded.split("test").counts_per_entities.at(3) == 2);
  for (const auto& rel : loaded.split("val").paths) CHECK_NOTHROW(load_sequence(loaded.resolve(rel)).validate());

  generate_dataset(b.path(), 8, 2, 2, g, 3, 0);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  CHECK(slurp(a.path() / kManifestName) == slurp(b.path() / kManifestName));
  for (const auto& rel : m.split("train").paths) CHECK(slurp(a.path() / rel) == slurp(b.path() / rel));
}

TEST_CASE("test split with more blocks records per-split entity counts") {
  testutil::TempDir dir("ds_var");
  DatasetParams p;
  p.generator.horizon = 4;
  p.splits = {{"train", 3, {3}}, {"test", 6, {4, 5, 6}}};
  generate_dataset(dir.path(), p);
  const auto m = load_manifest(dir.path() / kManifestName);
  CHECK(m.split("train").counts_per_entities == std::map<int, int>{{3, 3}});
  CHECK(m.split("test").counts_per_entities == std::map<int, int>{{4, 2}, {5, 2}, {6, 2}});
  for (const auto& rel : m.split("test").paths) {
    const auto s = load_sequence(m.resolve(rel));
    CHECK(s.num_entities >= 4);
  }
}

TEST_CASE("manifest loading reports missing files") {
  testutil::TempDir dir("ds_missing");
  GeneratorParams g;
  g.horizon = 2;
  const auto m = generate_dataset(dir.path(), 2, 0, 0, g);
  std::filesystem::remove(dir.path() / m.split("train").paths[0]);
  CHECK_THROWS_AS(load_manifest(dir.path() / kManifestName), IoError);
}
