#include "compvid/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "compvid/container.hpp"
#include "compvid/errors.hpp"

namespace compvid {

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct Pose {
  double x, y, angle;
};

// Rigid placement of every block at step t.
std::vector<Pose> simulate(const TowerLayout& layout, const GeneratorParams& params, int t) {
  const auto n = static_cast<int>(layout.shapes.size());
  const double s = layout.block_size;
  std::vector<Pose> poses(n);
  double x = layout.base_x;
  for (int i = 0; i < n; ++i) {
    if (i > 0) x += layout.offsets[i];
    poses[i] = {x, layout.ground_y - (i + 0.5) * s, 0.0};
  }
  const int k = instability_level(layout);
  if (k < 0 || t == 0) return poses;

  int dir = is_ambiguous(layout) ? layout.fall_direction : (layout.offsets[k] > 0 ? 1 : -1);
  if (dir == 0) dir = 1;
  const auto& support = poses[k - 1];
  const double pivot_x = support.x + (layout.shapes[k - 1] == BlockShape::Circle ? 0.0 : dir * s / 2);
  const double pivot_y = support.y - s / 2;
  const double progress = std::min(1.0, static_cast<double>(t) / std::max(1, params.fall_steps));
  // Image y points down, so a positive angle turns clockwise on screen (falls right).
  const double theta = dir * progress * std::numbers::pi / 2;
  const double c = std::cos(theta), sn = std::sin(theta);
  for (int i = k; i < n; ++i) {
    const double dx = poses[i].x - pivot_x, dy = poses[i].y - pivot_y;
    poses[i] = {pivot_x + c * dx - sn * dy, pivot_y + sn * dx + c * dy, theta};
  }
  return poses;
}

void paint_block(std::vector<float>& img, int canvas, const Pose& pose, double side, BlockShape shape,
                 const std::array<float, 3>& color) {
  constexpr int kSub = 4;
  const double half = side / 2;
  const double reach = half * std::numbers::sqrt2 + 1;
  const int x_lo = std::max(0, static_cast<int>(std::floor(pose.x - reach)));
  const int x_hi = std::min(canvas - 1, static_cast<int>(std::ceil(pose.x + reach)));
  const int y_lo = std::max(0, static_cast<int>(std::floor(pose.y - reach)));
  const int y_hi = std::min(canvas - 1, static_cast<int>(std::ceil(pose.y + reach)));
  const double c = std::cos(pose.angle), s = std::sin(pose.angle);
  for (int py = y_lo; py <= y_hi; ++py) {
    for (int px = x_lo; px <= x_hi; ++px) {
      int hits = 0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double dx = px + (sx + 0.5) / kSub - pose.x;
          const double dy = py + (sy + 0.5) / kSub - pose.y;
          bool inside;
          if (shape == BlockShape::Circle) {
            inside = dx * dx + dy * dy <= half * half;
          } else {
            // Rotate into the block frame.
            const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
            inside = std::abs(lx) <= half && std::abs(ly) <= half;
          }
          hits += inside;
        }
      }
      if (hits == 0) continue;
      const float alpha = static_cast<float>(hits) / (kSub * kSub);
      float* p = img.data() + (static_cast<std::size_t>(py) * canvas + px) * 3;
      for (int ch = 0; ch < 3; ++ch) p[ch] = p[ch] * (1 - alpha) + color[ch] * alpha;
    }
  }
}

void check_generator_args(int n_blocks, int horizon, int canvas) {
  if (n_blocks < 1 || n_blocks > 8) throw ArgumentError("n_blocks must be in [1, 8], got " + std::to_string(n_blocks));
  if (horizon < 1) throw ArgumentError("horizon must be >= 1, got " + std::to_string(horizon));
  if (canvas < 32) throw ArgumentError("canvas must be >= 32, got " + std::to_string(canvas));
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

}  // namespace

void VideoSequence::validate() const {
  if (num_frames < 1 || height < 1 || width < 1 || num_entities < 1) {
    throw ValidationError("sequence has a non-positive dimension");
  }
  if (frames.size() != static_cast<std::size_t>(num_frames) * height * width * 3) {
    throw ValidationError("frames size does not match (T+1) x H x W x 3");
  }
  if (centers.size() != static_cast<std::size_t>(num_frames) * num_entities * 2) {
    throw ValidationError("centers count along time does not match frames");
  }
  for (float c : centers) {
    if (!(c >= 0.0f && c <= 1.0f)) throw ValidationError("center coordinate outside [0,1]");
  }
}

const std::vector<std::array<float, 3>>& block_palette() {
  static const std::vector<std::array<float, 3>> palette = {
      {0.85f, 0.15f, 0.15f}, {0.15f, 0.65f, 0.20f}, {0.15f, 0.30f, 0.85f}, {0.95f, 0.80f, 0.10f},
      {0.80f, 0.20f, 0.70f}, {0.10f, 0.75f, 0.80f}, {0.95f, 0.50f, 0.10f}, {0.45f, 0.20f, 0.65f},
  };
  return palette;
}

int instability_level(const TowerLayout& layout) {
  const auto n = static_cast<int>(layout.shapes.size());
  for (int k = 1; k < n; ++k) {
    if (std::abs(layout.offsets[k]) > layout.block_size / 2 || layout.shapes[k - 1] == BlockShape::Circle) {
      return k;
    }
  }
  return -1;
}

bool is_ambiguous(const TowerLayout& layout) {
  const int k = instability_level(layout);
  return k > 0 && layout.shapes[k - 1] == BlockShape::Circle && std::abs(layout.offsets[k]) <= layout.block_size / 2;
}

TowerLayout sample_layout(std::uint64_t seed, int n_blocks, const GeneratorParams& params) {
  check_generator_args(n_blocks, params.horizon, params.canvas);
  std::mt19937_64 rng(seed);
  std::mt19937_64 direction_rng(seed ^ 0x9E3779B97F4A7C15ull);
  const double canvas = params.canvas;

  TowerLayout layout;
  layout.block_size = std::clamp(canvas / (n_blocks + 3), canvas / 12, canvas / 6);
  layout.ground_y = canvas * 0.92;
  layout.base_x = canvas * (0.4 + 0.2 * uniform01(rng));

  std::vector<int> palette(block_palette().size());
  for (std::size_t i = 0; i < palette.size(); ++i) palette[i] = static_cast<int>(i);
  for (std::size_t i = palette.size() - 1; i > 0; --i) {
    std::swap(palette[i], palette[static_cast<std::size_t>(uniform01(rng) * (i + 1))]);
  }
  layout.colors.assign(palette.begin(), palette.begin() + n_blocks);

  layout.shapes.assign(n_blocks, BlockShape::Square);
  if (uniform01(rng) < 0.3) layout.shapes.back() = BlockShape::Circle;

  layout.offsets.assign(n_blocks, 0.0);
  for (int i = 1; i < n_blocks; ++i) layout.offsets[i] = (uniform01(rng) * 0.6 - 0.3) * layout.block_size;

  const double draw_unstable = uniform01(rng);
  const double draw_level = uniform01(rng);
  const double draw_kind = uniform01(rng);
  const double draw_sign = uniform01(rng);
  const double draw_mag = uniform01(rng);
  if (n_blocks >= 2 && draw_unstable < params.p_unstable) {
    const int k = 1 + std::min(n_blocks - 2, static_cast<int>(draw_level * (n_blocks - 1)));
    if (draw_kind < params.p_ambiguous) {
      layout.shapes[k - 1] = BlockShape::Circle;
      layout.offsets[k] = 0.0;
      layout.fall_direction = (direction_rng() & 1) ? 1 : -1;
    } else {
      const int sign = draw_sign < 0.5 ? -1 : 1;
      layout.offsets[k] = sign * (0.6 + 0.3 * draw_mag) * layout.block_size;
      layout.fall_direction = sign;
    }
  }
  return layout;
}

VideoSequence render_layout(const TowerLayout& layout, const GeneratorParams& params) {
  const int n = static_cast<int>(layout.shapes.size());
  check_generator_args(n, params.horizon, params.canvas);
  const int canvas = params.canvas;
  VideoSequence seq;
  seq.num_frames = params.horizon + 1;
  seq.height = seq.width = canvas;
  seq.num_entities = n;
  seq.frames.resize(static_cast<std::size_t>(seq.num_frames) * canvas * canvas * 3);
  seq.centers.resize(static_cast<std::size_t>(seq.num_frames) * n * 2);

  std::vector<float> img(static_cast<std::size_t>(canvas) * canvas * 3);
  for (int t = 0; t < seq.num_frames; ++t) {
    for (int y = 0; y < canvas; ++y) {
      const bool ground = y + 0.5 > layout.ground_y;
      for (int x = 0; x < canvas; ++x) {
        float* p = img.data() + (static_cast<std::size_t>(y) * canvas + x) * 3;
        p[0] = ground ? 0.72f : 0.93f;
        p[1] = ground ? 0.70f : 0.93f;
        p[2] = ground ? 0.66f : 0.90f;
      }
    }
    const auto poses = simulate(layout, params, t);
    for (int i = 0; i < n; ++i) {
      paint_block(img, canvas, poses[i], layout.block_size, layout.shapes[i], block_palette()[layout.colors[i]]);
      const std::size_t c = (static_cast<std::size_t>(t) * n + i) * 2;
      seq.centers[c] = static_cast<float>(std::clamp(poses[i].x / canvas, 0.0, 1.0));
      seq.centers[c + 1] = static_cast<float>(std::clamp(poses[i].y / canvas, 0.0, 1.0));
    }
    std::uint8_t* dst = seq.frames.data() + static_cast<std::size_t>(t) * canvas * canvas * 3;
    for (std::size_t i = 0; i < img.size(); ++i) {
      dst[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img[i], 0.0f, 1.0f) * 255.0f));
    }
  }

  const int k = instability_level(layout);
  seq.meta["n_entities"] = std::to_string(n);
  seq.meta["horizon"] = std::to_string(params.horizon);
  seq.meta["canvas"] = std::to_string(canvas);
  seq.meta["unstable_level"] = std::to_string(k);
  seq.meta["ambiguous"] = is_ambiguous(layout) ? "1" : "0";
  int dir = 0;
  if (k >= 0) dir = is_ambiguous(layout) ? layout.fall_direction : (layout.offsets[k] > 0 ? 1 : -1);
  seq.meta["fall_direction"] = std::to_string(dir);
  return seq;
}

VideoSequence generate_sequence(std::uint64_t seed, int n_blocks, const GeneratorParams& params) {
  auto seq = render_layout(sample_layout(seed, n_blocks, params), params);
  seq.meta["seed"] = std::to_string(seed);
  return seq;
}

VideoSequence generate_sequence(std::uint64_t seed, int n_blocks, int horizon, int canvas) {
  GeneratorParams params;
  params.horizon = horizon;
  params.canvas = canvas;
  return generate_sequence(seed, n_blocks, params);
}

void write_sequence(const VideoSequence& seq, const std::filesystem::path& path) {
  seq.validate();
  Container c;
  const auto T1 = static_cast<std::uint64_t>(seq.num_frames);
  c.add_u8("frames", {T1, static_cast<std::uint64_t>(seq.height), static_cast<std::uint64_t>(seq.width), 3},
           seq.frames.data());
  c.add_f32("centers", {T1, static_cast<std::uint64_t>(seq.num_entities), 2}, seq.centers.data());
  c.add_text("meta", format_key_values(seq.meta));
  c.write(path);
}

VideoSequence load_sequence(const std::filesystem::path& path) {
  const auto c = Container::read(path);
  auto field = [&](const char* name, DType dtype, std::size_t ndim) -> const ArrayField& {
    if (!c.has(name)) throw FormatError(path.string() + ": missing field '" + name + "'");
    const auto& f = c.get(name);
    if (f.dtype != dtype || f.shape.size() != ndim) {
      throw FormatError(path.string() + ": field '" + name + "' has the wrong dtype or rank");
    }
    return f;
  };
  const auto& frames = field("frames", DType::U8, 4);
  const auto& centers = field("centers", DType::F32, 3);
  const auto& meta = field("meta", DType::Text, 1);
  if (frames.shape[3] != 3) throw FormatError(path.string() + ": field 'frames' must have 3 channels");
  if (centers.shape[0] != frames.shape[0]) {
    throw FormatError(path.string() + ": field 'centers' time length differs from 'frames'");
  }
  if (centers.shape[2] != 2) throw FormatError(path.string() + ": field 'centers' last dim must be 2");

  VideoSequence seq;
  seq.num_frames = static_cast<int>(frames.shape[0]);
  seq.height = static_cast<int>(frames.shape[1]);
  seq.width = static_cast<int>(frames.shape[2]);
  seq.num_entities = static_cast<int>(centers.shape[1]);
  seq.frames = frames.bytes;
  seq.centers.resize(centers.numel());
  std::memcpy(seq.centers.data(), centers.bytes.data(), centers.bytes.size());
  try {
    seq.meta = parse_key_values(std::string(meta.bytes.begin(), meta.bytes.end()));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": field 'meta': " + e.what());
  }
  try {
    seq.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return seq;
}

// ---------------------------------------------------------------------------

const ManifestSplit& DatasetManifest::split(const std::string& name) const {
  for (const auto& s : splits) {
    if (s.name == name) return s;
  }
  throw ArgumentError("manifest has no split '" + name + "'");
}

bool DatasetManifest::has_split(const std::string& name) const {
  return std::any_of(splits.begin(), splits.end(), [&](const ManifestSplit& s) { return s.name == name; });
}

std::size_t DatasetManifest::total_paths() const {
  std::size_t n = 0;
  for (const auto& s : splits) n += s.paths.size();
  return n;
}

DatasetManifest generate_dataset(const std::filesystem::path& out_dir, const DatasetParams& params) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.generator = params.generator;
  for (std::size_t si = 0; si < params.splits.size(); ++si) {
    const auto& spec = params.splits[si];
    if (spec.n_blocks.empty()) throw ArgumentError("split '" + spec.name + "' has no block counts");
    ManifestSplit split;
    split.name = spec.name;
    split.seed_begin = params.base_seed + si * kSplitSeedStride;
    split.n_blocks = spec.n_blocks;
    std::filesystem::create_directories(out_dir / spec.name, ec);
    if (ec) throw IoError("cannot create '" + (out_dir / spec.name).string() + "': " + ec.message());
    for (int i = 0; i < spec.count; ++i) {
      const std::uint64_t seed = split.seed_begin + static_cast<std::uint64_t>(i);
      const int n = spec.n_blocks[static_cast<std::size_t>(i) % spec.n_blocks.size()];
      std::ostringstream name;
      name << "seq_" << std::setw(5) << std::setfill('0') << i << "_n" << n << ".cvps";
      const auto rel = std::filesystem::path(spec.name) / name.str();
      write_sequence(generate_sequence(seed, n, params.generator), out_dir / rel);
      split.paths.push_back(rel);
      split.seeds.push_back(seed);
      split.counts_per_entities[n]++;
    }
    manifest.splits.push_back(std::move(split));
  }
  write_manifest(manifest, out_dir / kManifestName);
  return manifest;
}

DatasetManifest generate_dataset(const std::filesystem::path& out_dir, int n_train, int n_val, int n_test,
                                 const GeneratorParams& generator, int n_blocks, std::uint64_t base_seed) {
  DatasetParams p;
  p.generator = generator;
  p.base_seed = base_seed;
  p.splits = {{"train", n_train, {n_blocks}}, {"val", n_val, {n_blocks}}, {"test", n_test, {n_blocks}}};
  return generate_dataset(out_dir, p);
}

// Manifest layout:
//   # compvid dataset manifest v1
//   generator horizon=16 canvas=64 p_unstable=0.7 p_ambiguous=0.5 fall_steps=8
//   [train] seed_begin=0 n_blocks=3 count=8
//   train/seq_00000_n3.cvps
//   ...
// Paths are relative to the manifest's directory; seeds are seed_begin + line index.
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << "# compvid dataset manifest v1\n";
  os << std::setprecision(17);
  os << "generator horizon=" << m.generator.horizon << " canvas=" << m.generator.canvas
     << " p_unstable=" << m.generator.p_unstable << " p_ambiguous=" << m.generator.p_ambiguous
     << " fall_steps=" << m.generator.fall_steps << "\n";
  for (const auto& s : m.splits) {
    os << "[" << s.name << "] seed_begin=" << s.seed_begin << " n_blocks=" << join_ints(s.n_blocks)
       << " count=" << s.paths.size() << "\n";
    for (const auto& p : s.paths) os << p.generic_string() << "\n";
  }
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest '" + path.string() + "'");
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  int lineno = 0;
  bool have_generator = false;
  auto fail = [&](const std::string& what) {
    throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + what);
  };
  auto parse_attrs = [&](std::istringstream& ls) {
    std::map<std::string, std::string> attrs;
    std::string tok;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) fail("expected key=value, got '" + tok + "'");
      attrs[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return attrs;
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    try {
      if (line.rfind("generator", 0) == 0) {
        std::istringstream ls(line.substr(9));
        auto a = parse_attrs(ls);
        m.generator.horizon = std::stoi(a.at("horizon"));
        m.generator.canvas = std::stoi(a.at("canvas"));
        m.generator.p_unstable = std::stod(a.at("p_unstable"));
        m.generator.p_ambiguous = std::stod(a.at("p_ambiguous"));
        m.generator.fall_steps = std::stoi(a.at("fall_steps"));
        have_generator = true;
      } else if (line[0] == '[') {
        const auto close = line.find(']');
        if (close == std::string::npos) fail("unterminated split header");
        ManifestSplit s;
        s.name = line.substr(1, close - 1);
        std::istringstream ls(line.substr(close + 1));
        auto a = parse_attrs(ls);
        s.seed_begin = std::stoull(a.at("seed_begin"));
        s.n_blocks = parse_ints(a.at("n_blocks"));
        if (s.n_blocks.empty()) fail("split '" + s.name + "' lists no block counts");
        m.splits.push_back(std::move(s));
      } else {
        if (m.splits.empty()) fail("path listed before any split header");
        auto& s = m.splits.back();
        const auto i = s.paths.size();
        const int n = s.n_blocks[i % s.n_blocks.size()];
        s.paths.emplace_back(line);
        s.seeds.push_back(s.seed_begin + i);
        s.counts_per_entities[n]++;
        if (!std::filesystem::exists(m.root / s.paths.back())) {
          throw IoError(path.string() + ": listed file '" + line + "' does not exist");
        }
      }
    } catch (const std::out_of_range&) {
      fail("missing attribute");
    } catch (const std::invalid_argument&) {
      fail("malformed number");
    }
  }
  if (!have_generator) throw FormatError(path.string() + ": missing 'generator' line");
  return m;
}

}  // namespace compvid
