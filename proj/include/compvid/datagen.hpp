#pragma once

// Toy "toppling blocks" video world and its on-disk dataset layout.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace compvid {

/// T+1 frames with per-frame entity centers.
///
/// frames: (T+1) x H x W x 3 bytes, row-major HWC per frame, value/255 in [0,1].
/// centers: (T+1) x N x 2 floats, (x, y) normalized by width/height, y pointing down.
struct VideoSequence {
  int num_frames = 0;  // T + 1
  int height = 0;
  int width = 0;
  int num_entities = 0;
  std::vector<std::uint8_t> frames;
  std::vector<float> centers;
  std::map<std::string, std::string> meta;

  int horizon() const { return num_frames - 1; }
  const std::uint8_t* frame(int t) const { return frames.data() + static_cast<std::size_t>(t) * height * width * 3; }
  float center(int t, int n, int axis) const {
    return centers[(static_cast<std::size_t>(t) * num_entities + n) * 2 + axis];
  }

  /// Throws ValidationError when sizes disagree or a center leaves [0,1].
  void validate() const;

  bool operator==(const VideoSequence&) const = default;
};

enum class BlockShape : std::uint8_t { Square = 0, Circle = 1 };

struct GeneratorParams {
  int horizon = 16;
  int canvas = 64;
  double p_unstable = 0.7;   // probability that a tower (n >= 2) topples
  double p_ambiguous = 0.5;  // among unstable towers: balanced-on-a-ball, direction hidden
  int fall_steps = 8;        // frames needed to rotate a falling prefix by 90 degrees
};

/// Resting configuration of one tower plus its (possibly hidden) fall outcome.
struct TowerLayout {
  double block_size = 0;  // pixels
  double base_x = 0;      // pixel x of the bottom block center
  double ground_y = 0;    // pixel y of the ground line
  std::vector<BlockShape> shapes;
  std::vector<int> colors;       // palette indices
  std::vector<double> offsets;   // x offset of block i from block i-1 (offsets[0] == 0), pixels
  int fall_direction = 0;        // -1 left, +1 right; ignored for stable towers
};

/// First unstable level k (blocks k..n-1 fall), or -1 for a stable tower.
///
/// Level k is unstable when |offsets[k]| exceeds half a block width, or when
/// block k rests on a circle.
int instability_level(const TowerLayout& layout);

/// True when the instability is direction-neutral (a centered block on a ball):
/// frame 0 carries no cue about which way the prefix falls.
bool is_ambiguous(const TowerLayout& layout);

/// Layout drawn from the seed. The fall direction of ambiguous towers comes
/// from an independent sub-stream of the same seed.
TowerLayout sample_layout(std::uint64_t seed, int n_blocks, const GeneratorParams& params);

/// Simulates and renders `layout` for params.horizon steps.
VideoSequence render_layout(const TowerLayout& layout, const GeneratorParams& params);

/// Pure function of its arguments.
VideoSequence generate_sequence(std::uint64_t seed, int n_blocks, int horizon, int canvas);
VideoSequence generate_sequence(std::uint64_t seed, int n_blocks, const GeneratorParams& params);

/// Fixed 8-colour palette, RGB in [0,1].
const std::vector<std::array<float, 3>>& block_palette();

void write_sequence(const VideoSequence& seq, const std::filesystem::path& path);
VideoSequence load_sequence(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Dataset

struct SplitSpec {
  std::string name;
  int count = 0;
  std::vector<int> n_blocks{3};  // cycled across the split
};

struct DatasetParams {
  GeneratorParams generator;
  std::uint64_t base_seed = 0;
  std::vector<SplitSpec> splits;
};

struct ManifestSplit {
  std::string name;
  std::uint64_t seed_begin = 0;
  std::vector<int> n_blocks;
  std::vector<std::filesystem::path> paths;  // relative to the manifest directory
  std::vector<std::uint64_t> seeds;
  std::map<int, int> counts_per_entities;
};

struct DatasetManifest {
  std::filesystem::path root;  // directory holding the manifest
  GeneratorParams generator;
  std::vector<ManifestSplit> splits;

  const ManifestSplit& split(const std::string& name) const;
  bool has_split(const std::string& name) const;
  std::filesystem::path resolve(const std::filesystem::path& rel) const { return root / rel; }
  std::size_t total_paths() const;
};

/// Seeds of split i start at base_seed + i * kSplitSeedStride.
inline constexpr std::uint64_t kSplitSeedStride = 1'000'000;

DatasetManifest generate_dataset(const std::filesystem::path& out_dir, const DatasetParams& params);
DatasetManifest generate_dataset(const std::filesystem::path& out_dir, int n_train, int n_val, int n_test,
                                 const GeneratorParams& generator, int n_blocks = 3,
                                 std::uint64_t base_seed = 0);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
/// Parses the manifest and checks that every listed file exists.
DatasetManifest load_manifest(const std::filesystem::path& path);

inline constexpr const char* kManifestName = "manifest.txt";

}  // namespace compvid
