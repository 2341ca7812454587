#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace compvid {

/// Level at which warped entity maps are merged with the background.
enum class FusionLevel { Late, Mid, Early, Pixel };
enum class LatentScheme { Ours, NoZ, FixedPrior, LearnedPrior };
enum class Baseline { Ours, NoFactor, NoEdge };

FusionLevel parse_fusion(const std::string& s);
LatentScheme parse_latent_scheme(const std::string& s);
Baseline parse_baseline(const std::string& s);
std::string to_string(FusionLevel f);
std::string to_string(LatentScheme s);
std::string to_string(Baseline b);

/// Fusion grid size relative to the output frame: 1, 1/2, 1/4 (pixel fusion uses 1).
int fusion_downsample(FusionLevel f);

/// Constant background weight in the soft-mask composition.
inline constexpr double kBackgroundMaskWeight = 0.1;

struct ModelConfig {
  // Objective
  double lambda_loc = 100.0;  // weight of the location term
  double lambda_kl = 1e-3;    // weight of the latent KL term
  double learning_rate = 1e-4;

  // Architecture
  int latent_dim = 8;
  int appearance_dim = 32;
  int crop_extent = 20;       // entity window side, pixels at full resolution
  int patch_size = 16;        // decoded entity patch side
  int feature_channels = 16;  // composed feature channels (late/mid/early)
  int hidden_dim = 64;        // interaction block width
  int num_blocks = 4;         // interaction blocks per step
  int refine_channels = 16;
  int canvas = 64;

  // Variants
  FusionLevel fusion = FusionLevel::Late;
  LatentScheme latent_scheme = LatentScheme::Ours;
  Baseline baseline = Baseline::Ours;
  std::string graph = "full";  // "full", "self", or an edge list "0-1,1-2"
  int n_entities = 3;          // fixed entity count of the no_factor head

  // Training loop
  int horizon = 16;
  int batch_size = 4;
  int steps = 2000;
  int checkpoint_every = 500;
  int start_jitter = 0;  // max frames the start of a clip may shift (0 = off)
  std::uint64_t seed = 0;
  int threads = 1;

  /// Throws ArgumentError for out-of-range values.
  void validate() const;

  std::map<std::string, std::string> to_key_values() const;
  /// Applies known keys on top of the current values; unknown keys throw.
  void apply(const std::map<std::string, std::string>& kv);

  std::string serialize() const;
  static ModelConfig parse(const std::string& text);
  static ModelConfig parse(const std::string& text, ModelConfig base);
  static ModelConfig load(const std::string& path);
  static ModelConfig load(const std::string& path, ModelConfig base);

  bool operator==(const ModelConfig&) const = default;
};

/// Adjacency list parsed from the `graph` key, incoming-edge convention:
/// (i, j) means node i pools the message computed from (v_i, v_j).
std::vector<std::pair<int, int>> parse_edge_list(const std::string& spec);

}  // namespace compvid
