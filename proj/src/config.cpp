#include "compvid/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "compvid/container.hpp"
#include "compvid/errors.hpp"

namespace compvid {

FusionLevel parse_fusion(const std::string& s) {
  if (s == "late") return FusionLevel::Late;
  if (s == "mid") return FusionLevel::Mid;
  if (s == "early") return FusionLevel::Early;
  if (s == "pixel") return FusionLevel::Pixel;
  throw ArgumentError("unknown fusion level '" + s + "' (expected late, mid, early, pixel)");
}

LatentScheme parse_latent_scheme(const std::string& s) {
  if (s == "ours") return LatentScheme::Ours;
  if (s == "no_z") return LatentScheme::NoZ;
  if (s == "fp") return LatentScheme::FixedPrior;
  if (s == "lp") return LatentScheme::LearnedPrior;
  throw ArgumentError("unknown latent scheme '" + s + "' (expected ours, no_z, fp, lp)");
}

Baseline parse_baseline(const std::string& s) {
  if (s == "ours") return Baseline::Ours;
  if (s == "no_factor") return Baseline::NoFactor;
  if (s == "no_edge") return Baseline::NoEdge;
  throw ArgumentError("unknown baseline '" + s + "' (expected ours, no_factor, no_edge)");
}

std::string to_string(FusionLevel f) {
  switch (f) {
    case FusionLevel::Late: return "late";
    case FusionLevel::Mid: return "mid";
    case FusionLevel::Early: return "early";
    case FusionLevel::Pixel: return "pixel";
  }
  return "?";
}

std::string to_string(LatentScheme s) {
  switch (s) {
    case LatentScheme::Ours: return "ours";
    case LatentScheme::NoZ: return "no_z";
    case LatentScheme::FixedPrior: return "fp";
    case LatentScheme::LearnedPrior: return "lp";
  }
  return "?";
}

std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::Ours: return "ours";
    case Baseline::NoFactor: return "no_factor";
    case Baseline::NoEdge: return "no_edge";
  }
  return "?";
}

int fusion_downsample(FusionLevel f) {
  switch (f) {
    case FusionLevel::Mid: return 2;
    case FusionLevel::Early: return 4;
    default: return 1;
  }
}

std::vector<std::pair<int, int>> parse_edge_list(const std::string& spec) {
  std::vector<std::pair<int, int>> edges;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) throw ArgumentError("bad edge '" + item + "' (expected i-j)");
    try {
      edges.emplace_back(std::stoi(item.substr(0, dash)), std::stoi(item.substr(dash + 1)));
    } catch (const std::exception&) {
      throw ArgumentError("bad edge '" + item + "' (expected i-j)");
    }
    if (edges.back().first < 0 || edges.back().second < 0) throw ArgumentError("negative node index in '" + item + "'");
  }
  return edges;
}

void ModelConfig::validate() const {
  auto positive = [](const char* key, double v) {
    if (!(v > 0)) throw ArgumentError(std::string("config: '") + key + "' must be > 0");
  };
  auto non_negative = [](const char* key, double v) {
    if (!(v >= 0)) throw ArgumentError(std::string("config: '") + key + "' must be >= 0");
  };
  non_negative("lambda_loc", lambda_loc);
  non_negative("lambda_kl", lambda_kl);
  non_negative("learning_rate", learning_rate);
  positive("latent_dim", latent_dim);
  positive("appearance_dim", appearance_dim);
  positive("crop_extent", crop_extent);
  positive("patch_size", patch_size);
  positive("feature_channels", feature_channels);
  positive("hidden_dim", hidden_dim);
  positive("num_blocks", num_blocks);
  positive("refine_channels", refine_channels);
  positive("horizon", horizon);
  positive("batch_size", batch_size);
  non_negative("steps", steps);
  positive("checkpoint_every", checkpoint_every);
  non_negative("start_jitter", start_jitter);
  positive("threads", threads);
  positive("n_entities", n_entities);
  if (canvas < 32 || canvas % 4 != 0) throw ArgumentError("config: 'canvas' must be >= 32 and divisible by 4");
  if (graph != "full" && graph != "self") parse_edge_list(graph);
}

std::map<std::string, std::string> ModelConfig::to_key_values() const {
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  return {
      {"lambda_loc", num(lambda_loc)},
      {"lambda_kl", num(lambda_kl)},
      {"learning_rate", num(learning_rate)},
      {"latent_dim", std::to_string(latent_dim)},
      {"appearance_dim", std::to_string(appearance_dim)},
      {"crop_extent", std::to_string(crop_extent)},
      {"patch_size", std::to_string(patch_size)},
      {"feature_channels", std::to_string(feature_channels)},
      {"hidden_dim", std::to_string(hidden_dim)},
      {"num_blocks", std::to_string(num_blocks)},
      {"refine_channels", std::to_string(refine_channels)},
      {"canvas", std::to_string(canvas)},
      {"fusion", to_string(fusion)},
      {"latent_scheme", to_string(latent_scheme)},
      {"baseline", to_string(baseline)},
      {"graph", graph},
      {"n_entities", std::to_string(n_entities)},
      {"horizon", std::to_string(horizon)},
      {"batch_size", std::to_string(batch_size)},
      {"steps", std::to_string(steps)},
      {"checkpoint_every", std::to_string(checkpoint_every)},
      {"start_jitter", std::to_string(start_jitter)},
      {"seed", std::to_string(seed)},
      {"threads", std::to_string(threads)},
  };
}

void ModelConfig::apply(const std::map<std::string, std::string>& kv) {
  using Setter = std::function<void(const std::string&)>;
  auto as_int = [](int& dst) -> Setter { return [&dst](const std::string& v) { dst = std::stoi(v); }; };
  auto as_double = [](double& dst) -> Setter { return [&dst](const std::string& v) { dst = std::stod(v); }; };
  const std::map<std::string, Setter> setters = {
      {"lambda_loc", as_double(lambda_loc)},
      {"lambda_kl", as_double(lambda_kl)},
      {"learning_rate", as_double(learning_rate)},
      {"latent_dim", as_int(latent_dim)},
      {"appearance_dim", as_int(appearance_dim)},
      {"crop_extent", as_int(crop_extent)},
      {"patch_size", as_int(patch_size)},
      {"feature_channels", as_int(feature_channels)},
      {"hidden_dim", as_int(hidden_dim)},
      {"num_blocks", as_int(num_blocks)},
      {"refine_channels", as_int(refine_channels)},
      {"canvas", as_int(canvas)},
      {"fusion", [this](const std::string& v) { fusion = parse_fusion(v); }},
      {"latent_scheme", [this](const std::string& v) { latent_scheme = parse_latent_scheme(v); }},
      {"baseline", [this](const std::string& v) { baseline = parse_baseline(v); }},
      {"graph", [this](const std::string& v) { graph = v; }},
      {"n_entities", as_int(n_entities)},
      {"horizon", as_int(horizon)},
      {"batch_size", as_int(batch_size)},
      {"steps", as_int(steps)},
      {"checkpoint_every", as_int(checkpoint_every)},
      {"start_jitter", as_int(start_jitter)},
      {"seed", [this](const std::string& v) { seed = std::stoull(v); }},
      {"threads", as_int(threads)},
  };
  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ArgumentError("config: unknown key '" + key + "'");
    try {
      it->second(value);
    } catch (const ArgumentError&) {
      throw;
    } catch (const std::exception&) {
      throw ArgumentError("config: bad value '" + value + "' for key '" + key + "'");
    }
  }
}

std::string ModelConfig::serialize() const { return format_key_values(to_key_values()); }

ModelConfig ModelConfig::parse(const std::string& text) { return parse(text, ModelConfig{}); }

ModelConfig ModelConfig::parse(const std::string& text, ModelConfig base) {
  base.apply(parse_key_values(text));
  return base;
}

ModelConfig ModelConfig::load(const std::string& path) { return load(path, ModelConfig{}); }

ModelConfig ModelConfig::load(const std::string& path, ModelConfig base) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), std::move(base));
}

}  // namespace compvid
