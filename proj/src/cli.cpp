#include "compvid/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "compvid/config.hpp"
#include "compvid/container.hpp"
#include "compvid/datagen.hpp"
#include "compvid/errors.hpp"
#include "compvid/evalkit.hpp"
#include "compvid/imageio.hpp"
#include "compvid/tensors.hpp"
#include "compvid/training.hpp"

namespace fs = std::filesystem;

namespace compvid {

namespace {

// Raised for problems the user can fix by changing flags or paths.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw UsageError(what + " '" + p.string() + "' does not exist");
}

fs::path manifest_path(const fs::path& data) {
  const auto p = fs::is_directory(data) ? data / kManifestName : data;
  require_file(p, "dataset manifest");
  return p;
}

fs::path run_dir_of(const fs::path& ckpt) {
  const auto parent = ckpt.parent_path();
  return parent.filename() == "checkpoints" ? parent.parent_path() : parent;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << text;
}

Checkpoint open_checkpoint(const fs::path& path) {
  require_file(path, "checkpoint");
  return load_checkpoint(path);
}

// --- generate --------------------------------------------------------------

struct GenerateArgs {
  std::string out;
  int train = 8, val = 2, test = 2;
  std::vector<int> blocks{3};
  std::vector<int> test_blocks;
  GeneratorParams generator;
  std::uint64_t seed = 0;
};

int command_generate(const GenerateArgs& a) {
  DatasetParams params;
  params.generator = a.generator;
  params.base_seed = a.seed;
  params.splits = {{"train", a.train, a.blocks},
                   {"val", a.val, a.blocks},
                   {"test", a.test, a.test_blocks.empty() ? a.blocks : a.test_blocks}};
  const auto manifest = generate_dataset(a.out, params);
  std::cout << (manifest.root / kManifestName).string() << "\n";
  return kExitOk;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string data, out, config;
  std::map<std::string, std::string> overrides;
  bool quiet = false;
};

int command_train(const TrainArgs& a) {
  ModelConfig config;
  if (!a.config.empty()) {
    require_file(a.config, "config file");
    config = ModelConfig::load(a.config);
  }
  try {
    config.apply(a.overrides);
    config.validate();
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
  const auto manifest = load_manifest(manifest_path(a.data));
  const fs::path run(a.out);
  for (const char* sub : {"checkpoints", "logs", "figures", "samples"}) fs::create_directories(run / sub);

  TrainOptions options;
  const auto every = std::max(1, config.steps / 20);
  if (!a.quiet) {
    options.on_step = [every, total = config.steps](std::int64_t s, const LossReport& r) {
      if (s == 1 || s % every == 0 || s == total) {
        std::cerr << "step " << s << "/" << total << "  total " << r.total << "  frame " << r.l_pred_frame
                  << "  loc " << r.l_pred_loc << "  dec " << r.l_dec << "  kl " << r.l_enc << "\n";
      }
    };
  }
  const auto final_ckpt = train(config, manifest, run, options);
  std::cout << final_ckpt.string() << "\n";
  return kExitOk;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, data, out, split = "test", metric = "l1";
  std::int64_t k = 100, horizon = 0;
  std::uint64_t seed = 0;
  int threads = 1;
  bool no_frames = false, nn = false;
};

int command_eval(const EvalArgs& a) {
  if (a.k < 1) throw UsageError("--k must be at least 1");
  auto ck = open_checkpoint(a.ckpt);
  const auto manifest = load_manifest(manifest_path(a.data));
  if (!manifest.has_split(a.split)) throw UsageError("dataset has no split '" + a.split + "'");
  torch::set_num_threads(a.threads);
  const fs::path out = a.out.empty() ? run_dir_of(a.ckpt) / "logs" / ("eval_" + a.split) : fs::path(a.out);
  fs::create_directories(out);
  write_text(out / "eval_config.txt",
             format_key_values({{"ckpt", fs::absolute(a.ckpt).string()},
                                {"data", fs::absolute(a.data).string()},
                                {"split", a.split},
                                {"k", std::to_string(a.k)},
                                {"horizon", std::to_string(a.horizon)},
                                {"seed", std::to_string(a.seed)},
                                {"metric", a.metric},
                                {"frames", a.no_frames ? "false" : "true"}}) +
                 ck.config.serialize());

  BestOfKOptions options;
  options.horizon = a.horizon;
  options.frames = !a.no_frames;
  options.metric = a.metric;
  NoiseStream noise(a.seed);
  std::vector<SequenceReport> reports;
  std::ofstream nn_csv;
  if (a.nn) {
    nn_csv.open(out / "nn_baseline.csv", std::ios::trunc);
    nn_csv << std::setprecision(9) << "sequence,retrieved,distance,frame_error,loc_error\n";
  }
  for (const auto& rel : manifest.split(a.split).paths) {
    const auto seq = load_sequence(manifest.resolve(rel));
    SequenceReport rep;
    rep.name = fs::path(rel).stem().string();
    rep.num_entities = seq.num_entities;
    try {
      rep.result = best_of_k(ck.model, seq, a.k, noise, options);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " while evaluating " + rel.string());
    }
    if (a.nn) {
      const auto gt = to_tensors(seq);
      const auto nn = nn_baseline(ck.model->frontend, gt.frames[0], manifest);
      const auto ret = to_tensors(nn.sequence);
      const auto T = std::min({rep.result.horizon, ret.frames.size(0) - 1});
      const double fe = frame_error(ret.frames.narrow(0, 1, T), gt.frames.narrow(0, 1, T)).mean().item<double>();
      double le = std::nan("");
      if (ret.centers.size(1) == gt.centers.size(1)) {
        le = location_error(ret.centers.narrow(0, 1, T), gt.centers.narrow(0, 1, T)).mean().item<double>();
      }
      nn_csv << rep.name << "," << nn.path.string() << "," << nn.distance << "," << fe << "," << le << "\n";
    }
    reports.push_back(std::move(rep));
  }
  write_reports(reports, out);
  std::cout << (out / "summary.txt").string() << "\n";
  return kExitOk;
}

// --- sample ----------------------------------------------------------------

struct SampleArgs {
  std::string ckpt, seq, out;
  std::int64_t k = 5, horizon = 0;
  std::uint64_t seed = 0;
  int scale = 4;
};

Image trajectory_overlay(const torch::Tensor& first_frame, const torch::Tensor& centers,
                         const torch::Tensor& gt_centers, int scale) {
  // centers [K,T,N,2], gt_centers [T+1,N,2]
  auto img = upscale(image_from_tensor(first_frame), scale);
  const double W = img.width, H = img.height;
  const auto K = centers.size(0), T = centers.size(1), N = centers.size(2);
  auto c = centers.to(torch::kFloat64);
  auto g = gt_centers.to(torch::kFloat64);
  for (std::int64_t k = 0; k < K; ++k) {
    const auto color = series_color(static_cast<std::size_t>(k));
    for (std::int64_t n = 0; n < N; ++n) {
      double px = g[0][n][0].item<double>() * W, py = g[0][n][1].item<double>() * H;
      for (std::int64_t t = 0; t < T; ++t) {
        const double x = c[k][t][n][0].item<double>() * W, y = c[k][t][n][1].item<double>() * H;
        draw_line(img, px, py, x, y, color);
        px = x, py = y;
      }
      draw_dot(img, px, py, 2, color);
    }
  }
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t t = 0; t + 1 < g.size(0); ++t) {
      draw_line(img, g[t][n][0].item<double>() * W, g[t][n][1].item<double>() * H, g[t + 1][n][0].item<double>() * W,
                g[t + 1][n][1].item<double>() * H, {0, 0, 0});
    }
  }
  return img;
}

int command_sample(const SampleArgs& a) {
  if (a.k < 1) throw UsageError("--k must be at least 1");
  auto ck = open_checkpoint(a.ckpt);
  require_file(a.seq, "sequence");
  const auto seq = load_sequence(a.seq);
  const fs::path out = a.out.empty() ? run_dir_of(a.ckpt) / "samples" / fs::path(a.seq).stem() : fs::path(a.out);
  fs::create_directories(out);
  write_text(out / "sample_config.txt", format_key_values({{"ckpt", fs::absolute(a.ckpt).string()},
                                                           {"seq", fs::absolute(a.seq).string()},
                                                           {"k", std::to_string(a.k)},
                                                           {"horizon", std::to_string(a.horizon)},
                                                           {"seed", std::to_string(a.seed)}}) +
                                            ck.config.serialize());

  torch::NoGradGuard no_grad;
  auto& model = ck.model;
  const auto gt = to_tensors(seq);
  std::int64_t T = a.horizon > 0 ? a.horizon : ck.config.horizon;
  T = std::min<std::int64_t>(T, seq.num_frames - 1);
  if (T < 1) throw UsageError("sequence has no future frames");
  NoiseStream noise(a.seed);
  const auto f0 = gt.frames[0].unsqueeze(0).expand({a.k, -1, -1, -1}).contiguous();
  const auto c0 = gt.centers[0].unsqueeze(0).expand({a.k, -1, -1}).contiguous();
  // One sample at a time keeps sample i identical to eval's sample i.
  std::vector<Rollout> rolls;
  for (std::int64_t i = 0; i < a.k; ++i) {
    rolls.push_back(model->sample_rollout(f0.narrow(0, i, 1), c0.narrow(0, i, 1), T, noise, true));
    if (!torch::isfinite(rolls.back().frames).all().item<bool>()) {
      throw NumericalError("non-finite frames in sample " + std::to_string(i));
    }
  }

  std::vector<Image> gt_row;
  for (std::int64_t t = 0; t <= T; ++t) gt_row.push_back(image_from_tensor(gt.frames[t]));
  write_png(upscale(tile(gt_row, static_cast<int>(T + 1)), 2), out / "ground_truth.png");

  std::vector<torch::Tensor> centers;
  for (std::int64_t i = 0; i < a.k; ++i) {
    const auto& r = rolls[static_cast<std::size_t>(i)];
    std::vector<Image> row{image_from_tensor(gt.frames[0])};
    for (std::int64_t t = 0; t < T; ++t) row.push_back(image_from_tensor(r.frames[0][t]));
    std::ostringstream name;
    name << "sample_" << std::setw(3) << std::setfill('0') << i;
    write_png(upscale(tile(row, static_cast<int>(T + 1)), 2), out / (name.str() + ".png"));
    write_png(trajectory_overlay(gt.frames[0], r.centers, gt.centers.narrow(0, 0, T + 1), a.scale),
              out / (name.str() + "_trajectory.png"));
    centers.push_back(r.centers);
    if (r.masks.defined()) {
      // masks [1,T,N,1,h,w] (factorized) or [1,T,1,1,h,w]
      const auto m = r.masks[0];
      std::vector<Image> tiles;
      for (std::int64_t t = 0; t < T; ++t) {
        for (std::int64_t n = 0; n < m.size(1); ++n) tiles.push_back(image_from_tensor(m[t][n]));
      }
      write_png(upscale(tile(tiles, static_cast<int>(m.size(1))), 2), out / (name.str() + "_masks.png"));
    }
  }
  write_png(trajectory_overlay(gt.frames[0], torch::cat(centers, 0), gt.centers.narrow(0, 0, T + 1), a.scale),
            out / "trajectories.png");
  std::cout << out.string() << "\n";
  return kExitOk;
}

// --- plot ------------------------------------------------------------------

struct PlotArgs {
  std::string metrics, out;
};

int command_plot(const PlotArgs& a) {
  require_file(a.metrics, "metrics file");
  std::ifstream is(a.metrics);
  std::string line;
  if (!std::getline(is, line)) throw UsageError("metrics file '" + a.metrics + "' is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) header.push_back(cell);
  }
  if (header.size() < 2) throw UsageError("metrics file needs an x column and at least one metric");
  std::vector<std::vector<double>> cols(header.size());
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::size_t i = 0;
    for (std::string cell; std::getline(ss, cell, ',') && i < cols.size(); ++i) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      cols[i].push_back(end == cell.c_str() ? std::nan("") : v);
    }
    for (; i < cols.size(); ++i) cols[i].push_back(std::nan(""));
  }
  fs::create_directories(a.out);
  for (std::size_t c = 1; c < header.size(); ++c) {
    Series s{cols[0], cols[c], series_color(0)};
    write_png(plot_series({s}), fs::path(a.out) / (header[c] + ".png"));
  }
  std::cout << a.out << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Compositional stochastic video prediction toolkit", "compvid"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Render a toy dataset and its manifest");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--train", gen.train, "Training sequences")->check(CLI::NonNegativeNumber);
  g->add_option("--val", gen.val, "Validation sequences")->check(CLI::NonNegativeNumber);
  g->add_option("--test", gen.test, "Test sequences")->check(CLI::NonNegativeNumber);
  g->add_option("--blocks", gen.blocks, "Blocks per tower (cycled), e.g. --blocks 3 or --blocks 2 3")
      ->check(CLI::Range(1, 8));
  g->add_option("--test-blocks", gen.test_blocks, "Blocks per tower in the test split")->check(CLI::Range(1, 8));
  g->add_option("--horizon", gen.generator.horizon, "Future frames per sequence")->check(CLI::PositiveNumber);
  g->add_option("--canvas", gen.generator.canvas, "Frame side in pixels")->check(CLI::Range(32, 1024));
  g->add_option("--p-unstable", gen.generator.p_unstable)->check(CLI::Range(0.0, 1.0));
  g->add_option("--p-ambiguous", gen.generator.p_ambiguous)->check(CLI::Range(0.0, 1.0));
  g->add_option("--fall-steps", gen.generator.fall_steps)->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "Base seed");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on a dataset's train split");
  t->add_option("--data", tr.data, "Dataset directory or manifest")->required();
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_option("--config", tr.config, "Config file (key = value lines)");
  t->add_flag("--quiet", tr.quiet, "No progress output");
  for (const auto& [key, value] : ModelConfig().to_key_values()) {
    t->add_option_function<std::string>(
        "--" + key, [&tr, key = key](const std::string& v) { tr.overrides[key] = v; },
        "Config key (default " + value + ")");
  }

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Best-of-K evaluation over a split");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required();
  e->add_option("--data", ev.data, "Dataset directory or manifest")->required();
  e->add_option("--k", ev.k, "Samples per sequence");
  e->add_option("--split", ev.split, "Split to evaluate");
  e->add_option("--out", ev.out, "Report directory (default <run>/logs/eval_<split>)");
  e->add_option("--horizon", ev.horizon, "Prediction horizon (default: the model's)");
  e->add_option("--seed", ev.seed, "Noise stream seed");
  e->add_option("--metric", ev.metric, "Frame metric");
  e->add_option("--threads", ev.threads)->check(CLI::PositiveNumber);
  e->add_flag("--no-frames", ev.no_frames, "Location errors only");
  e->add_flag("--nn", ev.nn, "Also score the nearest-neighbour retrieval baseline");

  SampleArgs sa;
  auto* s = app.add_subcommand("sample", "Write K sampled futures of one sequence as images");
  s->add_option("--ckpt", sa.ckpt, "Checkpoint file")->required();
  s->add_option("--seq", sa.seq, "Sequence file")->required();
  s->add_option("--k", sa.k, "Samples");
  s->add_option("--out", sa.out, "Output directory (default <run>/samples/<seq>)");
  s->add_option("--horizon", sa.horizon);
  s->add_option("--seed", sa.seed, "Noise stream seed");
  s->add_option("--scale", sa.scale, "Overlay upscaling")->check(CLI::Range(1, 16));

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "Render one curve image per CSV column");
  p->add_option("--metrics", pl.metrics, "CSV file; first column is the x axis")->required();
  p->add_option("--out", pl.out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kExitUsage;
  }

  try {
    if (*g) return command_generate(gen);
    if (*t) return command_train(tr);
    if (*e) return command_eval(ev);
    if (*s) return command_sample(sa);
    if (*p) return command_plot(pl);
  } catch (const UsageError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const ArgumentError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace compvid
