#include <doctest.h>

#include <fstream>
#include <sstream>

#include "compvid/cli.hpp"
#include "compvid/errors.hpp"
#include "compvid/evalkit.hpp"
#include "compvid/imageio.hpp"
#include "compvid/tensors.hpp"
#include "compvid/training.hpp"
#include "support.hpp"

using namespace compvid;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

int cli(std::initializer_list<std::string> args) { return run_cli(std::vector<std::string>(args)); }

}  // namespace

TEST_CASE("location_error examples") {
  const auto a = torch::rand({4, 3, 2});
  CHECK((location_error(a, a) == 0).all().item<bool>());
  const auto gt = torch::zeros({1, 1, 2}, torch::kFloat64);
  const auto pred = torch::tensor({0.3, 0.4}, torch::kFloat64).view({1, 1, 2});
  CHECK(location_error(pred, gt).item<double>() == doctest::Approx(0.25));
  const auto b = torch::rand({4, 3, 2});
  const auto perm = torch::tensor({2, 0, 1}, torch::kLong);
  CHECK(torch::allclose(location_error(a.index_select(1, perm), b.index_select(1, perm)), location_error(a, b)));
  CHECK_THROWS_AS(location_error(a, torch::rand({4, 2, 2})), ArgumentError);
}

TEST_CASE("frame_error examples and plugin registry") {
  const auto a = torch::rand({3, 3, 8, 8}), b = torch::rand({3, 3, 8, 8});
  CHECK((frame_error(a, a) == 0).all().item<bool>());
  CHECK(frame_error(torch::zeros({1, 3, 4, 4}), torch::ones({1, 3, 4, 4})).item<float>() == doctest::Approx(1.0));
  CHECK(torch::equal(frame_error(a, b), frame_error(b, a)));
  CHECK_THROWS_AS(frame_error(a, b, "lpips"), ArgumentError);
  register_frame_metric("max_abs", [](const torch::Tensor& p, const torch::Tensor& g) {
    return (p - g).abs().flatten(1).amax(1);
  });
  CHECK(frame_error(torch::zeros({2, 3, 3, 4, 4}), torch::ones({2, 3, 3, 4, 4}), "max_abs").sizes() ==
        torch::IntArrayRef({2, 3}));
}

TEST_CASE("best_of_k invariants") {
  auto cfg = testutil::small_config();
  cfg.horizon = 5;
  auto m = build_model(cfg);
  const auto seq = generate_sequence(3, 3, 5, cfg.canvas);

  NoiseStream n1(7);
  const auto one = best_of_k(m, seq, 1, n1);
  CHECK(one.loc_best == one.loc_samples[0]);
  CHECK(one.frame_best == one.frame_samples[0]);
  CHECK(one.loc_best.size() == 5u);
  for (double s : one.loc_sigma) CHECK(s == 0.0);

  NoiseStream n10(7), n100(7);
  const auto ten = best_of_k(m, seq, 10, n10);
  const auto hundred = best_of_k(m, seq, 30, n100);
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(ten.loc_samples[0][t] == doctest::Approx(one.loc_samples[0][t]).epsilon(1e-6));
    CHECK(hundred.loc_best[t] <= ten.loc_best[t] + 1e-12);
    CHECK(ten.loc_best[t] <= ten.loc_mean[t] + 1e-12);
    CHECK(ten.frame_best[t] <= ten.frame_mean[t] + 1e-12);
    CHECK(std::isfinite(ten.loc_mean[t]));
    CHECK(ten.top5_mean[t] >= ten.loc_best[t] - 1e-12);
  }
  CHECK(ten.loc_mean_latent.size() == 5u);
  CHECK(ten.best_frames.sizes() == torch::IntArrayRef({5, 3, cfg.canvas, cfg.canvas}));
  CHECK_THROWS_AS(best_of_k(m, seq, 0, n1), ArgumentError);
}

TEST_CASE("best_of_k with a degenerate sampler has zero spread") {
  auto cfg = testutil::small_config();
  auto m = build_model(cfg);
  const auto seq = generate_sequence(4, 3, 4, cfg.canvas);
  testutil::ZeroNoise zero;
  const auto r = best_of_k(m, seq, 6, zero);
  for (std::size_t t = 0; t < r.loc_best.size(); ++t) {
    CHECK(r.loc_best[t] == doctest::Approx(r.loc_mean[t]).epsilon(1e-9));
    CHECK(r.loc_sigma[t] <= 1e-9);
  }
  CHECK(r.final_center_sigma <= 1e-9);
}

TEST_CASE("fp/lp samples extend consistently with the stream prefix") {
  auto cfg = testutil::small_config();
  cfg.latent_scheme = LatentScheme::FixedPrior;
  auto m = build_model(cfg);
  const auto seq = generate_sequence(5, 3, 4, cfg.canvas);
  NoiseStream a(2), b(2);
  const auto r3 = best_of_k(m, seq, 3, a, {0, false});
  const auto r6 = best_of_k(m, seq, 6, b, {0, false});
  for (int i = 0; i < 3; ++i) CHECK(r3.loc_samples[i] == r6.loc_samples[i]);
}

TEST_CASE("nn_baseline retrieves from the train split only") {
  testutil::TempDir dir("nn");
  GeneratorParams g;
  g.horizon = 2;
  g.canvas = 32;
  const auto manifest = generate_dataset(dir.path(), 4, 0, 2, g);
  auto m = build_model(testutil::small_config());
  const auto& train_paths = manifest.split("train").paths;
  for (std::size_t i = 0; i < train_paths.size(); ++i) {
    const auto s = load_sequence(manifest.resolve(train_paths[i]));
    const auto nn = nn_baseline(m->frontend, to_tensors(s).frames[0], manifest);
    CHECK(nn.index == i);
    CHECK(nn.sequence == s);
    CHECK(nn.distance == 0.0);
  }
  const auto test_seq = load_sequence(manifest.resolve(manifest.split("test").paths[0]));
  const auto a = nn_baseline(m->frontend, to_tensors(test_seq).frames[0], manifest);
  const auto b = nn_baseline(m->frontend, to_tensors(test_seq).frames[0], manifest);
  CHECK(a.index == b.index);
  CHECK(std::find(train_paths.begin(), train_paths.end(), a.path) != train_paths.end());

  DatasetManifest empty;
  CHECK_THROWS_AS(nn_baseline(m->frontend, to_tensors(test_seq).frames[0], empty), ArgumentError);
}

TEST_CASE("report files carry the documented columns") {
  testutil::TempDir dir("report");
  auto cfg = testutil::small_config();
  auto m = build_model(cfg);
  NoiseStream noise(0);
  std::vector<SequenceReport> reps;
  for (int i = 0; i < 2; ++i) {
    reps.push_back({"seq" + std::to_string(i), 3, best_of_k(m, generate_sequence(i, 3, 4, cfg.canvas), 3, noise)});
  }
  write_reports(reps, dir.path());
  std::istringstream csv(slurp(dir.path() / "seq0.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "timestep,loc_best,loc_mean,loc_sigma,frame_best,frame_mean,top5_mean,top5_sigma");
  int rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  CHECK(rows == 4);
  CHECK(std::filesystem::exists(dir.path() / "summary.csv"));
  CHECK(slurp(dir.path() / "summary.txt").find("all.loc_best") != std::string::npos);
}

TEST_CASE("png writer and plots") {
  testutil::TempDir dir("png");
  Image img(5, 4, {10, 20, 30});
  img.set(1, 1, {255, 0, 0});
  write_png(img, dir.path() / "a.png");
  const auto bytes = slurp(dir.path() / "a.png");
  REQUIRE(bytes.size() > 8);
  CHECK(bytes.substr(1, 3) == "PNG");
  const auto plot = plot_series({{{0, 1, 2}, {1, 0.5, 0.25}, series_color(0)}});
  CHECK(plot.width == 480);
  CHECK(tile({img, img, img}, 2, 1).width == 2 * 5 + 3);
}

TEST_CASE("cli: generate, usage errors and determinism") {
  testutil::TempDir dir("cli_gen");
  const auto out = (dir.path() / "data").string();
  CHECK(cli({"generate", "--out", out, "--train", "8", "--val", "2", "--test", "2", "--blocks", "3", "--horizon",
             "16", "--seed", "0"}) == 0);
  CHECK(load_manifest(dir.path() / "data" / kManifestName).total_paths() == 12);
  const auto first = slurp(dir.path() / "data" / kManifestName);
  const auto file0 = slurp(dir.path() / "data" / "train" / "seq_00000_n3.cvps");
  CHECK(cli({"generate", "--out", out, "--train", "8", "--val", "2", "--test", "2", "--blocks", "3", "--horizon",
             "16", "--seed", "0"}) == 0);
  CHECK(slurp(dir.path() / "data" / kManifestName) == first);
  CHECK(slurp(dir.path() / "data" / "train" / "seq_00000_n3.cvps") == file0);

  CHECK(cli({"generate", "--train", "2"}) == 2);
  CHECK(cli({"generate", "--out", out, "--blocks", "0"}) == 2);
  CHECK(cli({"unknown"}) == 2);
  CHECK(cli({}) == 2);
}

TEST_CASE("cli: train, eval, sample and plot") {
  testutil::TempDir dir("cli_run");
  const auto data = (dir.path() / "data").string();
  const auto run = dir.path() / "run";
  REQUIRE(cli({"generate", "--out", data, "--train", "2", "--val", "0", "--test", "2", "--horizon", "3", "--canvas",
               "32", "--test-blocks", "4"}) == 0);
  {
    std::ofstream cfg(dir.path() / "cfg.txt");
    cfg << "canvas = 32\ncrop_extent = 10\npatch_size = 8\nfeature_channels = 8\nrefine_channels = 8\n"
           "hidden_dim = 16\nhorizon = 3\nbatch_size = 2\nsteps = 5\n";
  }
  REQUIRE(cli({"train", "--data", data, "--out", run.string(), "--config", (dir.path() / "cfg.txt").string(),
               "--steps", "2", "--quiet"}) == 0);
  const auto resolved = ModelConfig::load((run / "config.txt").string());
  CHECK(resolved.steps == 2);        // flag beats file
  CHECK(resolved.hidden_dim == 16);  // file beats default
  for (const char* sub : {"checkpoints", "logs", "figures", "samples"}) CHECK(std::filesystem::is_directory(run / sub));
  const auto ckpt = (run / "checkpoints" / "final.cvpk").string();
  REQUIRE(std::filesystem::exists(ckpt));

  CHECK(cli({"eval", "--ckpt", ckpt, "--data", data, "--k", "4", "--nn"}) == 0);
  const auto report = run / "logs" / "eval_test";
  CHECK(std::filesystem::exists(report / "summary.csv"));
  CHECK(std::filesystem::exists(report / "nn_baseline.csv"));
  const auto summary = slurp(report / "summary.txt");
  CHECK(summary.find("n4.loc_best") != std::string::npos);
  CHECK(cli({"eval", "--ckpt", ckpt, "--data", data, "--k", "4", "--out", (dir.path() / "again").string()}) == 0);
  CHECK(slurp(dir.path() / "again" / "summary.csv") == slurp(report / "summary.csv"));

  CHECK(cli({"eval", "--ckpt", (run / "missing.cvpk").string(), "--data", data}) == 2);

  const auto seq = load_manifest(std::filesystem::path(data) / kManifestName).split("test").paths[0];
  const auto seq_path = (std::filesystem::path(data) / seq).string();
  const auto samples = dir.path() / "samples";
  CHECK(cli({"sample", "--ckpt", ckpt, "--seq", seq_path, "--k", "5", "--out", samples.string()}) == 0);
  int trajectories = 0;
  for (const auto& e : std::filesystem::directory_iterator(samples)) {
    if (e.path().filename().string().find("_trajectory.png") != std::string::npos) ++trajectories;
  }
  CHECK(trajectories == 5);
  CHECK(std::filesystem::exists(samples / "trajectories.png"));

  const auto figs = dir.path() / "figs";
  CHECK(cli({"plot", "--metrics", (run / "logs" / "metrics.csv").string(), "--out", figs.string()}) == 0);
  for (const char* m : {"l_pred_frame", "l_pred_loc", "l_dec", "l_enc", "total", "wall_time"}) {
    CHECK(std::filesystem::exists(figs / (std::string(m) + ".png")));
  }
  CHECK(cli({"plot", "--metrics", (dir.path() / "none.csv").string(), "--out", figs.string()}) == 2);
}
