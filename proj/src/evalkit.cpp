#include "compvid/evalkit.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>

#include "compvid/errors.hpp"
#include "compvid/tensors.hpp"

namespace compvid {

namespace {

std::map<std::string, FrameMetric>& metric_registry() {
  static std::map<std::string, FrameMetric> registry;
  return registry;
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::vector<double> as_vector(const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

std::vector<std::vector<double>> as_rows(const torch::Tensor& t) {
  std::vector<std::vector<double>> rows;
  for (std::int64_t i = 0; i < t.size(0); ++i) rows.push_back(as_vector(t[i]));
  return rows;
}

void require_finite(const torch::Tensor& t, const std::string& what) {
  if (!torch::isfinite(t).all().item<bool>()) throw NumericalError("non-finite values in " + what);
}

}  // namespace

torch::Tensor location_error(const torch::Tensor& pred_centers, const torch::Tensor& gt_centers) {
  if (pred_centers.sizes() != gt_centers.sizes()) {
    throw ArgumentError("location_error: shapes differ");
  }
  if (pred_centers.dim() < 2 || pred_centers.size(-1) != 2) {
    throw ArgumentError("location_error: expected [...,N,2]");
  }
  return (pred_centers - gt_centers).square().sum(-1).mean(-1);
}

torch::Tensor frame_error(const torch::Tensor& pred_frames, const torch::Tensor& gt_frames, const std::string& metric) {
  if (pred_frames.sizes() != gt_frames.sizes()) throw ArgumentError("frame_error: shapes differ");
  if (pred_frames.dim() < 3) throw ArgumentError("frame_error: expected [...,3,H,W]");
  if (metric == "l1") return (pred_frames - gt_frames).abs().mean({-3, -2, -1});
  FrameMetric fn;
  {
    std::lock_guard<std::mutex> lock(registry_mutex());
    const auto it = metric_registry().find(metric);
    if (it == metric_registry().end()) throw ArgumentError("unknown frame metric '" + metric + "'");
    fn = it->second;
  }
  std::vector<std::int64_t> lead(pred_frames.sizes().begin(), pred_frames.sizes().end() - 3);
  const auto flat_pred = pred_frames.reshape({-1, pred_frames.size(-3), pred_frames.size(-2), pred_frames.size(-1)});
  const auto flat_gt = gt_frames.reshape(flat_pred.sizes());
  auto out = fn(flat_pred, flat_gt);
  if (out.dim() != 1 || out.size(0) != flat_pred.size(0)) {
    throw ArgumentError("frame metric '" + metric + "' must return one value per frame");
  }
  return out.view(lead);
}

void register_frame_metric(const std::string& name, FrameMetric metric) {
  if (name == "l1") throw ArgumentError("'l1' is built in");
  std::lock_guard<std::mutex> lock(registry_mutex());
  metric_registry()[name] = std::move(metric);
}

std::vector<std::string> frame_metrics() {
  std::vector<std::string> names{"l1"};
  std::lock_guard<std::mutex> lock(registry_mutex());
  for (const auto& [name, _] : metric_registry()) names.push_back(name);
  return names;
}

// ---------------------------------------------------------------------------

BestOfKResult best_of_k(VideoModel& model, const VideoSequence& sequence, std::int64_t k, NoiseSource& noise,
                        const BestOfKOptions& options) {
  if (k < 1) throw ArgumentError("best_of_k: k must be at least 1");
  const auto& cfg = model->config();
  if (sequence.height != cfg.canvas || sequence.width != cfg.canvas) {
    throw ArgumentError("best_of_k: sequence canvas does not match the model");
  }
  std::int64_t T = options.horizon > 0 ? options.horizon : cfg.horizon;
  T = std::min<std::int64_t>(T, sequence.num_frames - 1);
  if (T < 1) throw ArgumentError("best_of_k: sequence has no future frames");

  torch::NoGradGuard no_grad;
  model->eval();
  const auto dtype = model->parameters().front().scalar_type();
  const auto seq = to_tensors(sequence);
  const auto gt_frames = seq.frames.narrow(0, 0, T + 1).to(dtype);
  const auto gt_centers = seq.centers.narrow(0, 0, T + 1).to(dtype);
  const auto future_frames = gt_frames.narrow(0, 1, T);
  const auto future_centers = gt_centers.narrow(0, 1, T);

  // Schemes that draw per step interleave rows within a batch, so they are
  // rolled out one sample at a time to keep sample i tied to its draws.
  const bool per_row = cfg.latent_scheme == LatentScheme::Ours || cfg.latent_scheme == LatentScheme::NoZ;
  const std::int64_t chunk = per_row ? std::max<std::int64_t>(1, options.chunk) : 1;

  std::vector<torch::Tensor> loc_parts, frame_parts, center_parts;
  double best_frame_score = std::numeric_limits<double>::infinity();
  BestOfKResult r;
  r.k = k;
  r.horizon = T;
  for (std::int64_t s = 0; s < k; s += chunk) {
    const auto len = std::min(chunk, k - s);
    const auto f0 = gt_frames[0].unsqueeze(0).expand({len, -1, -1, -1}).contiguous();
    const auto c0 = gt_centers[0].unsqueeze(0).expand({len, -1, -1}).contiguous();
    const auto roll = model->sample_rollout(f0, c0, T, noise, options.frames);
    require_finite(roll.centers, "sampled centers");
    center_parts.push_back(roll.centers);
    loc_parts.push_back(location_error(roll.centers, future_centers.unsqueeze(0).expand_as(roll.centers)));
    if (options.frames) {
      require_finite(roll.frames, "sampled frames");
      const auto fe = frame_error(roll.frames, future_frames.unsqueeze(0).expand_as(roll.frames), options.metric);
      frame_parts.push_back(fe);
      const auto avg = fe.mean(1);
      for (std::int64_t i = 0; i < len; ++i) {
        const double score = avg[i].item<double>();
        if (score < best_frame_score) {
          best_frame_score = score;
          r.best_frame_index = s + i;
          r.best_frames = roll.frames[i].clone();
        }
      }
    }
  }

  const auto loc = torch::cat(loc_parts, 0).to(torch::kFloat64);  // [k,T]
  r.sample_centers = torch::cat(center_parts, 0);
  r.loc_samples = as_rows(loc);
  r.loc_best = as_vector(std::get<0>(loc.min(0)));
  r.loc_mean = as_vector(loc.mean(0));
  r.loc_sigma = as_vector(loc.std(0, /*unbiased=*/false));
  const auto loc_avg = loc.mean(1);
  r.best_loc_index = loc_avg.argmin().item<std::int64_t>();

  const auto order = std::get<1>(loc_avg.sort(/*stable=*/true, /*dim=*/0, /*descending=*/false));
  const auto top = loc.index_select(0, order.narrow(0, 0, std::min<std::int64_t>(5, k)));
  r.top5_mean = as_vector(top.mean(0));
  r.top5_sigma = as_vector(top.std(0, /*unbiased=*/false));

  const auto final_centers = r.sample_centers.select(1, T - 1).to(torch::kFloat64);
  r.final_center_sigma = final_centers.std(0, /*unbiased=*/false).mean().item<double>();

  if (options.frames) {
    const auto fr = torch::cat(frame_parts, 0).to(torch::kFloat64);
    r.frame_samples = as_rows(fr);
    r.frame_best = as_vector(std::get<0>(fr.min(0)));
    r.frame_mean = as_vector(fr.mean(0));
    r.frame_sigma = as_vector(fr.std(0, /*unbiased=*/false));
  }

  if (options.mean_latent) {
    const auto z = model->posterior_mean_latents(gt_frames.unsqueeze(0));
    const auto roll = model->rollout_with_latents(gt_frames.narrow(0, 0, 1), gt_centers.narrow(0, 0, 1), z,
                                                  options.frames);
    require_finite(roll.centers, "mean-latent centers");
    r.loc_mean_latent = as_vector(location_error(roll.centers[0], future_centers));
    if (options.frames) r.frame_mean_latent = as_vector(frame_error(roll.frames[0], future_frames, options.metric));
  }
  return r;
}

NearestNeighbor nn_baseline(Frontend& frontend, const torch::Tensor& query_frame, const DatasetManifest& manifest) {
  if (!manifest.has_split("train") || manifest.split("train").paths.empty()) {
    throw ArgumentError("nn_baseline: the train split is empty");
  }
  if (query_frame.dim() != 3 || query_frame.size(0) != 3) throw ArgumentError("nn_baseline: query must be [3,H,W]");
  torch::NoGradGuard no_grad;
  const auto dtype = frontend->parameters().empty() ? torch::kFloat32 : frontend->parameters().front().scalar_type();
  const auto q = frontend->frame_descriptor(query_frame.unsqueeze(0).to(dtype))[0];
  const auto& paths = manifest.split("train").paths;
  NearestNeighbor best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < paths.size(); ++i) {
    auto seq = load_sequence(manifest.resolve(paths[i]));
    const auto f0 = to_tensors(seq).frames[0].unsqueeze(0).to(dtype);
    const double d = (frontend->frame_descriptor(f0)[0] - q).norm().item<double>();
    if (d < best.distance) {
      best.index = i;
      best.path = paths[i];
      best.sequence = std::move(seq);
      best.distance = d;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

namespace {

double at(const std::vector<double>& v, std::size_t i) {
  return i < v.size() ? v[i] : std::numeric_limits<double>::quiet_NaN();
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << std::setprecision(9);
  return os;
}

constexpr const char* kCsvHeader = "timestep,loc_best,loc_mean,loc_sigma,frame_best,frame_mean,top5_mean,top5_sigma";

}  // namespace

void write_sequence_csv(const BestOfKResult& r, const std::filesystem::path& path) {
  auto os = open_out(path);
  os << kCsvHeader << "\n";
  for (std::size_t t = 0; t < static_cast<std::size_t>(r.horizon); ++t) {
    os << t + 1 << "," << at(r.loc_best, t) << "," << at(r.loc_mean, t) << "," << at(r.loc_sigma, t) << ","
       << at(r.frame_best, t) << "," << at(r.frame_mean, t) << "," << at(r.top5_mean, t) << ","
       << at(r.top5_sigma, t) << "\n";
  }
}

void write_reports(const std::vector<SequenceReport>& reports, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::int64_t T = 0;
  for (const auto& rep : reports) {
    write_sequence_csv(rep.result, dir / (rep.name + ".csv"));
    T = std::max(T, rep.result.horizon);
  }

  // Per-timestep means over the sequences that reach each timestep.
  auto csv = open_out(dir / "summary.csv");
  csv << kCsvHeader << ",loc_mean_latent,frame_mean_latent\n";
  using Field = const std::vector<double> BestOfKResult::*;
  const std::vector<Field> fields{&BestOfKResult::loc_best,  &BestOfKResult::loc_mean,   &BestOfKResult::loc_sigma,
                                  &BestOfKResult::frame_best, &BestOfKResult::frame_mean, &BestOfKResult::top5_mean,
                                  &BestOfKResult::top5_sigma, &BestOfKResult::loc_mean_latent,
                                  &BestOfKResult::frame_mean_latent};
  for (std::size_t t = 0; t < static_cast<std::size_t>(T); ++t) {
    csv << t + 1;
    for (auto f : fields) {
      std::vector<double> vals;
      for (const auto& rep : reports) {
        const auto& v = rep.result.*f;
        if (t < v.size()) vals.push_back(v[t]);
      }
      csv << "," << mean_of(vals);
    }
    csv << "\n";
  }

  // Scalar aggregates overall and per entity count.
  std::map<std::string, std::vector<const SequenceReport*>> groups;
  for (const auto& rep : reports) {
    groups["all"].push_back(&rep);
    groups["n" + std::to_string(rep.num_entities)].push_back(&rep);
  }
  auto txt = open_out(dir / "summary.txt");
  for (const auto& [group, members] : groups) {
    std::map<std::string, std::vector<double>> acc;
    for (const auto* rep : members) {
      const auto& r = rep->result;
      acc["loc_best"].push_back(mean_of(r.loc_best));
      acc["loc_mean"].push_back(mean_of(r.loc_mean));
      acc["loc_sigma"].push_back(mean_of(r.loc_sigma));
      acc["final_center_sigma"].push_back(r.final_center_sigma);
      if (!r.frame_best.empty()) {
        acc["frame_best"].push_back(mean_of(r.frame_best));
        acc["frame_mean"].push_back(mean_of(r.frame_mean));
      }
      if (!r.loc_mean_latent.empty()) acc["loc_mean_latent"].push_back(mean_of(r.loc_mean_latent));
      if (!r.frame_mean_latent.empty()) acc["frame_mean_latent"].push_back(mean_of(r.frame_mean_latent));
    }
    txt << group << ".sequences = " << members.size() << "\n";
    for (const auto& [key, vals] : acc) txt << group << "." << key << " = " << mean_of(vals) << "\n";
  }
  if (!reports.empty()) {
    txt << "k = " << reports.front().result.k << "\n";
    txt << "horizon = " << T << "\n";
  }
}

}  // namespace compvid
