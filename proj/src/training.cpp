#include "compvid/training.hpp"

#include <chrono>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "compvid/container.hpp"
#include "compvid/errors.hpp"

namespace compvid {

namespace {

void require_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t.detach()).all().item<bool>()) {
    throw NumericalError(std::string("non-finite value in ") + what);
  }
}

std::vector<double> to_vector(const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

}  // namespace

LossReport compute_losses(const torch::Tensor& pred_frames, const torch::Tensor& pred_centers,
                          const torch::Tensor& gt_frames, const torch::Tensor& gt_centers,
                          const torch::Tensor& dec_frames, const torch::Tensor& kl, double lambda_loc,
                          double lambda_kl) {
  if (pred_frames.dim() != 5 || gt_frames.dim() != 5 || dec_frames.dim() != 5 || pred_centers.dim() != 4 ||
      gt_centers.dim() != 4) {
    throw ArgumentError("compute_losses: unexpected tensor ranks");
  }
  const auto T = pred_frames.size(1);
  if (gt_frames.size(1) != T + 1 || dec_frames.size(1) != T + 1 || pred_centers.size(1) != T ||
      gt_centers.size(1) != T + 1) {
    throw ArgumentError("compute_losses: horizons disagree");
  }
  if (pred_centers.sizes().slice(2) != gt_centers.sizes().slice(2)) {
    throw ArgumentError("compute_losses: entity counts disagree");
  }
  require_finite(pred_frames, "predicted frames");
  require_finite(pred_centers, "predicted centers");
  require_finite(gt_frames, "ground-truth frames");
  require_finite(gt_centers, "ground-truth centers");
  require_finite(dec_frames, "auto-encoded frames");
  require_finite(kl, "KL term");

  const auto future = gt_frames.narrow(1, 1, T);
  const auto frame_t = (pred_frames - future).abs().mean({2, 3, 4});                        // [B,T]
  const auto loc_t = (pred_centers - gt_centers.narrow(1, 1, T)).square().sum({2, 3});    // [B,T]
  const auto dec_t = (dec_frames - gt_frames).abs().mean({2, 3, 4});                       // [B,T+1]

  const auto l_pred_frame = frame_t.sum(1).mean();
  const auto l_pred_loc = loc_t.sum(1).mean();
  const auto l_dec = dec_t.sum(1).mean();
  const auto l_enc = kl.mean();
  const auto total = l_dec + l_pred_frame + lambda_loc * l_pred_loc + lambda_kl * l_enc;

  LossReport r;
  r.l_pred_frame = l_pred_frame.item<double>();
  r.l_pred_loc = l_pred_loc.item<double>();
  r.l_dec = l_dec.item<double>();
  r.l_enc = l_enc.item<double>();
  r.total = r.l_dec + r.l_pred_frame + lambda_loc * r.l_pred_loc + lambda_kl * r.l_enc;
  r.pred_frame_per_t = to_vector(frame_t.mean(0));
  r.pred_loc_per_t = to_vector(loc_t.mean(0));
  r.dec_per_t = to_vector(dec_t.mean(0));
  r.total_tensor = total;
  return r;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, VideoModel& model, std::int64_t step,
                     const std::string& noise_state, const std::string& order_state) {
  Container c;
  for (const auto& item : model->named_parameters()) {
    const auto t = item.value().detach().to(torch::kCPU, torch::kFloat32).contiguous();
    std::vector<std::uint64_t> shape(t.sizes().begin(), t.sizes().end());
    c.add_f32("param/" + item.key(), shape, t.data_ptr<float>());
  }
  c.add_text("config", model->config().serialize());
  c.add_text("state", format_key_values({{"step", std::to_string(step)},
                                         {"noise_state", noise_state},
                                         {"order_state", order_state}}));
  c.write(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto c = Container::read(path);
  if (!c.has("config")) throw FormatError(path.string() + ": missing field 'config'");
  const auto& cfg = c.get("config");
  Checkpoint ck;
  ck.config = ModelConfig::parse(std::string(cfg.bytes.begin(), cfg.bytes.end()));
  ck.model = build_model(ck.config);
  torch::NoGradGuard guard;
  for (auto& item : ck.model->named_parameters()) {
    const auto name = "param/" + item.key();
    if (!c.has(name)) throw FormatError(path.string() + ": missing field '" + name + "'");
    const auto& f = c.get(name);
    auto& p = item.value();
    if (f.dtype != DType::F32 || static_cast<std::int64_t>(f.numel()) != p.numel()) {
      throw FormatError(path.string() + ": field '" + name + "' does not match the model");
    }
    std::memcpy(p.data_ptr<float>(), f.bytes.data(), f.bytes.size());
  }
  if (c.has("state")) {
    const auto& s = c.get("state");
    const auto kv = parse_key_values(std::string(s.bytes.begin(), s.bytes.end()));
    if (auto it = kv.find("step"); it != kv.end()) ck.step = std::stoll(it->second);
    if (auto it = kv.find("noise_state"); it != kv.end()) ck.noise_state = it->second;
    if (auto it = kv.find("order_state"); it != kv.end()) ck.order_state = it->second;
  }
  ck.model->eval();
  return ck;
}

// ---------------------------------------------------------------------------

std::vector<SequenceTensors> load_split(const DatasetManifest& manifest, const std::string& split) {
  std::vector<SequenceTensors> out;
  for (const auto& rel : manifest.split(split).paths) out.push_back(to_tensors(load_sequence(manifest.resolve(rel))));
  return out;
}

Trainer::Trainer(const ModelConfig& config, std::vector<SequenceTensors> data)
    : config_(config), data_(std::move(data)), noise_(config.seed + 1), order_rng_(config.seed + 2) {
  if (data_.empty()) throw ArgumentError("training set is empty");
  const auto n = data_.front().centers.size(1);
  for (const auto& s : data_) {
    if (s.centers.size(1) != n) throw ArgumentError("training sequences must share one entity count");
    if (s.frames.size(0) < config_.horizon + 1) {
      throw ArgumentError("training sequences are shorter than horizon + 1 frames");
    }
  }
  torch::set_num_threads(config_.threads);
  model_ = build_model(config_);
  model_->train();
  optimizer_ = std::make_unique<torch::optim::Adam>(model_->parameters(),
                                                    torch::optim::AdamOptions(config_.learning_rate));
}

std::string Trainer::order_state() const {
  std::ostringstream os;
  os << order_rng_;
  return os.str();
}

std::vector<std::size_t> Trainer::next_batch() {
  std::vector<std::size_t> batch;
  for (int i = 0; i < config_.batch_size; ++i) {
    if (cursor_ >= order_.size()) {
      order_.resize(data_.size());
      for (std::size_t k = 0; k < order_.size(); ++k) order_[k] = k;
      for (std::size_t k = order_.size() - 1; k > 0; --k) std::swap(order_[k], order_[order_rng_() % (k + 1)]);
      cursor_ = 0;
    }
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

std::pair<torch::Tensor, torch::Tensor> Trainer::assemble(const std::vector<std::size_t>& indices) {
  std::vector<torch::Tensor> frames, centers;
  const auto T1 = config_.horizon + 1;
  for (auto i : indices) {
    const auto& s = data_[i];
    std::int64_t start = 0;
    const auto room = s.frames.size(0) - T1;
    if (config_.start_jitter > 0 && room > 0) {
      start = static_cast<std::int64_t>(order_rng_() % static_cast<std::uint64_t>(std::min<std::int64_t>(room, config_.start_jitter) + 1));
    }
    frames.push_back(s.frames.narrow(0, start, T1));
    centers.push_back(s.centers.narrow(0, start, T1));
  }
  return {torch::stack(frames), torch::stack(centers)};
}

LossReport Trainer::run(const std::vector<std::size_t>& indices) {
  const auto [frames, centers] = assemble(indices);
  const auto out = model_->forward_train(frames, centers, noise_);
  return compute_losses(out.pred_frames, out.pred_centers, frames, centers, out.dec_frames, out.kl,
                        config_.lambda_loc, config_.lambda_kl);
}

LossReport Trainer::step() {
  last_batch_ = next_batch();
  optimizer_->zero_grad();
  LossReport report;
  try {
    report = run(last_batch_);
  } catch (const NumericalError& e) {
    std::ostringstream os;
    os << "training diverged at step " << steps_done_ + 1 << " (" << e.what() << "); batch sequence indices:";
    for (auto i : last_batch_) os << " " << i;
    throw NumericalError(os.str());
  }
  report.total_tensor.backward();
  optimizer_->step();
  ++steps_done_;
  return report;
}

LossReport Trainer::evaluate(const std::vector<std::size_t>& indices) {
  torch::NoGradGuard guard;
  return run(indices);
}

std::filesystem::path train(const ModelConfig& config, const DatasetManifest& manifest,
                            const std::filesystem::path& run_dir, const TrainOptions& options) {
  config.validate();
  const auto ckpt_dir = run_dir / "checkpoints";
  const auto log_dir = run_dir / "logs";
  std::filesystem::create_directories(ckpt_dir);
  std::filesystem::create_directories(log_dir);
  auto data = load_split(manifest, "train");
  ModelConfig resolved = config;
  if (!data.empty()) resolved.n_entities = static_cast<int>(data.front().centers.size(1));
  {
    std::ofstream cfg(run_dir / "config.txt", std::ios::trunc);
    if (!cfg) throw IoError("cannot write '" + (run_dir / "config.txt").string() + "'");
    cfg << resolved.serialize();
  }
  Trainer trainer(resolved, std::move(data));

  const auto metrics_path = log_dir / "metrics.csv";
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw IoError("cannot write '" + metrics_path.string() + "'");
  metrics << "step,l_pred_frame,l_pred_loc,l_dec,l_enc,total,wall_time\n";
  metrics << std::setprecision(9);

  const auto t0 = std::chrono::steady_clock::now();
  auto checkpoint_path = [&](std::int64_t step) {
    std::ostringstream name;
    name << "step_" << std::setw(6) << std::setfill('0') << step << ".cvpk";
    return ckpt_dir / name.str();
  };
  for (std::int64_t s = 1; s <= config.steps; ++s) {
    const auto r = trainer.step();
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics << s << "," << r.l_pred_frame << "," << r.l_pred_loc << "," << r.l_dec << "," << r.l_enc << ","
            << r.total << "," << wall << "\n";
    metrics.flush();
    if (options.on_step) options.on_step(s, r);
    if (s % config.checkpoint_every == 0 && s != config.steps) {
      save_checkpoint(checkpoint_path(s), trainer.model(), s, trainer.noise_state(), trainer.order_state());
    }
  }
  const auto final_path = ckpt_dir / "final.cvpk";
  save_checkpoint(final_path, trainer.model(), trainer.steps_done(), trainer.noise_state(), trainer.order_state());
  return final_path;
}

}  // namespace compvid
