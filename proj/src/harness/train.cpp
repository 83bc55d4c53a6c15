#include "nvs/train.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

#include "nvs/ops.hpp"
#include "nvs/rng.hpp"

namespace nvs {

namespace {

// Fixed so every run scores reconstructions with the same frozen features.
constexpr std::uint64_t kPerceptualSeed = 0x5eed0fea7u;

OptimConfig with_lr(OptimConfig o, double lr) {
  o.lr = lr;
  return o;
}

double finite_or_throw(double v, const std::string& what) {
  if (!std::isfinite(v)) throw DomainError(what);
  return v;
}

}  // namespace

LoadedDataset load_dataset(const std::string& dir) {
  LoadedDataset d;
  d.dir = dir;
  d.manifest = load_manifest(dir);
  const int size = d.manifest.image_size;
  for (std::size_t i = 0; i < d.manifest.entries.size(); ++i) {
    d.refs.push_back(read_ppm(sample_path(dir, i, "ref.ppm")));
    d.gts.push_back(read_ppm(sample_path(dir, i, "gt.ppm")));
    int w = 0, h = 0;
    d.depths.push_back(read_pfm(sample_path(dir, i, "depth.pfm"), w, h));
    for (const Image* img : {&d.refs.back(), &d.gts.back()}) {
      if (img->width != size || img->height != size) {
        throw IoError("sample " + std::to_string(i) + " in " + dir + " is not " +
                      std::to_string(size) + "x" + std::to_string(size));
      }
    }
    if (w != size || h != size) throw IoError("depth of sample " + std::to_string(i) + " has wrong size");
  }
  return d;
}

std::vector<double> depth_to_vector(const Tensor<float>& depth) {
  const auto v = depth.values();
  return {v.begin(), v.end()};
}

std::vector<double> predict_depth(const DepthNet<float>& net, const Image& image) {
  NoGradGuard guard;
  return depth_to_vector(net.forward(image_to_tensor<float>(image)));
}

// ---------------------------------------------------------------- DepthNet

std::uint64_t held_out_scene_seed(std::uint64_t seed, int index) {
  return derive_seed(derive_seed(seed, 0xD0E5), static_cast<std::uint64_t>(index));
}

DepthTrainer::DepthTrainer(const RunConfig& config, const std::vector<std::uint64_t>& scene_seeds)
    : config_(config),
      camera_(default_camera(config.view.image_size)),
      net_(config.depth, derive_seed(config.seed, 11)),
      opt_(net_.params(), with_lr(config.optim, config.depth_lr)) {
  config_.validate();
  for (auto s : scene_seeds) scenes_.push_back(generate_scene(s));
  for (int i = 0; i < config.depth_extra_scenes; ++i) {
    scenes_.push_back(generate_scene(derive_seed(derive_seed(config.seed, 0xE77A), static_cast<std::uint64_t>(i))));
  }
  if (scenes_.empty()) throw ValidationError("depth training needs at least one scene");
}

DepthStepLog DepthTrainer::step() {
  Rng rng(derive_seed(derive_seed(config_.seed, 12), static_cast<std::uint64_t>(step_)));
  DepthStepLog log;
  log.step = step_;
  log.lr = scheduled_lr(config_.depth_lr, step_, std::max(1, config_.depth_steps), config_.optim.warmup_fraction);
  const float inv_b = 1.0f / static_cast<float>(config_.depth_batch);
  for (int b = 0; b < config_.depth_batch; ++b) {
    const auto& scene = scenes_[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(scenes_.size()) - 1))];
    const auto frames = make_neighbors(scene, rng.next_u64(), camera_, config_.neighbors);
    const auto ref = image_to_tensor<float>(frames.ref);
    std::vector<Tensor<float>> nbs;
    for (const auto& f : frames.frames) nbs.push_back(image_to_tensor<float>(f));
    const auto depth = net_.forward(ref);
    const auto loss = depth_loss(ref, nbs, frames.poses, depth, camera_, config_.weights);
    const double total = static_cast<double>(loss.total.item());
    finite_or_throw(total, "non-finite depth loss at step " + std::to_string(step_));
    if (loss.total.requires_grad()) affine(loss.total, inv_b, 0.0f).backward();
    log.total += total * inv_b;
    log.reprojection += static_cast<double>(loss.reprojection.item()) * inv_b;
    log.smoothness += static_cast<double>(loss.smoothness.item()) * inv_b;
    log.kept += loss.kept_fraction * inv_b;
  }
  opt_.step(log.lr);
  net_.params().zero_grad();
  ++step_;
  return log;
}

TensorTable DepthTrainer::checkpoint() const {
  TensorTable t;
  store_params(t, net_.params());
  opt_.store(t, "adam.depth.");
  put_text(t, "meta.config", config_to_text(config_));
  put_text(t, "meta.kind", "depth");
  put_scalar(t, "meta.step", step_);
  return t;
}

void DepthTrainer::restore(const TensorTable& table) {
  restore_params(table, net_.params());
  opt_.restore(table, "adam.depth.");
  step_ = static_cast<int>(get_scalar(table, "meta.step"));
}

double depth_abs_rel(const DepthNet<float>& net, std::uint64_t seed, int count, int image_size) {
  const auto camera = default_camera(image_size);
  double sum = 0;
  std::size_t n = 0;
  for (int i = 0; i < count; ++i) {
    const auto scene = generate_scene(held_out_scene_seed(seed, i));
    const auto view = rasterize(scene, camera, RelativePose::identity());
    const auto pred = predict_depth(net, view.image);
    for (std::size_t k = 0; k < pred.size(); ++k) {
      sum += std::abs(pred[k] - view.depth[k]) / view.depth[k];
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

// ---------------------------------------------------------------- ViewNet

ViewTrainer::ViewTrainer(const RunConfig& config, const LoadedDataset& data,
                         std::shared_ptr<DepthNet<float>> depth)
    : config_(config),
      data_(&data),
      camera_(default_camera(config.view.image_size)),
      depth_net_(std::move(depth)),
      net_(config.view, derive_seed(config.seed, 1)),
      disc_(derive_seed(config.seed, 2), config.disc_width),
      perceptual_(kPerceptualSeed),
      gen_opt_(net_.params(), config.optim),
      disc_opt_(disc_.params(), with_lr(config.optim, config.disc_lr)) {
  config_.validate();
  if (data.size() == 0) throw ValidationError("dataset " + data.dir + " is empty");
  if (data.manifest.image_size != config.view.image_size) {
    throw ValidationError("dataset image size " + std::to_string(data.manifest.image_size) +
                          " differs from config image_size " + std::to_string(config.view.image_size));
  }
  if (depth_net_) {
    depth_net_->params().set_trainable(false);
    for (const auto& t : depth_net_->params().tensors()) {
      depth_snapshot_.emplace_back(t.values().begin(), t.values().end());
    }
    for (const auto& img : data.refs) depths_.push_back(predict_depth(*depth_net_, img));
  } else {
    depths_ = data.depths;
  }
}

std::uint64_t ViewTrainer::batch_seed(int step) const {
  return derive_seed(derive_seed(config_.seed, 21), static_cast<std::uint64_t>(step));
}

void ViewTrainer::check_depth_frozen() const {
  if (!depth_net_) return;
  const auto& tensors = depth_net_->params().tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto v = tensors[i].values();
    if (tensors[i].has_grad() ||
        std::memcmp(v.data(), depth_snapshot_[i].data(), v.size() * sizeof(float)) != 0) {
      throw std::logic_error("DepthNet parameter " + depth_net_->params().names()[i] +
                             " changed during ViewNet training");
    }
  }
}

ViewStepLog ViewTrainer::step() {
  const std::uint64_t seed = batch_seed(step_);
  Rng rng(seed);
  ViewStepLog log;
  log.step = step_;
  log.lr = scheduled_lr(config_.optim.lr, step_, config_.steps, config_.optim.warmup_fraction);
  const double disc_lr = scheduled_lr(config_.disc_lr, step_, config_.steps, config_.optim.warmup_fraction);
  const int batch = config_.batch;
  const float inv_b = 1.0f / static_cast<float>(batch);
  const bool adversarial = config_.weights.adversarial > 0;
  const std::int64_t size = config_.view.image_size;

  struct Pending {
    Tensor<float> fake, real;
    CropWindow crop;
  };
  std::vector<Pending> pending;
  std::string picked;

  disc_.params().set_trainable(false);
  for (int b = 0; b < batch; ++b) {
    const auto idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(data_->size()) - 1));
    const bool identity = rng.uniform() < config_.identity_fraction;
    const CropWindow crop = random_crop(size, size, rng);
    picked += (picked.empty() ? "" : " ") + std::to_string(idx) + (identity ? "i" : "");

    const auto x = image_to_tensor<float>(data_->refs[idx]);
    const auto y = identity ? x : image_to_tensor<float>(data_->gts[idx]);
    const RelativePose pose = identity ? RelativePose::identity() : data_->manifest.entries[idx].pose;
    const auto geo = make_geometry(camera_, depths_[idx]);
    const auto out = net_.forward(x, geo, pose);
    const auto rec = l1_and_perceptual(out.image, y, perceptual_);
    Tensor<float> g_adv;
    if (adversarial) g_adv = adversarial_losses(out.image, y, disc_, crop).g_loss;
    const auto ts = ts_loss(out.pair.h_e, out.pair.h_i, out.pair.mask, config_.weights, config_.ts_detach);
    ViewLossReport r;
    const auto total = total_view_loss(rec.l1, rec.perceptual, g_adv, ts, config_.weights, &r);
    if (!std::isfinite(r.total)) {
      disc_.params().set_trainable(true);
      char buf[160];
      std::snprintf(buf, sizeof buf, "non-finite loss at step %d (batch seed %llu, samples %s)", step_,
                    static_cast<unsigned long long>(seed), picked.c_str());
      throw DomainError(buf);
    }
    affine(total, inv_b, 0.0f).backward();
    log.loss.l1 += r.l1 * inv_b;
    log.loss.perceptual += r.perceptual * inv_b;
    log.loss.adversarial += r.adversarial * inv_b;
    log.loss.ts_in += r.ts_in * inv_b;
    log.loss.ts_out += r.ts_out * inv_b;
    log.loss.total += r.total * inv_b;
    if (adversarial) pending.push_back({detach(out.image), y, crop});
  }
  disc_.params().set_trainable(true);
  gen_opt_.step(log.lr);
  net_.params().zero_grad();

  if (adversarial) {
    for (const auto& p : pending) {
      const auto d = adversarial_losses(p.fake, p.real, disc_, p.crop).d_loss;
      const double dv = static_cast<double>(d.item());
      if (!std::isfinite(dv)) {
        throw DomainError("non-finite discriminator loss at step " + std::to_string(step_) +
                          " (batch seed " + std::to_string(seed) + ")");
      }
      affine(d, inv_b, 0.0f).backward();
      log.d_loss += dv * inv_b;
    }
    disc_opt_.step(disc_lr);
  }
  disc_.params().zero_grad();
  check_depth_frozen();
  ++step_;
  return log;
}

TensorTable ViewTrainer::checkpoint() const {
  TensorTable t;
  store_params(t, net_.params());
  store_params(t, disc_.params());
  if (depth_net_) store_params(t, depth_net_->params());
  gen_opt_.store(t, "adam.gen.");
  disc_opt_.store(t, "adam.disc.");
  put_text(t, "meta.config", config_to_text(config_));
  put_text(t, "meta.kind", "view");
  put_scalar(t, "meta.step", step_);
  return t;
}

void ViewTrainer::restore(const TensorTable& table) {
  restore_params(table, net_.params());
  restore_params(table, disc_.params());
  gen_opt_.restore(table, "adam.gen.");
  disc_opt_.restore(table, "adam.disc.");
  step_ = static_cast<int>(get_scalar(table, "meta.step"));
}

// ---------------------------------------------------------------- loading

LoadedModel load_model(const std::string& checkpoint_path) {
  const auto table = load_checkpoint(checkpoint_path);
  LoadedModel m;
  m.config = parse_config(get_text(table, "meta.config"));
  m.step = static_cast<int>(get_scalar(table, "meta.step"));
  const std::string kind = get_text(table, "meta.kind");
  bool has_depth = false;
  for (const auto& [name, t] : table) has_depth |= name.rfind("depth.", 0) == 0;
  if (has_depth) {
    m.depth = std::make_shared<DepthNet<float>>(m.config.depth, 0);
    restore_params(table, m.depth->params());
    m.depth->params().set_trainable(false);
  }
  if (kind == "view") {
    m.view = std::make_unique<ViewNet<float>>(m.config.view, 0);
    restore_params(table, m.view->params());
    m.view->params().set_trainable(false);
  } else if (kind != "depth") {
    throw IoError("checkpoint " + checkpoint_path + " has unknown kind '" + kind + "'");
  }
  return m;
}

namespace {
std::string fmt(const char* f, auto... v) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, v...);
  return buf;
}
}  // namespace

std::string view_log_header() { return "step,lr,total,l1,perceptual,adv_g,ts_in,ts_out,d_loss"; }

std::string view_log_row(const ViewStepLog& l) {
  return fmt("%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", l.step + 1, l.lr, l.loss.total, l.loss.l1,
             l.loss.perceptual, l.loss.adversarial, l.loss.ts_in, l.loss.ts_out, l.d_loss);
}

std::string depth_log_header() { return "step,lr,total,reprojection,smoothness,kept_fraction"; }

std::string depth_log_row(const DepthStepLog& l) {
  return fmt("%d,%.9g,%.9g,%.9g,%.9g,%.9g", l.step + 1, l.lr, l.total, l.reprojection, l.smoothness, l.kept);
}

}  // namespace nvs
