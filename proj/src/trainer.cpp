// Copyright 2026 The cf-translate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cft/trainer.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "cft/error.hpp"
#include "cft/patch_grid.hpp"

namespace cft {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidInput("invalid training config: " + what);
  };
  require(patch_size >= 1, "patch_size must be >= 1");
  require(stride >= 1, "stride must be >= 1");
  require(downscale >= 1, "downscale must be >= 1");
  require(lambda_l1 >= 0.0, "lambda_l1 must be >= 0");
  require(lambda_gp >= 0.0, "lambda_gp must be >= 0");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must lie in [0, 1)");
  require(n_critic >= 1, "n_critic must be >= 1");
  require(max_epochs >= 1, "max_epochs must be >= 1");
  require(max_steps >= 0, "max_steps must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(n_ensemble >= 1, "n_ensemble must be >= 1");
  require(threads >= 1, "threads must be >= 1");
  require(source != target, "direction must name two different groups");
  require(checkpoint_window.start >= 1 && checkpoint_window.start <= checkpoint_window.end,
          "checkpoint_window must satisfy 1 <= start <= end");
  require(checkpoint_window.end <= max_epochs,
          "checkpoint_window ends at epoch " + std::to_string(checkpoint_window.end) +
              ", beyond max_epochs " + std::to_string(max_epochs));
  checkpoint_schedule(checkpoint_window, n_ensemble);
}

std::vector<std::int64_t> checkpoint_schedule(const CheckpointWindow& window, int count) {
  if (count < 1) throw InvalidInput("checkpoint count must be >= 1");
  if (window.start > window.end) throw InvalidInput("checkpoint window start exceeds end");
  if (count == 1) return {window.end};
  const std::int64_t span = window.end - window.start;
  if (span % (count - 1) != 0) {
    throw InvalidInput(std::to_string(count) + " checkpoints do not fit evenly in epochs [" +
                       std::to_string(window.start) + ", " + std::to_string(window.end) + "]");
  }
  const std::int64_t gap = span / (count - 1);
  if (gap == 0) throw InvalidInput("checkpoint window too narrow for distinct epochs");
  std::vector<std::int64_t> out;
  for (int i = 0; i < count; ++i) out.push_back(window.start + i * gap);
  return out;
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& base) {
  static const std::set<std::string> kKeys = {
      "patch_size", "stride",      "downscale",  "lambda_l1",        "learning_rate",
      "lambda_gp",  "beta1",       "beta2",      "n_critic",         "max_epochs",
      "max_steps",  "n_ensemble",  "seed",       "batch_size",       "direction",
      "generator",  "critic",      "channels",   "exclude_channels", "threads",
      "deterministic", "checkpoint_window"};
  if (!j.is_object()) throw InvalidInput("training config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.count(key)) throw InvalidInput("unknown training config key '" + key + "'");
  }
  TrainConfig c = base;
  try {
    c.patch_size = j.value("patch_size", c.patch_size);
    c.stride = j.value("stride", c.stride);
    c.downscale = j.value("downscale", c.downscale);
    c.lambda_l1 = j.value("lambda_l1", c.lambda_l1);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.lambda_gp = j.value("lambda_gp", c.lambda_gp);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.n_critic = j.value("n_critic", c.n_critic);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.n_ensemble = j.value("n_ensemble", c.n_ensemble);
    c.seed = j.value("seed", c.seed);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.threads = j.value("threads", c.threads);
    c.deterministic = j.value("deterministic", c.deterministic);
    if (j.contains("checkpoint_window")) {
      const auto w = j.at("checkpoint_window").get<std::vector<std::int64_t>>();
      if (w.size() != 2) throw InvalidInput("checkpoint_window must be [start, end]");
      c.checkpoint_window = {w[0], w[1]};
    }
    if (j.contains("direction")) {
      const auto d = j.at("direction").get<std::vector<int>>();
      if (d.size() != 2) throw InvalidInput("direction must be [source, target]");
      c.source = group_from_int(d[0]);
      c.target = group_from_int(d[1]);
    }
    if (j.contains("generator")) {
      c.generator = generator_config_from_json(j.at("generator"), c.generator.channels);
    }
    if (j.contains("critic")) c.critic = critic_config_from_json(j.at("critic"), c.critic.channels);
    if (j.contains("channels")) c.channels = j.at("channels").get<std::vector<std::string>>();
    if (j.contains("exclude_channels")) {
      c.exclude_channels = j.at("exclude_channels").get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed training config: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"patch_size", c.patch_size},
          {"stride", c.stride},
          {"downscale", c.downscale},
          {"lambda_l1", c.lambda_l1},
          {"learning_rate", c.learning_rate},
          {"lambda_gp", c.lambda_gp},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"n_critic", c.n_critic},
          {"max_epochs", c.max_epochs},
          {"max_steps", c.max_steps},
          {"checkpoint_window", {c.checkpoint_window.start, c.checkpoint_window.end}},
          {"n_ensemble", c.n_ensemble},
          {"seed", c.seed},
          {"batch_size", c.batch_size},
          {"direction", {to_int(c.source), to_int(c.target)}},
          {"generator", to_json(c.generator)},
          {"critic", to_json(c.critic)},
          {"channels", c.channels},
          {"exclude_channels", c.exclude_channels},
          {"threads", c.threads},
          {"deterministic", c.deterministic}};
}

// ---------------------------------------------------------------------------

torch::Tensor interpolate(const torch::Tensor& real, const torch::Tensor& fake,
                          const torch::Tensor& eps) {
  return eps * real + (1 - eps) * fake;
}

torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& points) {
  auto x = points.detach().requires_grad_(true);
  const auto scores = critic(x);
  const auto batch = x.size(0);
  torch::Tensor grad;
  if (scores.requires_grad()) {
    grad = torch::autograd::grad({scores.sum()}, {x}, /*grad_outputs=*/{},
                                 /*retain_graph=*/true, /*create_graph=*/true,
                                 /*allow_unused=*/true)[0];
  }
  if (!grad.defined()) grad = torch::zeros_like(x);
  const auto norm = grad.reshape({batch, -1}).norm(2, 1);
  return (norm - 1).pow(2).mean();
}

CriticTerms critic_objective(const CriticFn& critic, const torch::Tensor& real,
                             const torch::Tensor& fake, const torch::Tensor& eps,
                             double lambda_gp) {
  if (real.sizes() != fake.sizes()) {
    throw ShapeMismatch("critic step needs real and generated batches of equal shape");
  }
  CriticTerms t;
  t.wasserstein = critic(fake).mean() - critic(real).mean();
  t.penalty = gradient_penalty(critic, interpolate(real, fake, eps));
  t.total = t.wasserstein.to(torch::kDouble) + lambda_gp * t.penalty.to(torch::kDouble);
  return t;
}

GeneratorTerms generator_objective(const CriticFn& critic, const torch::Tensor& source,
                                   const torch::Tensor& generated, double lambda_l1) {
  GeneratorTerms t;
  t.adversarial = -critic(generated).mean();
  t.l1 = lambda_l1 * (generated - source).abs().mean();
  t.total = t.adversarial.to(torch::kDouble) + t.l1.to(torch::kDouble);
  return t;
}

std::string telemetry_csv_header() {
  return "step,epoch,critic_loss,wasserstein,gradient_penalty,generator_loss,adversarial,l1,"
         "validation_l1";
}

std::string to_csv(const TelemetryRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%" PRId64 ",%" PRId64 ",%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,",
                r.step, r.epoch, r.critic_loss, r.wasserstein, r.gradient_penalty,
                r.generator_loss, r.adversarial, r.l1);
  std::string out = buf;
  if (r.validation_l1) {
    std::snprintf(buf, sizeof buf, "%.17g", *r.validation_l1);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------

void configure_torch(const TrainConfig& config) {
  torch::set_num_threads(config.threads);
  at::globalContext().setDeterministicAlgorithms(config.deterministic, /*warn_only=*/false);
}

void copy_state(const torch::nn::Module& from, torch::nn::Module& to) {
  torch::NoGradGuard no_grad;
  const auto src_p = from.named_parameters(true);
  auto dst_p = to.named_parameters(true);
  for (const auto& p : src_p) dst_p[p.key()].copy_(p.value());
  const auto src_b = from.named_buffers(true);
  auto dst_b = to.named_buffers(true);
  for (const auto& b : src_b) dst_b[b.key()].copy_(b.value());
}

std::string checkpoint_filename(std::int64_t epoch) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "generator_epoch_%04" PRId64 ".pt", epoch);
  return buf;
}

namespace {

void check_finite(double value, const char* what) {
  if (!std::isfinite(value)) {
    throw NonFiniteLoss(std::string(what) + " became non-finite (" + std::to_string(value) +
                        "); try a lower learning rate or a larger gradient-penalty weight");
  }
}

}  // namespace

Trainer::Trainer(TrainConfig config, std::int64_t channels)
    : config_(std::move(config)), channels_(channels),
      eps_rng_(at::detail::createCPUGenerator(config_.seed ^ 0x9e3779b97f4a7c15ULL)) {
  config_.validate();
  config_.generator.channels = channels;
  config_.critic.channels = channels;
  check_patch_size(config_.generator, config_.patch_size);
  check_patch_size(config_.critic, config_.patch_size);
  torch::manual_seed(config_.seed);
  generator_ = ResidualGenerator(config_.generator);
  critic_ = Critic(config_.critic);
  const auto opts = torch::optim::AdamOptions(config_.learning_rate)
                        .betas({config_.beta1, config_.beta2});
  gen_opt_ = std::make_unique<torch::optim::Adam>(generator_->parameters(), opts);
  critic_opt_ = std::make_unique<torch::optim::Adam>(critic_->parameters(), opts);
}

CriticStepResult Trainer::critic_step(const torch::Tensor& real_target,
                                      const torch::Tensor& source) {
  if (real_target.sizes() != source.sizes()) {
    throw ShapeMismatch("critic step needs equally shaped target and source batches");
  }
  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    fake = generate(generator_, source);
  }
  const auto eps = torch::rand({source.size(0), 1, 1, 1}, eps_rng_);
  const CriticFn fn = [this](const torch::Tensor& x) { return criticize(critic_, x); };
  const auto terms = critic_objective(fn, real_target, fake, eps, config_.lambda_gp);
  CriticStepResult out{terms.total.item<double>(), terms.wasserstein.item<double>(),
                       terms.penalty.item<double>()};
  check_finite(out.total, "critic loss");
  critic_opt_->zero_grad();
  terms.total.backward();
  critic_opt_->step();
  return out;
}

GeneratorStepResult Trainer::generator_step(const torch::Tensor& source) {
  const auto generated = generate(generator_, source);
  const CriticFn fn = [this](const torch::Tensor& x) { return criticize(critic_, x); };
  const auto terms = generator_objective(fn, source, generated, config_.lambda_l1);
  GeneratorStepResult out{terms.total.item<double>(), terms.adversarial.item<double>(),
                          terms.l1.item<double>()};
  check_finite(out.total, "generator loss");
  gen_opt_->zero_grad();
  terms.total.backward();
  gen_opt_->step();
  return out;
}

double Trainer::validation_l1(const torch::Tensor& patches) {
  torch::NoGradGuard no_grad;
  const bool was_training = generator_->is_training();
  generator_->eval();
  double sum = 0.0;
  const auto n = patches.size(0);
  const auto b = std::max<std::int64_t>(1, config_.batch_size);
  for (std::int64_t i = 0; i < n; i += b) {
    const auto batch = patches.slice(0, i, std::min(n, i + b));
    sum += (generate(generator_, batch) - batch).abs().sum().item<double>();
  }
  generator_->train(was_training);
  return sum / static_cast<double>(patches.numel());
}

// ---------------------------------------------------------------------------

torch::Tensor patch_tensor(const std::vector<MultiChannelImage>& images, std::int64_t patch_size,
                           std::int64_t stride) {
  if (images.empty()) throw InvalidInput("no images to cut into patches");
  const auto c = images.front().channels();
  std::int64_t total = 0;
  std::vector<PatchGrid> grids;
  for (const auto& img : images) {
    if (img.channels() != c) throw ShapeMismatch("images disagree on channel count");
    grids.push_back(build_grid(img.height(), img.width(), patch_size, stride));
    total += static_cast<std::int64_t>(grids.back().size());
  }
  auto out = torch::empty({total, c, patch_size, patch_size}, torch::kFloat32);
  const auto len = c * patch_size * patch_size;
  float* base = out.data_ptr<float>();
  std::int64_t n = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t k = 0; k < grids[i].size(); ++k, ++n) {
      extract_into(images[i], grids[i], k,
                   std::span<float>(base + n * len, static_cast<std::size_t>(len)));
    }
  }
  return out;
}

std::vector<MultiChannelImage> load_group(const DatasetManifest& manifest, Group group,
                                          const std::vector<std::string>& channels, int factor,
                                          bool include_validation) {
  std::vector<MultiChannelImage> out;
  for (const auto* e : manifest.group_entries(group)) {
    if (e->validation && !include_validation) continue;
    const auto img = manifest.load_image(*e);
    out.push_back(downscale(select_channels(img, channels), factor));
  }
  return out;
}

namespace {

/// Endless stream of indices in [0, n), reshuffled after each pass.
class IndexStream {
 public:
  IndexStream(std::int64_t n, std::uint64_t seed) : perm_(static_cast<std::size_t>(n)), rng_(seed) {
    std::iota(perm_.begin(), perm_.end(), 0);
    std::shuffle(perm_.begin(), perm_.end(), rng_);
  }

  torch::Tensor next(std::int64_t count) {
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(count));
    while (static_cast<std::int64_t>(out.size()) < count) {
      if (pos_ == perm_.size()) {
        std::shuffle(perm_.begin(), perm_.end(), rng_);
        pos_ = 0;
      }
      out.push_back(perm_[pos_++]);
    }
    return torch::tensor(out, torch::kInt64);
  }

 private:
  std::vector<std::int64_t> perm_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

}  // namespace

TrainRun train(const DatasetManifest& manifest, const TrainConfig& input_config,
               const TrainOptions& options) {
  TrainConfig config = input_config;
  config.validate();
  manifest.validate(true);
  configure_torch(config);

  const auto channels =
      resolve_channel_selection(manifest.channel_names, config.channels, config.exclude_channels);
  const auto c = static_cast<std::int64_t>(channels.size());
  config.generator.channels = c;
  config.critic.channels = c;

  const auto h = manifest.height / config.downscale;
  const auto w = manifest.width / config.downscale;
  if (config.patch_size > h || config.patch_size > w) {
    throw InvalidInput("patch size " + std::to_string(config.patch_size) +
                       " exceeds the downscaled image size " + std::to_string(h) + "x" +
                       std::to_string(w));
  }

  const auto source_images = load_group(manifest, config.source, channels, config.downscale, false);
  const auto target_images = load_group(manifest, config.target, channels, config.downscale, false);
  if (source_images.empty()) {
    throw InvalidInput("empty group: no training images in source group " +
                       std::to_string(to_int(config.source)));
  }
  if (target_images.empty()) {
    throw InvalidInput("empty group: no training images in target group " +
                       std::to_string(to_int(config.target)));
  }
  const auto source = patch_tensor(source_images, config.patch_size, config.stride);
  const auto target = patch_tensor(target_images, config.patch_size, config.stride);

  std::optional<torch::Tensor> validation;
  if (const auto* v = manifest.validation_entry()) {
    const auto img = downscale(select_channels(manifest.load_image(*v), channels), config.downscale);
    validation = patch_tensor({img}, config.patch_size, config.stride);
  }

  const auto batch = std::min({config.batch_size, source.size(0), target.size(0)});
  const auto steps_per_epoch = std::max<std::int64_t>(1, source.size(0) / batch);
  const auto schedule = checkpoint_schedule(config.checkpoint_window, config.n_ensemble);
  if (config.max_steps > 0) {
    const auto reachable = std::min(config.max_epochs, config.max_steps / steps_per_epoch);
    if (schedule.back() > reachable) {
      throw InvalidInput("checkpoint window ends at epoch " + std::to_string(schedule.back()) +
                         " but max_steps=" + std::to_string(config.max_steps) + " at " +
                         std::to_string(steps_per_epoch) + " steps per epoch completes only " +
                         std::to_string(reachable) + " epochs");
    }
  }

  std::ofstream telemetry_file;
  if (options.run_dir) {
    fs::create_directories(*options.run_dir / "checkpoints");
    json resolved = to_json(config);
    resolved["resolved_channels"] = channels;
    std::ofstream(*options.run_dir / "config.json") << resolved.dump(2) << '\n';
    telemetry_file.open(*options.run_dir / "telemetry.csv");
    if (!telemetry_file) throw IoError("cannot write telemetry in " + options.run_dir->string());
    telemetry_file << telemetry_csv_header() << '\n';
  }

  Trainer trainer(config, c);
  std::mt19937_64 shuffle_rng(config.seed);
  IndexStream source_stream(source.size(0), config.seed + 1);
  IndexStream target_stream(target.size(0), config.seed + 2);
  std::vector<std::int64_t> order(static_cast<std::size_t>(source.size(0)));
  std::iota(order.begin(), order.end(), 0);

  TrainRun run;
  run.config = config;
  run.channel_names = channels;
  trainer.generator()->train();
  trainer.critic()->train();

  bool done = false;
  for (std::int64_t epoch = 1; epoch <= config.max_epochs && !done; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::int64_t b = 0; b < steps_per_epoch; ++b) {
      CriticStepResult cr;
      for (int k = 0; k < config.n_critic; ++k) {
        cr = trainer.critic_step(target.index_select(0, target_stream.next(batch)),
                                 source.index_select(0, source_stream.next(batch)));
      }
      const auto begin = order.begin() + b * batch;
      const auto idx = torch::tensor(std::vector<std::int64_t>(begin, begin + batch), torch::kInt64);
      const auto gr = trainer.generator_step(source.index_select(0, idx));

      TelemetryRow row;
      row.step = ++run.steps_completed;
      row.epoch = epoch;
      row.critic_loss = cr.total;
      row.wasserstein = cr.wasserstein;
      row.gradient_penalty = cr.penalty;
      row.generator_loss = gr.total;
      row.adversarial = gr.adversarial;
      row.l1 = gr.l1;
      const bool epoch_end = b + 1 == steps_per_epoch;
      if (epoch_end && validation) row.validation_l1 = trainer.validation_l1(*validation);
      run.telemetry.push_back(row);
      if (telemetry_file.is_open()) telemetry_file << to_csv(row) << '\n';
      if (options.on_step) options.on_step(row);

      if (config.max_steps > 0 && run.steps_completed >= config.max_steps) {
        done = true;
        if (!epoch_end) break;
      }
    }
    if (done && run.steps_completed % steps_per_epoch != 0) break;
    run.epochs_completed = epoch;
    if (std::find(schedule.begin(), schedule.end(), epoch) != schedule.end()) {
      Snapshot snap{epoch, ResidualGenerator(trainer.generator()->config())};
      copy_state(*trainer.generator(), *snap.generator);
      snap.generator->eval();
      if (options.run_dir) {
        save_generator(*options.run_dir / "checkpoints" / checkpoint_filename(epoch),
                       snap.generator, epoch);
      }
      run.checkpoints.push_back(std::move(snap));
    }
    if (telemetry_file.is_open()) telemetry_file.flush();
  }

  run.generator = trainer.generator();
  run.critic = trainer.critic();
  if (options.run_dir) {
    save_generator(*options.run_dir / "checkpoints" / "generator_final.pt", run.generator,
                   run.epochs_completed);
    save_critic(*options.run_dir / "checkpoints" / "critic_final.pt", run.critic,
                run.epochs_completed);
  }
  return run;
}

}  // namespace cft
