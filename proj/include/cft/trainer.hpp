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

#ifndef CFT_TRAINER_HPP
#define CFT_TRAINER_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cft/image_store.hpp"
#include "cft/networks.hpp"
#include "json.hpp"

namespace cft {

struct CheckpointWindow {
  std::int64_t start = 300;
  std::int64_t end = 500;
  bool operator==(const CheckpointWindow&) const = default;
};

struct TrainConfig {
  std::int64_t patch_size = 256;
  std::int64_t stride = 60;
  int downscale = 2;
  double lambda_l1 = 50.0;
  double learning_rate = 1e-3;
  double lambda_gp = 10.0;
  double beta1 = 0.0;
  double beta2 = 0.9;
  int n_critic = 5;
  std::int64_t max_epochs = 500;
  std::int64_t max_steps = 0;  // 0: no cap beyond max_epochs
  CheckpointWindow checkpoint_window{};
  int n_ensemble = 9;
  std::uint64_t seed = 0;
  std::int64_t batch_size = 16;
  Group source = Group::kZero;
  Group target = Group::kOne;
  GeneratorConfig generator{};  // channels filled in from the dataset
  CriticConfig critic{};
  std::vector<std::string> channels;  // explicit selection; empty = all minus exclusions
  std::vector<std::string> exclude_channels = default_excluded_channels();
  int threads = 1;
  bool deterministic = true;

  /// Throws InvalidInput if any invariant is violated.
  void validate() const;
};

/// Unknown keys are rejected so typos in a config file fail loudly.
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base = {});
nlohmann::json to_json(const TrainConfig& config);

/// `count` epochs evenly spaced over [start, end], both ends included.
std::vector<std::int64_t> checkpoint_schedule(const CheckpointWindow& window, int count);

// ---------------------------------------------------------------------------
// Objectives. A critic is anything mapping a [B, C, p, p] batch to [B] scores,
// so analytic critics can be substituted in tests.

using CriticFn = std::function<torch::Tensor(const torch::Tensor&)>;

/// mean over samples of (||grad_x critic(x)||_2 - 1)^2, differentiable with
/// respect to the critic parameters.
torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& points);

/// Interpolates eps * real + (1 - eps) * fake with eps shaped [B, 1, 1, 1].
torch::Tensor interpolate(const torch::Tensor& real, const torch::Tensor& fake,
                          const torch::Tensor& eps);

struct CriticTerms {
  torch::Tensor total;        // float64 scalar: wasserstein + lambda_gp * penalty
  torch::Tensor wasserstein;  // mean D(fake) - mean D(real)
  torch::Tensor penalty;
};

CriticTerms critic_objective(const CriticFn& critic, const torch::Tensor& real,
                             const torch::Tensor& fake, const torch::Tensor& eps,
                             double lambda_gp);

struct GeneratorTerms {
  torch::Tensor total;        // float64 scalar: adversarial + l1
  torch::Tensor adversarial;  // -mean D(G(x))
  torch::Tensor l1;           // lambda * mean |G(x) - x|, per element
};

GeneratorTerms generator_objective(const CriticFn& critic, const torch::Tensor& source,
                                   const torch::Tensor& generated, double lambda_l1);

// ---------------------------------------------------------------------------

struct TelemetryRow {
  std::int64_t step = 0;  // 1-based generator update count
  std::int64_t epoch = 0;
  double critic_loss = 0.0;
  double wasserstein = 0.0;
  double gradient_penalty = 0.0;
  double generator_loss = 0.0;
  double adversarial = 0.0;
  double l1 = 0.0;
  std::optional<double> validation_l1;  // recorded on the last step of an epoch

  bool operator==(const TelemetryRow&) const = default;
};

std::string telemetry_csv_header();
std::string to_csv(const TelemetryRow& row);

struct CriticStepResult {
  double total = 0.0;
  double wasserstein = 0.0;
  double penalty = 0.0;
};

struct GeneratorStepResult {
  double total = 0.0;
  double adversarial = 0.0;
  double l1 = 0.0;
};

/// Owns both networks and their optimizers; one instance per training run.
class Trainer {
 public:
  Trainer(TrainConfig config, std::int64_t channels);

  /// One critic update on a target-group batch and a source-group batch of
  /// equal shape. The generator is run without gradient.
  CriticStepResult critic_step(const torch::Tensor& real_target, const torch::Tensor& source);

  /// One generator update on a source-group batch.
  GeneratorStepResult generator_step(const torch::Tensor& source);

  /// Mean |G(x) - x| over the patches; never touches parameters.
  double validation_l1(const torch::Tensor& patches);

  ResidualGenerator& generator() { return generator_; }
  Critic& critic() { return critic_; }
  const TrainConfig& config() const { return config_; }

 private:
  TrainConfig config_;
  std::int64_t channels_;
  ResidualGenerator generator_{nullptr};
  Critic critic_{nullptr};
  std::unique_ptr<torch::optim::Adam> gen_opt_;
  std::unique_ptr<torch::optim::Adam> critic_opt_;
  at::Generator eps_rng_;
};

struct Snapshot {
  std::int64_t epoch = 0;
  ResidualGenerator generator{nullptr};
};

struct TrainRun {
  TrainConfig config;
  std::vector<std::string> channel_names;
  ResidualGenerator generator{nullptr};
  Critic critic{nullptr};
  std::int64_t epochs_completed = 0;
  std::int64_t steps_completed = 0;
  std::vector<TelemetryRow> telemetry;
  std::vector<Snapshot> checkpoints;
};

struct TrainOptions {
  /// When set, config.json, telemetry.csv and checkpoints/ are written here.
  std::optional<std::filesystem::path> run_dir;
  std::function<void(const TelemetryRow&)> on_step;
};

/// [N, C, p, p] float tensor of every patch of the given images.
torch::Tensor patch_tensor(const std::vector<MultiChannelImage>& images, std::int64_t patch_size,
                           std::int64_t stride);

/// Loads, channel-selects and downscales every manifest image of `group`.
/// The validation image is skipped unless `include_validation`.
std::vector<MultiChannelImage> load_group(const DatasetManifest& manifest, Group group,
                                          const std::vector<std::string>& channels, int downscale,
                                          bool include_validation);

TrainRun train(const DatasetManifest& manifest, const TrainConfig& config,
               const TrainOptions& options = {});

/// Sets thread count and deterministic-algorithm mode for this process.
void configure_torch(const TrainConfig& config);

/// Copies parameters and buffers between two identically shaped modules.
void copy_state(const torch::nn::Module& from, torch::nn::Module& to);

std::string checkpoint_filename(std::int64_t epoch);

}  // namespace cft

#endif  // CFT_TRAINER_HPP
