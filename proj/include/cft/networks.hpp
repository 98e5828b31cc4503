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

#ifndef CFT_NETWORKS_HPP
#define CFT_NETWORKS_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"

namespace cft {

enum class NormKind { kInstance, kBatch, kNone };

NormKind norm_from_string(const std::string& s);
std::string to_string(NormKind kind);

/// What the residual map is added to before the sigmoid. `kInput` is
/// sigmoid(x + M(x)); `kLogit` is sigmoid(logit(x) + M(x)), which is the
/// identity while M is zero.
enum class ResidualBase { kInput, kLogit };

ResidualBase residual_base_from_string(const std::string& s);
std::string to_string(ResidualBase base);

/// Encoder-decoder residual map M: one level per entry of `widths`, max-pool
/// between levels, transposed-conv upsampling with skip concatenation, and a
/// zero-initialised 1x1 projection back to `channels`.
struct GeneratorConfig {
  std::int64_t channels = 1;
  std::vector<std::int64_t> widths{64, 128, 256, 512};
  int convs_per_level = 2;
  NormKind norm = NormKind::kInstance;
  ResidualBase base = ResidualBase::kInput;

  /// Number of 2x down-samplings; patch sides must be divisible by 2^depth.
  int depth() const { return static_cast<int>(widths.size()) - 1; }
  bool operator==(const GeneratorConfig&) const = default;
};

/// Stack of stride-2 4x4 convolutions with leaky ReLU, global average pool
/// and a linear head. No normalisation layers: the gradient penalty is
/// computed per sample.
struct CriticConfig {
  std::int64_t channels = 1;
  std::vector<std::int64_t> widths{64, 128, 256, 512, 512};
  double leak = 0.2;
  bool operator==(const CriticConfig&) const = default;
};

nlohmann::json to_json(const GeneratorConfig& c);
nlohmann::json to_json(const CriticConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j, std::int64_t channels);
CriticConfig critic_config_from_json(const nlohmann::json& j, std::int64_t channels);

/// G(x) = sigmoid(x + M(x)), clamped into the open interval (0, 1) so the
/// float32 result never rounds onto a boundary.
torch::Tensor compose_residual(const torch::Tensor& x, const torch::Tensor& residual_map,
                               ResidualBase base = ResidualBase::kInput);

class ResidualGeneratorImpl : public torch::nn::Module {
 public:
  explicit ResidualGeneratorImpl(GeneratorConfig config);

  /// M(x) for a [B, C, p, p] batch.
  torch::Tensor residual_map(const torch::Tensor& x);
  /// G(x) for a [B, C, p, p] batch.
  torch::Tensor forward(const torch::Tensor& x);

  const GeneratorConfig& config() const { return config_; }

 private:
  torch::nn::Sequential make_block(std::int64_t in, std::int64_t out);

  GeneratorConfig config_;
  std::vector<torch::nn::Sequential> encoder_;
  std::vector<torch::nn::ConvTranspose2d> upsample_;
  std::vector<torch::nn::Sequential> decoder_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(ResidualGenerator);

class CriticImpl : public torch::nn::Module {
 public:
  explicit CriticImpl(CriticConfig config);

  /// One unbounded score per sample: [B, C, p, p] -> [B].
  torch::Tensor forward(const torch::Tensor& x);

  const CriticConfig& config() const { return config_; }

 private:
  CriticConfig config_;
  torch::nn::Sequential features_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Critic);

/// Throws ShapeMismatch unless `patch_size` suits both architectures.
void check_patch_size(const GeneratorConfig& gen, std::int64_t patch_size);
void check_patch_size(const CriticConfig& critic, std::int64_t patch_size);

/// Accepts a single [C, p, p] patch or a [B, C, p, p] batch; output has the
/// input's rank.
torch::Tensor generate(ResidualGenerator& gen, const torch::Tensor& x);
torch::Tensor residual(ResidualGenerator& gen, const torch::Tensor& x);
/// [C, p, p] -> scalar tensor, [B, C, p, p] -> [B].
torch::Tensor criticize(Critic& critic, const torch::Tensor& x);

/// 64-bit FNV-1a digest over every parameter and buffer, in registration order.
std::uint64_t parameter_fingerprint(const torch::nn::Module& module);

// ---------------------------------------------------------------------------
// Checkpoint file: torch archive holding the parameters plus `meta.arch`
// (JSON architecture config), `meta.epoch` and `meta.format`.

constexpr std::int64_t kCheckpointFormat = 1;

void save_generator(const std::filesystem::path& path, ResidualGenerator& gen,
                    std::int64_t epoch);

struct LoadedGenerator {
  ResidualGenerator generator{nullptr};
  std::int64_t epoch = 0;
};

/// Loads a generator checkpoint; when `expected` is given, an architecture
/// mismatch throws ShapeMismatch before any tensor is read.
LoadedGenerator load_generator(const std::filesystem::path& path,
                               const GeneratorConfig* expected = nullptr);

void save_critic(const std::filesystem::path& path, Critic& critic, std::int64_t epoch);
Critic load_critic(const std::filesystem::path& path, const CriticConfig* expected = nullptr);

}  // namespace cft

#endif  // CFT_NETWORKS_HPP
