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

#include "cft/networks.hpp"

#include <cstring>
#include <limits>

#include "cft/error.hpp"

namespace cft {

namespace nn = torch::nn;
using nlohmann::json;

NormKind norm_from_string(const std::string& s) {
  if (s == "instance") return NormKind::kInstance;
  if (s == "batch") return NormKind::kBatch;
  if (s == "none") return NormKind::kNone;
  throw InvalidInput("unknown normalisation '" + s + "' (expected instance, batch or none)");
}

std::string to_string(NormKind kind) {
  switch (kind) {
    case NormKind::kInstance: return "instance";
    case NormKind::kBatch: return "batch";
    case NormKind::kNone: return "none";
  }
  return "none";
}

ResidualBase residual_base_from_string(const std::string& s) {
  if (s == "input") return ResidualBase::kInput;
  if (s == "logit") return ResidualBase::kLogit;
  throw InvalidInput("unknown residual base '" + s + "' (expected input or logit)");
}

std::string to_string(ResidualBase base) {
  return base == ResidualBase::kLogit ? "logit" : "input";
}

json to_json(const GeneratorConfig& c) {
  return {{"channels", c.channels},
          {"widths", c.widths},
          {"convs_per_level", c.convs_per_level},
          {"norm", to_string(c.norm)},
          {"base", to_string(c.base)}};
}

json to_json(const CriticConfig& c) {
  return {{"channels", c.channels}, {"widths", c.widths}, {"leak", c.leak}};
}

GeneratorConfig generator_config_from_json(const json& j, std::int64_t channels) {
  GeneratorConfig c;
  c.channels = j.value("channels", channels);
  c.widths = j.value("widths", c.widths);
  c.convs_per_level = j.value("convs_per_level", c.convs_per_level);
  c.norm = norm_from_string(j.value("norm", to_string(c.norm)));
  c.base = residual_base_from_string(j.value("base", to_string(c.base)));
  if (c.widths.empty()) throw InvalidInput("generator needs at least one level");
  if (c.convs_per_level < 1) throw InvalidInput("generator needs at least one conv per level");
  return c;
}

CriticConfig critic_config_from_json(const json& j, std::int64_t channels) {
  CriticConfig c;
  c.channels = j.value("channels", channels);
  c.widths = j.value("widths", c.widths);
  c.leak = j.value("leak", c.leak);
  if (c.widths.empty()) throw InvalidInput("critic needs at least one block");
  return c;
}

torch::Tensor compose_residual(const torch::Tensor& x, const torch::Tensor& residual_map,
                               ResidualBase base) {
  constexpr double kLow = std::numeric_limits<float>::min();
  constexpr double kHigh = 1.0 - 1.0 / (1 << 24);  // largest float below 1
  if (base == ResidualBase::kLogit) {
    return torch::sigmoid(torch::logit(x, 1e-6) + residual_map).clamp(kLow, kHigh);
  }
  return torch::sigmoid(x + residual_map).clamp(kLow, kHigh);
}

// ---------------------------------------------------------------------------

ResidualGeneratorImpl::ResidualGeneratorImpl(GeneratorConfig config) : config_(std::move(config)) {
  if (config_.channels < 1) throw InvalidInput("generator needs at least one channel");
  const auto& w = config_.widths;
  std::int64_t in = config_.channels;
  for (std::size_t l = 0; l < w.size(); ++l) {
    encoder_.push_back(register_module("enc" + std::to_string(l), make_block(in, w[l])));
    in = w[l];
  }
  for (std::size_t l = w.size() - 1; l-- > 0;) {
    upsample_.push_back(register_module(
        "up" + std::to_string(l),
        nn::ConvTranspose2d(nn::ConvTranspose2dOptions(w[l + 1], w[l], 2).stride(2))));
    decoder_.push_back(register_module("dec" + std::to_string(l), make_block(2 * w[l], w[l])));
  }
  head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(w.front(), config_.channels, 1)));
  torch::NoGradGuard no_grad;
  head_->weight.zero_();
  head_->bias.zero_();
}

nn::Sequential ResidualGeneratorImpl::make_block(std::int64_t in, std::int64_t out) {
  nn::Sequential block;
  for (int i = 0; i < config_.convs_per_level; ++i) {
    block->push_back(nn::Conv2d(nn::Conv2dOptions(i == 0 ? in : out, out, 3).padding(1)));
    switch (config_.norm) {
      case NormKind::kInstance:
        block->push_back(nn::InstanceNorm2d(nn::InstanceNorm2dOptions(out).affine(true)));
        break;
      case NormKind::kBatch:
        block->push_back(nn::BatchNorm2d(out));
        break;
      case NormKind::kNone:
        break;
    }
    block->push_back(nn::ReLU());
  }
  return block;
}

torch::Tensor ResidualGeneratorImpl::residual_map(const torch::Tensor& x) {
  std::vector<torch::Tensor> skips;
  auto h = x;
  for (std::size_t l = 0; l < encoder_.size(); ++l) {
    if (l > 0) h = torch::max_pool2d(h, 2);
    h = encoder_[l]->forward(h);
    skips.push_back(h);
  }
  for (std::size_t u = 0; u < upsample_.size(); ++u) {
    const auto& skip = skips[skips.size() - 2 - u];
    h = upsample_[u]->forward(h);
    h = decoder_[u]->forward(torch::cat({h, skip}, 1));
  }
  return head_->forward(h);
}

torch::Tensor ResidualGeneratorImpl::forward(const torch::Tensor& x) {
  return compose_residual(x, residual_map(x), config_.base);
}

CriticImpl::CriticImpl(CriticConfig config) : config_(std::move(config)) {
  if (config_.channels < 1) throw InvalidInput("critic needs at least one channel");
  std::int64_t in = config_.channels;
  for (const auto w : config_.widths) {
    features_->push_back(nn::Conv2d(nn::Conv2dOptions(in, w, 4).stride(2).padding(1)));
    features_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(config_.leak)));
    in = w;
  }
  register_module("features", features_);
  head_ = register_module("head", nn::Linear(in, 1));
}

torch::Tensor CriticImpl::forward(const torch::Tensor& x) {
  auto h = features_->forward(x);
  h = h.mean({2, 3});
  return head_->forward(h).squeeze(1);
}

// ---------------------------------------------------------------------------

void check_patch_size(const GeneratorConfig& gen, std::int64_t patch_size) {
  const std::int64_t unit = std::int64_t{1} << gen.depth();
  if (patch_size < unit || patch_size % unit != 0) {
    throw ShapeMismatch("patch size " + std::to_string(patch_size) +
                        " must be a positive multiple of " + std::to_string(unit) +
                        " for a generator with " + std::to_string(gen.widths.size()) + " levels");
  }
}

void check_patch_size(const CriticConfig& critic, std::int64_t patch_size) {
  const std::int64_t unit = std::int64_t{1} << critic.widths.size();
  if (patch_size < unit) {
    throw ShapeMismatch("patch size " + std::to_string(patch_size) + " is below " +
                        std::to_string(unit) + ", the minimum for a critic with " +
                        std::to_string(critic.widths.size()) + " strided blocks");
  }
}

namespace {

torch::Tensor as_batch(const torch::Tensor& x, std::int64_t channels, const char* what) {
  if (x.dim() != 3 && x.dim() != 4) {
    throw ShapeMismatch(std::string(what) + " expects [C, p, p] or [B, C, p, p] input");
  }
  auto b = x.dim() == 3 ? x.unsqueeze(0) : x;
  if (b.size(1) != channels) {
    throw ShapeMismatch(std::string(what) + " configured for " + std::to_string(channels) +
                        " channels, got " + std::to_string(b.size(1)));
  }
  if (b.size(2) != b.size(3)) throw ShapeMismatch(std::string(what) + " expects square patches");
  return b;
}

}  // namespace

torch::Tensor generate(ResidualGenerator& gen, const torch::Tensor& x) {
  auto b = as_batch(x, gen->config().channels, "generator");
  check_patch_size(gen->config(), b.size(2));
  auto y = gen->forward(b);
  return x.dim() == 3 ? y.squeeze(0) : y;
}

torch::Tensor residual(ResidualGenerator& gen, const torch::Tensor& x) {
  constexpr double kBound = 1.0 - 1.0 / (1 << 24);
  return (generate(gen, x) - x).clamp(-kBound, kBound);
}

torch::Tensor criticize(Critic& critic, const torch::Tensor& x) {
  auto b = as_batch(x, critic->config().channels, "critic");
  check_patch_size(critic->config(), b.size(2));
  auto s = critic->forward(b);
  return x.dim() == 3 ? s.squeeze(0) : s;
}

std::uint64_t parameter_fingerprint(const torch::nn::Module& module) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  auto absorb = [&](const std::string& name, const torch::Tensor& t) {
    mix(name.data(), name.size());
    const auto c = t.detach().to(torch::kCPU).contiguous();
    mix(c.data_ptr(), static_cast<std::size_t>(c.numel()) * c.element_size());
  };
  for (const auto& p : module.named_parameters(true)) absorb(p.key(), p.value());
  for (const auto& b : module.named_buffers(true)) absorb(b.key(), b.value());
  return h;
}

// ---------------------------------------------------------------------------

namespace {

void write_meta(torch::serialize::OutputArchive& archive, const std::string& kind,
                const json& arch, std::int64_t epoch) {
  archive.write("meta.kind", c10::IValue(kind));
  archive.write("meta.arch", c10::IValue(arch.dump()));
  archive.write("meta.epoch", c10::IValue(epoch));
  archive.write("meta.format", c10::IValue(kCheckpointFormat));
}

struct Meta {
  json arch;
  std::int64_t epoch = 0;
};

Meta read_meta(torch::serialize::InputArchive& archive, const std::filesystem::path& path,
               const std::string& kind) {
  c10::IValue v;
  if (!archive.try_read("meta.format", v) || v.toInt() != kCheckpointFormat) {
    throw InvalidInput(path.string() + " is not a checkpoint in format " +
                       std::to_string(kCheckpointFormat));
  }
  archive.read("meta.kind", v);
  if (v.toStringRef() != kind) {
    throw InvalidInput(path.string() + " holds a " + v.toStringRef() + ", expected a " + kind);
  }
  Meta m;
  archive.read("meta.arch", v);
  m.arch = json::parse(v.toStringRef());
  archive.read("meta.epoch", v);
  m.epoch = v.toInt();
  return m;
}

torch::serialize::InputArchive open_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("missing checkpoint " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw InvalidInput("unreadable checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  return archive;
}

}  // namespace

void save_generator(const std::filesystem::path& path, ResidualGenerator& gen, std::int64_t epoch) {
  torch::serialize::OutputArchive archive;
  gen->save(archive);
  write_meta(archive, "generator", to_json(gen->config()), epoch);
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  archive.save_to(path.string());
}

LoadedGenerator load_generator(const std::filesystem::path& path, const GeneratorConfig* expected) {
  auto archive = open_archive(path);
  const auto meta = read_meta(archive, path, "generator");
  const auto config = generator_config_from_json(meta.arch, 0);
  if (expected && !(config == *expected)) {
    throw ShapeMismatch("incompatible checkpoint architecture in " + path.string() + ": file has " +
                        meta.arch.dump() + ", expected " + to_json(*expected).dump());
  }
  LoadedGenerator out{ResidualGenerator(config), meta.epoch};
  out.generator->load(archive);
  return out;
}

void save_critic(const std::filesystem::path& path, Critic& critic, std::int64_t epoch) {
  torch::serialize::OutputArchive archive;
  critic->save(archive);
  write_meta(archive, "critic", to_json(critic->config()), epoch);
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  archive.save_to(path.string());
}

Critic load_critic(const std::filesystem::path& path, const CriticConfig* expected) {
  auto archive = open_archive(path);
  const auto meta = read_meta(archive, path, "critic");
  const auto config = critic_config_from_json(meta.arch, 0);
  if (expected && !(config == *expected)) {
    throw ShapeMismatch("incompatible checkpoint architecture in " + path.string());
  }
  Critic critic(config);
  critic->load(archive);
  return critic;
}

}  // namespace cft
