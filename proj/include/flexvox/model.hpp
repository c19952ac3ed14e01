// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flexvox/autodiff.hpp"
#include "flexvox/condition.hpp"
#include "flexvox/tensor.hpp"

namespace flexvox {

// ------------------------------------------------------------------ specs

// Conditional autoencoder generator. The encoder is stages() blocks of
// [conv k=4 s=1 (same), leaky ReLU, maxpool 2]; the bottleneck flattens
// the 2^3 volume through two fully-connected layers to latent_dim, where
// the condition vector is concatenated; the decoder mirrors with
// transposed convolutions (k=4 s=2) and U-Net skip concatenations at
// matching spatial sizes, ending in a sigmoid. stages() = log2(n) - 1.
struct GeneratorSpec {
  int64_t n = 64;
  std::vector<int64_t> encoder_channels{64, 128, 256, 512, 512};
  int64_t latent_dim = 512;
  int64_t fc_hidden = 2048;
  int64_t condition_dim = kConditionLength;

  static GeneratorSpec for_resolution(int64_t n);

  int64_t stages() const;
  int64_t flatten_dim() const;  // channels at the 2^3 bottleneck * 8
  // Output channels of decoder layer d (0-based): the encoder widths
  // mirrored, ending in 1.
  int64_t decoder_out_channels(int64_t d) const;
  // Input channels of decoder layer d: previous output plus the skip
  // concatenation (layers 1..stages-1 fuse encoder activations).
  int64_t decoder_in_channels(int64_t d) const;

  void validate() const;
  uint64_t hash() const;
};

// Convolutional critic: stages() layers of [conv k=4 s=2, leaky ReLU],
// channels ending in 1, score = mean of the final 2^3 volume. The
// condition enters exactly once, as 11 constant mask channels concatenated
// to the input of layer condition_inject_layer (spatial size n/2). With
// wgan_critic the score is linear; the legacy mode applies a sigmoid.
struct DiscriminatorSpec {
  int64_t n = 64;
  std::vector<int64_t> channels{64, 128, 256, 512, 1};
  int condition_inject_layer = 2;  // 1-based
  bool wgan_critic = true;

  static DiscriminatorSpec for_resolution(int64_t n, bool wgan_critic = true);

  int64_t stages() const;
  int64_t mask_spatial() const { return n / 2; }

  void validate() const;
  uint64_t hash() const;
};

// ------------------------------------------------------------- parameters

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Generator {
  GeneratorSpec spec;
  std::vector<NamedTensor> params;
};

struct Discriminator {
  DiscriminatorSpec spec;
  std::vector<NamedTensor> params;
};

// Gaussian init (std 0.02) for weights, zeros for biases, from `seed`.
Generator make_generator(const GeneratorSpec& spec, uint64_t seed);
Discriminator make_discriminator(const DiscriminatorSpec& spec, uint64_t seed);

int64_t parameter_count(const std::vector<NamedTensor>& params);

// Parameters entered on a tape as leaves for one forward/backward pass.
struct BoundParams {
  std::vector<std::pair<std::string, autodiff::Var>> vars;
  const autodiff::Var& at(const std::string& name) const;
};

BoundParams bind_params(autodiff::Tape& tape, const std::vector<NamedTensor>& params,
                        bool requires_grad);

// ---------------------------------------------------------------- forward

// input: [B, 1, n, n, n] occupancy; cond: [B, 11] one-hot triple.
// Returns [B, 1, n, n, n] with every value strictly inside (0, 1).
autodiff::Var generator_forward(autodiff::Tape& tape, const GeneratorSpec& spec,
                                const BoundParams& params, const autodiff::Var& input,
                                const autodiff::Var& cond);

// grid: [B, 1, n, n, n]; cond_masks: [B, 11, n/2, n/2, n/2].
// Returns one score per sample, shape [B].
autodiff::Var discriminator_forward(autodiff::Tape& tape, const DiscriminatorSpec& spec,
                                    const BoundParams& params, const autodiff::Var& grid,
                                    const autodiff::Var& cond_masks);

// Convenience non-differentiating single-grid prediction.
Tensor generator_predict(const Generator& gen, const Tensor& input_grid,
                         const Condition& condition);

// ------------------------------------------------------------- checkpoint

// Single-file "FXCP" container: spec hashes, epoch/step/seed, then named
// little-endian f32 blocks with explicit shapes (model parameters under
// "g."/"d.", optimizer state under "opt.").
struct Checkpoint {
  uint64_t generator_hash = 0;
  uint64_t discriminator_hash = 0;
  uint32_t epoch = 0;
  uint64_t step = 0;
  uint64_t seed = 0;
  std::vector<NamedTensor> blocks;

  // Throws when a spec hash disagrees with the stored one.
  void check_specs(const GeneratorSpec& g, const DiscriminatorSpec& d) const;
};

// Append params under prefix + name.
void put_blocks(Checkpoint& ck, const std::string& prefix, const std::vector<NamedTensor>& params);
// Fill params from blocks by prefixed name; shapes must match exactly.
void get_blocks(const Checkpoint& ck, const std::string& prefix, std::vector<NamedTensor>& params);

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace flexvox
