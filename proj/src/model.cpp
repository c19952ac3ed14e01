// SPDX-FileCopyrightText: 2026 flexvox contributors
// SPDX-License-Identifier: Apache-2.0

#include "flexvox/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "flexvox/prng.hpp"

namespace flexvox {

using autodiff::Tape;
using autodiff::Var;
using kernels::Conv3dGeom;

namespace {

constexpr float kLeakySlope = 0.2f;
constexpr float kInitStd = 0.02f;

int64_t log2_exact(int64_t n) {
  int64_t s = 0;
  while ((int64_t{1} << s) < n) ++s;
  return s;
}

void check_resolution(int64_t n, const char* who) {
  if (n != 16 && n != 32 && n != 64)
    throw std::invalid_argument(std::string(who) + ": resolution must be 16, 32, or 64, got " +
                                std::to_string(n));
}

uint64_t hash_string(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace

// ------------------------------------------------------------------ specs

GeneratorSpec GeneratorSpec::for_resolution(int64_t n) {
  check_resolution(n, "GeneratorSpec");
  GeneratorSpec spec;
  spec.n = n;
  const std::vector<int64_t> base{64, 128, 256, 512, 512};
  spec.encoder_channels.assign(base.begin(), base.begin() + (log2_exact(n) - 1));
  spec.latent_dim = 512 * n / 64;
  spec.fc_hidden = 2048 * n / 64;
  return spec;
}

int64_t GeneratorSpec::stages() const { return log2_exact(n) - 1; }

int64_t GeneratorSpec::flatten_dim() const { return encoder_channels.back() * 8; }

int64_t GeneratorSpec::decoder_out_channels(int64_t d) const {
  const int64_t s = stages();
  if (d == s - 1) return 1;
  return encoder_channels[static_cast<size_t>(s - 2 - d)];
}

int64_t GeneratorSpec::decoder_in_channels(int64_t d) const {
  if (d == 0) return encoder_channels.back();
  // Skip concatenation: decoder layer d also sees the encoder's pre-pool
  // activation with matching spatial size (channels encoder_channels[S-d]).
  return decoder_out_channels(d - 1) + encoder_channels[static_cast<size_t>(stages() - d)];
}

void GeneratorSpec::validate() const {
  check_resolution(n, "GeneratorSpec");
  if (static_cast<int64_t>(encoder_channels.size()) != stages())
    throw std::invalid_argument("GeneratorSpec: expected " + std::to_string(stages()) +
                                " encoder channels for resolution " + std::to_string(n));
  for (int64_t c : encoder_channels)
    if (c < 1) throw std::invalid_argument("GeneratorSpec: encoder channels must be positive");
  if (latent_dim < 1) throw std::invalid_argument("GeneratorSpec: latent_dim must be positive");
  if (fc_hidden < 1) throw std::invalid_argument("GeneratorSpec: fc_hidden must be positive");
  if (condition_dim != kConditionLength)
    throw std::invalid_argument("GeneratorSpec: condition_dim must be " +
                                std::to_string(kConditionLength));
}

uint64_t GeneratorSpec::hash() const {
  std::string s = "G|n=" + std::to_string(n) + "|ch=";
  for (int64_t c : encoder_channels) s += std::to_string(c) + ",";
  s += "|latent=" + std::to_string(latent_dim) + "|fc=" + std::to_string(fc_hidden) +
       "|cond=" + std::to_string(condition_dim);
  return hash_string(s);
}

DiscriminatorSpec DiscriminatorSpec::for_resolution(int64_t n, bool wgan_critic) {
  check_resolution(n, "DiscriminatorSpec");
  DiscriminatorSpec spec;
  spec.n = n;
  const std::vector<int64_t> base{64, 128, 256, 512};
  const int64_t s = log2_exact(n) - 1;
  spec.channels.assign(base.begin(), base.begin() + (s - 1));
  spec.channels.push_back(1);
  spec.wgan_critic = wgan_critic;
  return spec;
}

int64_t DiscriminatorSpec::stages() const { return log2_exact(n) - 1; }

void DiscriminatorSpec::validate() const {
  check_resolution(n, "DiscriminatorSpec");
  if (static_cast<int64_t>(channels.size()) != stages())
    throw std::invalid_argument("DiscriminatorSpec: expected " + std::to_string(stages()) +
                                " channels for resolution " + std::to_string(n));
  for (int64_t c : channels)
    if (c < 1) throw std::invalid_argument("DiscriminatorSpec: channels must be positive");
  if (channels.back() != 1)
    throw std::invalid_argument("DiscriminatorSpec: final layer must have one channel");
  if (condition_inject_layer < 2 || condition_inject_layer > stages())
    throw std::invalid_argument(
        "DiscriminatorSpec: condition_inject_layer outside [2, stages]");
}

uint64_t DiscriminatorSpec::hash() const {
  std::string s = "D|n=" + std::to_string(n) + "|ch=";
  for (int64_t c : channels) s += std::to_string(c) + ",";
  s += "|inject=" + std::to_string(condition_inject_layer) +
       "|wgan=" + std::to_string(wgan_critic ? 1 : 0);
  return hash_string(s);
}

// ------------------------------------------------------------- parameters

namespace {

Tensor gaussian(const std::vector<int64_t>& shape, Prng& rng, float std_dev) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<float>(rng.normal()) * std_dev;
  return t;
}

void add_conv_layer(std::vector<NamedTensor>& out, Prng& rng, const std::string& name,
                    int64_t cout, int64_t cin) {
  out.push_back({name + ".w", gaussian({cout, cin, 4, 4, 4}, rng, kInitStd)});
  out.push_back({name + ".b", Tensor({cout}, 0.0f)});
}

void add_fc_layer(std::vector<NamedTensor>& out, Prng& rng, const std::string& name,
                  int64_t in, int64_t out_dim) {
  out.push_back({name + ".w", gaussian({in, out_dim}, rng, kInitStd)});
  out.push_back({name + ".b", Tensor({out_dim}, 0.0f)});
}

}  // namespace

Generator make_generator(const GeneratorSpec& spec, uint64_t seed) {
  spec.validate();
  Generator gen;
  gen.spec = spec;
  Prng rng(mix_seed(seed, fnv1a64("generator-init", 14)));
  const int64_t s = spec.stages();
  for (int64_t e = 0; e < s; ++e)
    add_conv_layer(gen.params, rng, "enc" + std::to_string(e + 1), spec.encoder_channels[e],
                   e == 0 ? 1 : spec.encoder_channels[e - 1]);
  add_fc_layer(gen.params, rng, "fc1", spec.flatten_dim(), spec.fc_hidden);
  add_fc_layer(gen.params, rng, "fc2", spec.fc_hidden, spec.latent_dim);
  add_fc_layer(gen.params, rng, "fc3", spec.latent_dim + spec.condition_dim, spec.flatten_dim());
  for (int64_t d = 0; d < s; ++d) {
    // Transposed-conv weight layout is [in_ch, out_ch, 4, 4, 4]: the weight
    // of the stride-2 forward conv being transposed.
    const std::string name = "dec" + std::to_string(d + 1);
    gen.params.push_back(
        {name + ".w",
         gaussian({spec.decoder_in_channels(d), spec.decoder_out_channels(d), 4, 4, 4}, rng,
                  kInitStd)});
    gen.params.push_back({name + ".b", Tensor({spec.decoder_out_channels(d)}, 0.0f)});
  }
  return gen;
}

Discriminator make_discriminator(const DiscriminatorSpec& spec, uint64_t seed) {
  spec.validate();
  Discriminator disc;
  disc.spec = spec;
  Prng rng(mix_seed(seed, fnv1a64("discriminator-init", 18)));
  for (int64_t l = 0; l < spec.stages(); ++l) {
    int64_t cin = l == 0 ? 1 : spec.channels[l - 1];
    if (l + 1 == spec.condition_inject_layer) cin += kConditionLength;
    add_conv_layer(disc.params, rng, "conv" + std::to_string(l + 1), spec.channels[l], cin);
  }
  return disc;
}

int64_t parameter_count(const std::vector<NamedTensor>& params) {
  int64_t total = 0;
  for (const NamedTensor& p : params) total += p.value.numel();
  return total;
}

const Var& BoundParams::at(const std::string& name) const {
  for (const auto& [n, v] : vars)
    if (n == name) return v;
  throw std::invalid_argument("BoundParams: no parameter named " + name);
}

BoundParams bind_params(Tape& tape, const std::vector<NamedTensor>& params, bool requires_grad) {
  BoundParams bound;
  bound.vars.reserve(params.size());
  for (const NamedTensor& p : params) bound.vars.emplace_back(p.name, tape.leaf(p.value, requires_grad));
  return bound;
}

// ---------------------------------------------------------------- forward

namespace {

void check_5d(const Tensor& t, int64_t channels, int64_t spatial, const char* who,
              const char* what) {
  const bool ok = t.rank() == 5 && t.dim(1) == channels && t.dim(2) == spatial &&
                  t.dim(3) == spatial && t.dim(4) == spatial && t.dim(0) >= 1;
  if (!ok)
    throw std::invalid_argument(std::string(who) + ": " + what + " expected [B," +
                                std::to_string(channels) + "," + std::to_string(spatial) + "," +
                                std::to_string(spatial) + "," + std::to_string(spatial) +
                                "], got " + t.shape_str());
}

Conv3dGeom same_conv_geom(int64_t batch, int64_t cin, int64_t cout, int64_t spatial) {
  Conv3dGeom g;
  g.batch = batch;
  g.cin = cin;
  g.cout = cout;
  g.in_d = g.in_h = g.in_w = spatial;
  g.k = 4;
  g.stride = 1;
  g.pad_lo = 1;
  g.pad_hi = 2;  // even kernel: same-size output needs asymmetric padding
  return g;
}

Conv3dGeom down_conv_geom(int64_t batch, int64_t cin, int64_t cout, int64_t in_spatial) {
  Conv3dGeom g;
  g.batch = batch;
  g.cin = cin;
  g.cout = cout;
  g.in_d = g.in_h = g.in_w = in_spatial;
  g.k = 4;
  g.stride = 2;
  g.pad_lo = 1;
  g.pad_hi = 1;
  return g;
}

}  // namespace

Var generator_forward(Tape& tape, const GeneratorSpec& spec, const BoundParams& params,
                      const Var& input, const Var& cond) {
  (void)tape;  // ops recover the tape from their operands
  spec.validate();
  check_5d(input.value(), 1, spec.n, "generator_forward", "input");
  const int64_t batch = input.value().dim(0);
  const Tensor& cv = cond.value();
  if (cv.rank() != 2 || cv.dim(0) != batch || cv.dim(1) != spec.condition_dim)
    throw std::invalid_argument("generator_forward: condition expected [" +
                                std::to_string(batch) + "," +
                                std::to_string(spec.condition_dim) + "], got " + cv.shape_str());

  using namespace autodiff;
  const int64_t s = spec.stages();
  std::vector<Var> skips(static_cast<size_t>(s));
  Var x = input;
  int64_t spatial = spec.n;
  for (int64_t e = 0; e < s; ++e) {
    const int64_t cin = e == 0 ? 1 : spec.encoder_channels[e - 1];
    const std::string name = "enc" + std::to_string(e + 1);
    x = conv3d(x, params.at(name + ".w"),
               same_conv_geom(batch, cin, spec.encoder_channels[e], spatial));
    x = leaky_relu(bias_add_chan(x, params.at(name + ".b")), kLeakySlope);
    skips[static_cast<size_t>(e)] = x;  // pre-pool activation
    x = maxpool2(x);
    spatial /= 2;
  }

  x = reshape(x, {batch, spec.flatten_dim()});
  x = leaky_relu(add_rowvec(matmul(x, params.at("fc1.w")), params.at("fc1.b")), kLeakySlope);
  x = leaky_relu(add_rowvec(matmul(x, params.at("fc2.w")), params.at("fc2.b")), kLeakySlope);
  x = concat_channels(x, cond);
  x = leaky_relu(add_rowvec(matmul(x, params.at("fc3.w")), params.at("fc3.b")), kLeakySlope);
  x = reshape(x, {batch, spec.encoder_channels.back(), 2, 2, 2});

  for (int64_t d = 0; d < s; ++d) {
    if (d >= 1) x = concat_channels(x, skips[static_cast<size_t>(s - d)]);
    const std::string name = "dec" + std::to_string(d + 1);
    // Geometry of the stride-2 conv being transposed: maps 2*spatial -> spatial.
    const Conv3dGeom g = down_conv_geom(batch, spec.decoder_out_channels(d),
                                        spec.decoder_in_channels(d), spatial * 2);
    x = conv3d_transpose(x, params.at(name + ".w"), g);
    x = bias_add_chan(x, params.at(name + ".b"));
    x = d == s - 1 ? sigmoid(x) : leaky_relu(x, kLeakySlope);
    spatial *= 2;
  }
  return x;
}

Var discriminator_forward(Tape& tape, const DiscriminatorSpec& spec, const BoundParams& params,
                          const Var& grid, const Var& cond_masks) {
  (void)tape;
  spec.validate();
  check_5d(grid.value(), 1, spec.n, "discriminator_forward", "grid");
  const int64_t batch = grid.value().dim(0);
  check_5d(cond_masks.value(), kConditionLength, spec.mask_spatial(), "discriminator_forward",
           "condition masks");
  if (cond_masks.value().dim(0) != batch)
    throw std::invalid_argument("discriminator_forward: condition masks batch " +
                                std::to_string(cond_masks.value().dim(0)) +
                                " does not match grid batch " + std::to_string(batch));

  using namespace autodiff;
  Var x = grid;
  int64_t spatial = spec.n;
  for (int64_t l = 0; l < spec.stages(); ++l) {
    int64_t cin = l == 0 ? 1 : spec.channels[l - 1];
    if (l + 1 == spec.condition_inject_layer) {
      x = concat_channels(x, cond_masks);
      cin += kConditionLength;
    }
    const std::string name = "conv" + std::to_string(l + 1);
    x = conv3d(x, params.at(name + ".w"), down_conv_geom(batch, cin, spec.channels[l], spatial));
    x = bias_add_chan(x, params.at(name + ".b"));
    if (l + 1 < spec.stages()) x = leaky_relu(x, kLeakySlope);
    spatial /= 2;
  }
  // Final reduction: mean over the last 2^3 volume, one score per sample.
  Var score = mul_scalar(per_sample_sum(x), 1.0f / 8.0f);
  if (!spec.wgan_critic) score = sigmoid(score);
  return score;
}

Tensor generator_predict(const Generator& gen, const Tensor& input_grid,
                         const Condition& condition) {
  const int64_t n = gen.spec.n;
  if (!(input_grid.rank() == 3 && input_grid.dim(0) == n && input_grid.dim(1) == n &&
        input_grid.dim(2) == n))
    throw std::invalid_argument("generator_predict: input expected [" + std::to_string(n) + "," +
                                std::to_string(n) + "," + std::to_string(n) + "], got " +
                                input_grid.shape_str());
  condition.validate();
  Tape tape;
  const BoundParams bound = bind_params(tape, gen.params, false);
  Tensor in = input_grid.reshaped({1, 1, n, n, n});
  const std::vector<float> cv = encode_vector(condition);
  Tensor cond({1, kConditionLength});
  std::copy(cv.begin(), cv.end(), cond.data());
  const Var out = generator_forward(tape, gen.spec, bound, tape.leaf(std::move(in)),
                                    tape.leaf(std::move(cond)));
  return out.value().reshaped({n, n, n});
}

// ------------------------------------------------------------- checkpoint

void Checkpoint::check_specs(const GeneratorSpec& g, const DiscriminatorSpec& d) const {
  if (g.hash() != generator_hash)
    throw std::runtime_error("Checkpoint: generator spec hash mismatch");
  if (d.hash() != discriminator_hash)
    throw std::runtime_error("Checkpoint: discriminator spec hash mismatch");
}

void put_blocks(Checkpoint& ck, const std::string& prefix, const std::vector<NamedTensor>& params) {
  for (const NamedTensor& p : params) ck.blocks.push_back({prefix + p.name, p.value});
}

void get_blocks(const Checkpoint& ck, const std::string& prefix, std::vector<NamedTensor>& params) {
  for (NamedTensor& p : params) {
    const std::string want = prefix + p.name;
    const NamedTensor* found = nullptr;
    for (const NamedTensor& b : ck.blocks)
      if (b.name == want) {
        found = &b;
        break;
      }
    if (found == nullptr) throw std::runtime_error("Checkpoint: missing block " + want);
    if (found->value.shape() != p.value.shape())
      throw std::runtime_error("Checkpoint: block " + want + " has shape " +
                               found->value.shape_str() + ", expected " + p.value.shape_str());
    p.value = found->value;
  }
}

namespace {

constexpr uint16_t kCheckpointVersion = 1;

void write_bytes(std::ofstream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& is, void* p, size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (is.gcount() != static_cast<std::streamsize>(n))
    throw std::runtime_error(std::string("load_checkpoint: truncated file while reading ") + what);
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  const char magic[4] = {'F', 'X', 'C', 'P'};
  write_bytes(os, magic, 4);
  const uint16_t version = kCheckpointVersion;
  const uint16_t reserved16 = 0;
  write_bytes(os, &version, 2);
  write_bytes(os, &reserved16, 2);
  write_bytes(os, &ck.generator_hash, 8);
  write_bytes(os, &ck.discriminator_hash, 8);
  write_bytes(os, &ck.epoch, 4);
  const uint32_t reserved32 = 0;
  write_bytes(os, &reserved32, 4);
  write_bytes(os, &ck.step, 8);
  write_bytes(os, &ck.seed, 8);
  const uint32_t count = static_cast<uint32_t>(ck.blocks.size());
  write_bytes(os, &count, 4);
  for (const NamedTensor& b : ck.blocks) {
    const uint32_t name_len = static_cast<uint32_t>(b.name.size());
    write_bytes(os, &name_len, 4);
    write_bytes(os, b.name.data(), b.name.size());
    const uint32_t rank = static_cast<uint32_t>(b.value.rank());
    write_bytes(os, &rank, 4);
    for (size_t i = 0; i < b.value.rank(); ++i) {
      const int64_t d = b.value.dim(i);
      write_bytes(os, &d, 8);
    }
    write_bytes(os, b.value.data(), static_cast<size_t>(b.value.numel()) * sizeof(float));
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[4];
  read_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, "FXCP", 4) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  uint16_t version = 0, reserved16 = 0;
  read_bytes(is, &version, 2, "version");
  read_bytes(is, &reserved16, 2, "header");
  if (version != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ck;
  read_bytes(is, &ck.generator_hash, 8, "generator hash");
  read_bytes(is, &ck.discriminator_hash, 8, "discriminator hash");
  read_bytes(is, &ck.epoch, 4, "epoch");
  uint32_t reserved32 = 0;
  read_bytes(is, &reserved32, 4, "header");
  read_bytes(is, &ck.step, 8, "step");
  read_bytes(is, &ck.seed, 8, "seed");
  uint32_t count = 0;
  read_bytes(is, &count, 4, "block count");
  ck.blocks.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = 0;
    read_bytes(is, &name_len, 4, "block name length");
    if (name_len == 0 || name_len > 1024)
      throw std::runtime_error("load_checkpoint: corrupt block name length");
    std::string name(name_len, '\0');
    read_bytes(is, name.data(), name_len, "block name");
    uint32_t rank = 0;
    read_bytes(is, &rank, 4, "block rank");
    if (rank == 0 || rank > 8) throw std::runtime_error("load_checkpoint: corrupt block rank");
    std::vector<int64_t> shape(rank);
    int64_t numel = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      read_bytes(is, &shape[r], 8, "block shape");
      if (shape[r] < 1 || shape[r] > (int64_t{1} << 32))
        throw std::runtime_error("load_checkpoint: corrupt block shape");
      numel *= shape[r];
    }
    if (numel > (int64_t{1} << 31)) throw std::runtime_error("load_checkpoint: corrupt block size");
    Tensor t(shape);
    read_bytes(is, t.data(), static_cast<size_t>(numel) * sizeof(float), "block data");
    ck.blocks.push_back({std::move(name), std::move(t)});
  }
  return ck;
}

}  // namespace flexvox
