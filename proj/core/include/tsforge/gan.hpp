#pragma once

#include <vector>

#include "tsforge/params.hpp"
#include "tsforge/transformer.hpp"

namespace tsforge {

// Shape and architecture of one generator/discriminator pair.
//
// The generator maps a latent vector to W per-timestep embeddings of width
// embed_dim, groups them into W/patch_len tokens (so its encoder runs at
// width patch_len*embed_dim), and projects back to `channels` real channels
// with a 1x1 channel map. The discriminator tokenizes the input into
// W/patch_len patches, embeds them at width embed_dim, prepends a learned
// classification token ((W/N)+1 tokens total) and scores that token's final
// state with a linear head.
struct GanConfig {
  std::size_t latent_dim = 100;
  std::size_t seq_len = 24;    // W
  std::size_t channels = 5;    // C
  std::size_t embed_dim = 10;  // M
  std::size_t patch_len = 4;   // N
  std::size_t num_heads = 5;
  std::size_t mlp_ratio = 4;
  double dropout_p = 0.1;
  std::size_t depth = 3;

  void validate() const;

  PatchSpec discriminator_patches() const { return {seq_len, patch_len, channels}; }
  std::size_t generator_token_dim() const { return patch_len * embed_dim; }
  EncoderConfig generator_encoder() const;
  EncoderConfig discriminator_encoder() const;
};

class Generator {
 public:
  Generator(const GanConfig& cfg, Rng& rng);

  // z is (B, latent_dim); returns (B, C, 1, W). Eval mode (training=false)
  // is a deterministic function of (z, params) and needs no rng.
  Tensor forward(const Tensor& z, bool training = false, Rng* rng = nullptr) const;

  const GanConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  GanConfig cfg_;
  ParameterSet params_;
  Tensor input_w_, input_b_;  // latent -> W * M
  Tensor pos_;                // (W/N, N*M)
  std::vector<EncoderBlockParams> blocks_;
  Tensor proj_w_, proj_b_;    // (C, M), (C)
};

class Discriminator {
 public:
  Discriminator(const GanConfig& cfg, Rng& rng);

  // x is (B, C, 1, W); returns one logit per sequence, shape (B, 1).
  Tensor forward(const Tensor& x, bool training = false, Rng* rng = nullptr) const;

  std::size_t token_count() const;  // (W/N) + 1

  const GanConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  GanConfig cfg_;
  ParameterSet params_;
  Tensor embed_w_, embed_b_;  // (N*C, M), (M)
  Tensor cls_token_;          // (1, M)
  Tensor pos_;                // ((W/N)+1, M)
  std::vector<EncoderBlockParams> blocks_;
  Tensor head_w_, head_b_;    // (M, 1), (1)
};

// (B, latent_dim) of i.i.d. U(0,1) entries, open interval.
Tensor sample_latent(std::size_t batch, std::size_t latent_dim, Rng& rng);

}  // namespace tsforge
