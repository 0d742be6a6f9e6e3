#pragma once

#include <span>

#include "tsforge/tensor.hpp"

namespace tsforge {

// Architecture of one encoder stack.
struct EncoderConfig {
  std::size_t embed_dim = 0;   // M
  std::size_t num_heads = 1;
  std::size_t mlp_ratio = 4;   // hidden width multiplier of the MLP
  double dropout_p = 0.1;
  std::size_t depth = 3;

  void validate() const;  // ConfigError on violation
};

// How a (B, C, 1, W) batch is cut into tokens: W/N patches of N timesteps,
// all channels interleaved timestep-major inside a patch.
struct PatchSpec {
  std::size_t seq_len = 0;    // W
  std::size_t patch_len = 0;  // N
  std::size_t channels = 0;   // C

  std::size_t token_count() const { return seq_len / patch_len; }
  std::size_t patch_dim() const { return patch_len * channels; }
  void validate() const;
};

struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct MlpParams {
  Tensor w1, b1, w2, b2;
};

struct EncoderBlockParams {
  Tensor ln1_gamma, ln1_beta;
  AttentionParams attn;
  Tensor ln2_gamma, ln2_beta;
  MlpParams mlp;
};

// (B, C, 1, W) -> (B, W/N, N*C); exact inverse is unpatchify.
Tensor patchify(const Tensor& x, const PatchSpec& spec);
Tensor unpatchify(const Tensor& patches, const PatchSpec& spec);

// Per-token linear projection (B, T, P) x (P, M) + bias -> (B, T, M).
Tensor embed_tokens(const Tensor& patches, const Tensor& weight, const Tensor& bias);

// Adds a learned (T, M) positional table to every sequence in the batch.
Tensor add_positional(const Tensor& tokens, const Tensor& pos);

// Scaled dot-product self-attention over all heads; per-head dimension
// M/num_heads under the square root. When attn_probs is non-null it receives
// the (B, heads, T, T) attention weights.
Tensor multi_head_attention(const Tensor& tokens, const AttentionParams& p,
                            std::size_t num_heads, Tensor* attn_probs = nullptr);

// Pre-norm residual block:
//   x <- x + Dropout(MHA(LN(x)));  x <- x + Dropout(MLP(LN(x)))
// with MLP = Linear(M -> mlp_ratio*M), GELU, Linear(-> M).
Tensor encoder_block(const Tensor& tokens, const EncoderBlockParams& p, const EncoderConfig& cfg,
                     bool training, Rng* rng);

// `depth` independent encoder blocks applied in sequence.
Tensor encoder_stack(const Tensor& tokens, std::span<const EncoderBlockParams> blocks,
                     const EncoderConfig& cfg, bool training, Rng* rng);

}  // namespace tsforge
