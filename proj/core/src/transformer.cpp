#include "tsforge/transformer.hpp"

#include <cmath>
#include <string>

#include "tsforge/errors.hpp"

namespace tsforge {

void EncoderConfig::validate() const {
  if (embed_dim == 0) throw ConfigError("encoder: embed_dim must be positive");
  if (num_heads == 0) throw ConfigError("encoder: num_heads must be positive");
  if (embed_dim % num_heads != 0) {
    throw ConfigError("encoder: embed_dim " + std::to_string(embed_dim) +
                      " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (mlp_ratio == 0) throw ConfigError("encoder: mlp_ratio must be positive");
  if (dropout_p < 0.0 || dropout_p >= 1.0) {
    throw ConfigError("encoder: dropout_p must lie in [0, 1)");
  }
  if (depth == 0) throw ConfigError("encoder: depth must be >= 1");
}

void PatchSpec::validate() const {
  if (seq_len == 0 || patch_len == 0 || channels == 0) {
    throw ConfigError("patch spec: seq_len, patch_len and channels must be positive");
  }
  if (seq_len % patch_len != 0) {
    throw ConfigError("patch spec: seq_len " + std::to_string(seq_len) +
                      " is not divisible by patch_len " + std::to_string(patch_len));
  }
}

Tensor patchify(const Tensor& x, const PatchSpec& spec) {
  spec.validate();
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != spec.channels || s[2] != 1 || s[3] != spec.seq_len) {
    throw DimensionError("patchify: input " + shape_str(s) + " does not match (B, " +
                         std::to_string(spec.channels) + ", 1, " + std::to_string(spec.seq_len) +
                         ")");
  }
  std::size_t b = s[0], c = spec.channels, w = spec.seq_len, n = spec.patch_len;
  std::size_t t = spec.token_count(), p = spec.patch_dim();

  // patch token t, slot (i * C + ch) <- x[b, ch, 0, t*N + i]
  std::vector<double> out(b * t * p);
  const double* px = x.values().data();
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t ti = 0; ti < t; ++ti) {
      double* prow = out.data() + (bi * t + ti) * p;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          prow[i * c + ch] = px[(bi * c + ch) * w + ti * n + i];
        }
      }
    }
  }
  bool needs = x.requires_grad();
  Tensor result = Tensor::from_data({b, t, p}, std::move(out), needs);
  if (needs) {
    auto xi = x.impl();
    detail::record_node(result.impl(), [xi, b, c, w, n, t, p](const detail::TensorImpl& o) {
      double* dx = xi->grad_buffer().data();
      const double* g = o.grad.data();
      for (std::size_t bi = 0; bi < b; ++bi) {
        for (std::size_t ti = 0; ti < t; ++ti) {
          const double* grow = g + (bi * t + ti) * p;
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              dx[(bi * c + ch) * w + ti * n + i] += grow[i * c + ch];
            }
          }
        }
      }
    });
  }
  return result;
}

Tensor unpatchify(const Tensor& patches, const PatchSpec& spec) {
  spec.validate();
  const Shape& s = patches.shape();
  std::size_t t = spec.token_count(), p = spec.patch_dim();
  if (s.size() != 3 || s[1] != t || s[2] != p) {
    throw DimensionError("unpatchify: input " + shape_str(s) + " does not match (B, " +
                         std::to_string(t) + ", " + std::to_string(p) + ")");
  }
  std::size_t b = s[0], c = spec.channels, w = spec.seq_len, n = spec.patch_len;

  std::vector<double> out(b * c * w);
  const double* pp = patches.values().data();
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t ti = 0; ti < t; ++ti) {
      const double* prow = pp + (bi * t + ti) * p;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          out[(bi * c + ch) * w + ti * n + i] = prow[i * c + ch];
        }
      }
    }
  }
  bool needs = patches.requires_grad();
  Tensor result = Tensor::from_data({b, c, 1, w}, std::move(out), needs);
  if (needs) {
    auto pi = patches.impl();
    detail::record_node(result.impl(), [pi, b, c, w, n, t, p](const detail::TensorImpl& o) {
      double* dp = pi->grad_buffer().data();
      const double* g = o.grad.data();
      for (std::size_t bi = 0; bi < b; ++bi) {
        for (std::size_t ti = 0; ti < t; ++ti) {
          double* drow = dp + (bi * t + ti) * p;
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              drow[i * c + ch] += g[(bi * c + ch) * w + ti * n + i];
            }
          }
        }
      }
    });
  }
  return result;
}

Tensor embed_tokens(const Tensor& patches, const Tensor& weight, const Tensor& bias) {
  const Shape& s = patches.shape();
  if (s.size() != 3) {
    throw DimensionError("embed_tokens: expected (B, T, P), got " + shape_str(s));
  }
  if (weight.ndim() != 2 || weight.dim(0) != s[2]) {
    throw DimensionError("embed_tokens: projection " + shape_str(weight.shape()) +
                         " does not accept patches of " + shape_str(s));
  }
  return add(matmul(patches, weight), bias);
}

Tensor add_positional(const Tensor& tokens, const Tensor& pos) {
  const Shape& s = tokens.shape();
  if (s.size() != 3) {
    throw DimensionError("add_positional: expected (B, T, M), got " + shape_str(s));
  }
  if (pos.ndim() != 2 || pos.dim(0) != s[1] || pos.dim(1) != s[2]) {
    throw DimensionError("add_positional: table " + shape_str(pos.shape()) +
                         " does not match tokens " + shape_str(s));
  }
  return add(tokens, pos);
}

Tensor multi_head_attention(const Tensor& tokens, const AttentionParams& p,
                            std::size_t num_heads, Tensor* attn_probs) {
  const Shape& s = tokens.shape();
  if (s.size() != 3) {
    throw DimensionError("attention: expected (B, T, M), got " + shape_str(s));
  }
  std::size_t b = s[0], t = s[1], m = s[2];
  if (num_heads == 0 || m % num_heads != 0) {
    throw ConfigError("attention: embed dim " + std::to_string(m) +
                      " is not divisible by num_heads " + std::to_string(num_heads));
  }
  std::size_t head_dim = m / num_heads;

  Tensor flat = reshape(tokens, {b * t, m});
  auto project_heads = [&](const Tensor& w, const Tensor& bias) {
    Tensor proj = add(matmul(flat, w), bias);                    // (B*T, M)
    Tensor split = reshape(proj, {b, t, num_heads, head_dim});   // (B, T, h, d)
    return permute(split, {0, 2, 1, 3});                         // (B, h, T, d)
  };
  Tensor q = project_heads(p.wq, p.bq);
  Tensor k = project_heads(p.wk, p.bk);
  Tensor v = project_heads(p.wv, p.bv);

  Tensor scores = matmul(q, permute(k, {0, 1, 3, 2}));           // (B, h, T, T)
  scores = scale(scores, 1.0 / std::sqrt(static_cast<double>(head_dim)));
  Tensor probs = softmax(scores, -1);
  if (attn_probs != nullptr) *attn_probs = probs;

  Tensor context = matmul(probs, v);                             // (B, h, T, d)
  Tensor merged = reshape(permute(context, {0, 2, 1, 3}), {b * t, m});
  Tensor out = add(matmul(merged, p.wo), p.bo);
  return reshape(out, {b, t, m});
}

Tensor encoder_block(const Tensor& tokens, const EncoderBlockParams& p, const EncoderConfig& cfg,
                     bool training, Rng* rng) {
  const Shape& s = tokens.shape();
  if (s.size() != 3 || s[2] != cfg.embed_dim) {
    throw DimensionError("encoder_block: tokens " + shape_str(s) + " do not match embed_dim " +
                         std::to_string(cfg.embed_dim));
  }
  std::size_t b = s[0], t = s[1], m = s[2];

  Tensor attn_in = layer_norm(tokens, p.ln1_gamma, p.ln1_beta);
  Tensor attn_out = multi_head_attention(attn_in, p.attn, cfg.num_heads);
  Tensor x = add(tokens, dropout(attn_out, cfg.dropout_p, training, rng));

  Tensor mlp_in = reshape(layer_norm(x, p.ln2_gamma, p.ln2_beta), {b * t, m});
  Tensor hidden = gelu(add(matmul(mlp_in, p.mlp.w1), p.mlp.b1));
  Tensor mlp_out = reshape(add(matmul(hidden, p.mlp.w2), p.mlp.b2), {b, t, m});
  return add(x, dropout(mlp_out, cfg.dropout_p, training, rng));
}

Tensor encoder_stack(const Tensor& tokens, std::span<const EncoderBlockParams> blocks,
                     const EncoderConfig& cfg, bool training, Rng* rng) {
  if (blocks.size() != cfg.depth) {
    throw ConfigError("encoder_stack: " + std::to_string(blocks.size()) +
                      " blocks for configured depth " + std::to_string(cfg.depth));
  }
  Tensor x = tokens;
  for (const EncoderBlockParams& block : blocks) {
    x = encoder_block(x, block, cfg, training, rng);
  }
  return x;
}

}  // namespace tsforge
