#include "tsforge/gan.hpp"

#include <string>

#include "tsforge/errors.hpp"

namespace tsforge {

namespace {

constexpr double kInitStd = 0.02;

// Registers one encoder stack worth of parameters under `prefix` and returns
// handles into the set. Linear weights are N(0, 0.02), biases zero, layer
// norms (1, 0).
std::vector<EncoderBlockParams> build_blocks(ParameterSet& params, const std::string& prefix,
                                             const EncoderConfig& cfg, Rng& rng) {
  std::vector<EncoderBlockParams> blocks;
  std::size_t m = cfg.embed_dim;
  std::size_t hidden = cfg.mlp_ratio * m;
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    std::string base = prefix + ".blocks." + std::to_string(i) + ".";
    EncoderBlockParams b;
    b.ln1_gamma = params.add(base + "ln1.gamma", Tensor::full({m}, 1.0, true));
    b.ln1_beta = params.add(base + "ln1.beta", Tensor::zeros({m}, true));
    b.attn.wq = params.add(base + "attn.q.weight", Tensor::randn({m, m}, kInitStd, rng, true));
    b.attn.bq = params.add(base + "attn.q.bias", Tensor::zeros({m}, true));
    b.attn.wk = params.add(base + "attn.k.weight", Tensor::randn({m, m}, kInitStd, rng, true));
    b.attn.bk = params.add(base + "attn.k.bias", Tensor::zeros({m}, true));
    b.attn.wv = params.add(base + "attn.v.weight", Tensor::randn({m, m}, kInitStd, rng, true));
    b.attn.bv = params.add(base + "attn.v.bias", Tensor::zeros({m}, true));
    b.attn.wo = params.add(base + "attn.out.weight", Tensor::randn({m, m}, kInitStd, rng, true));
    b.attn.bo = params.add(base + "attn.out.bias", Tensor::zeros({m}, true));
    b.ln2_gamma = params.add(base + "ln2.gamma", Tensor::full({m}, 1.0, true));
    b.ln2_beta = params.add(base + "ln2.beta", Tensor::zeros({m}, true));
    b.mlp.w1 = params.add(base + "mlp.fc1.weight", Tensor::randn({m, hidden}, kInitStd, rng, true));
    b.mlp.b1 = params.add(base + "mlp.fc1.bias", Tensor::zeros({hidden}, true));
    b.mlp.w2 = params.add(base + "mlp.fc2.weight", Tensor::randn({hidden, m}, kInitStd, rng, true));
    b.mlp.b2 = params.add(base + "mlp.fc2.bias", Tensor::zeros({m}, true));
    blocks.push_back(b);
  }
  return blocks;
}

}  // namespace

void GanConfig::validate() const {
  if (latent_dim == 0) throw ConfigError("model: latent_dim must be positive");
  if (seq_len == 0 || channels == 0 || embed_dim == 0 || patch_len == 0) {
    throw ConfigError("model: seq_len, channels, embed_dim and patch_len must be positive");
  }
  if (seq_len % patch_len != 0) {
    throw ConfigError("model: seq_len " + std::to_string(seq_len) +
                      " is not divisible by patch_len " + std::to_string(patch_len));
  }
  generator_encoder().validate();
  discriminator_encoder().validate();
}

EncoderConfig GanConfig::generator_encoder() const {
  return {generator_token_dim(), num_heads, mlp_ratio, dropout_p, depth};
}

EncoderConfig GanConfig::discriminator_encoder() const {
  return {embed_dim, num_heads, mlp_ratio, dropout_p, depth};
}

// ---- Generator ------------------------------------------------------------

Generator::Generator(const GanConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  std::size_t w = cfg_.seq_len, m = cfg_.embed_dim;
  std::size_t token_dim = cfg_.generator_token_dim();
  std::size_t tokens = w / cfg_.patch_len;

  input_w_ = params_.add("g.input_proj.weight",
                         Tensor::randn({cfg_.latent_dim, w * m}, kInitStd, rng, true));
  input_b_ = params_.add("g.input_proj.bias", Tensor::zeros({w * m}, true));
  pos_ = params_.add("g.pos_embed", Tensor::zeros({tokens, token_dim}, true));
  blocks_ = build_blocks(params_, "g", cfg_.generator_encoder(), rng);
  proj_w_ = params_.add("g.channel_proj.weight",
                        Tensor::randn({cfg_.channels, m}, kInitStd, rng, true));
  proj_b_ = params_.add("g.channel_proj.bias", Tensor::zeros({cfg_.channels}, true));
}

Tensor Generator::forward(const Tensor& z, bool training, Rng* rng) const {
  const Shape& s = z.shape();
  if (s.size() != 2 || s[1] != cfg_.latent_dim) {
    throw DimensionError("generator: latent batch " + shape_str(s) + " does not match (B, " +
                         std::to_string(cfg_.latent_dim) + ")");
  }
  std::size_t b = s[0], w = cfg_.seq_len, m = cfg_.embed_dim;
  std::size_t tokens = w / cfg_.patch_len;
  std::size_t token_dim = cfg_.generator_token_dim();

  // latent -> W*M, viewed as W/N tokens of N consecutive timestep embeddings
  Tensor x = add(matmul(z, input_w_), input_b_);
  x = reshape(x, {b, tokens, token_dim});
  x = add_positional(x, pos_);
  x = encoder_stack(x, blocks_, cfg_.generator_encoder(), training, rng);
  // back to per-timestep embeddings, then (B, M, 1, W) for the channel map
  x = reshape(x, {b, w, m});
  x = permute(x, {0, 2, 1});
  x = reshape(x, {b, m, 1, w});
  return pointwise_channel_projection(x, proj_w_, proj_b_);
}

// ---- Discriminator ---------------------------------------------------------

Discriminator::Discriminator(const GanConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  std::size_t m = cfg_.embed_dim;
  PatchSpec patches = cfg_.discriminator_patches();
  std::size_t t = patches.token_count();

  embed_w_ = params_.add("d.patch_embed.weight",
                         Tensor::randn({patches.patch_dim(), m}, kInitStd, rng, true));
  embed_b_ = params_.add("d.patch_embed.bias", Tensor::zeros({m}, true));
  cls_token_ = params_.add("d.cls_token", Tensor::randn({1, m}, kInitStd, rng, true));
  pos_ = params_.add("d.pos_embed", Tensor::zeros({t + 1, m}, true));
  blocks_ = build_blocks(params_, "d", cfg_.discriminator_encoder(), rng);
  head_w_ = params_.add("d.head.weight", Tensor::randn({m, 1}, kInitStd, rng, true));
  head_b_ = params_.add("d.head.bias", Tensor::zeros({1}, true));
}

std::size_t Discriminator::token_count() const {
  return cfg_.discriminator_patches().token_count() + 1;
}

Tensor Discriminator::forward(const Tensor& x, bool training, Rng* rng) const {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != cfg_.channels || s[2] != 1 || s[3] != cfg_.seq_len) {
    throw DimensionError("discriminator: input " + shape_str(s) + " does not match (B, " +
                         std::to_string(cfg_.channels) + ", 1, " + std::to_string(cfg_.seq_len) +
                         ")");
  }
  Tensor tokens = patchify(x, cfg_.discriminator_patches());
  tokens = embed_tokens(tokens, embed_w_, embed_b_);
  tokens = concat_token(cls_token_, tokens);
  tokens = add_positional(tokens, pos_);
  tokens = encoder_stack(tokens, blocks_, cfg_.discriminator_encoder(), training, rng);
  Tensor cls_state = select_token(tokens, 0);
  return add(matmul(cls_state, head_w_), head_b_);
}

Tensor sample_latent(std::size_t batch, std::size_t latent_dim, Rng& rng) {
  if (batch == 0) throw ParameterError("sample_latent: batch must be >= 1");
  return Tensor::rand_open01({batch, latent_dim}, rng);
}

}  // namespace tsforge
