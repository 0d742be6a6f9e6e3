#include "tsforge/training.hpp"

#include <cmath>
#include <string>

#include "io_util.hpp"
#include "tsforge/config.hpp"

namespace tsforge {

// ---- labels & losses --------------------------------------------------------

void LabelSpec::validate() const {
  if (mode == LabelMode::kSoft) {
    if (!(soft_fake >= 0.0 && soft_fake < soft_real && soft_real <= 1.0)) {
      throw ConfigError("labels: soft labels need 0 <= fake < real <= 1, got real " +
                        std::to_string(soft_real) + ", fake " + std::to_string(soft_fake));
    }
  }
}

double LabelSpec::d_real_target() const {
  switch (mode) {
    case LabelMode::kHard: return 1.0;
    case LabelMode::kSoft: return soft_real;
    case LabelMode::kFlipped: return 0.0;
  }
  return 1.0;
}

double LabelSpec::d_fake_target() const {
  switch (mode) {
    case LabelMode::kHard: return 0.0;
    case LabelMode::kSoft: return soft_fake;
    case LabelMode::kFlipped: return 1.0;
  }
  return 0.0;
}

double LabelSpec::g_target() const {
  // Flipping only affects the discriminator's targets.
  return mode == LabelMode::kSoft ? soft_real : 1.0;
}

void TrainConfig::validate() const {
  if (lr_g <= 0.0 || lr_d <= 0.0) throw ConfigError("train: learning rates must be positive");
  if (!(beta1 >= 0.0 && beta1 < beta2 && beta2 < 1.0)) {
    throw ConfigError("train: betas need 0 <= beta1 < beta2 < 1");
  }
  if (adam_eps <= 0.0) throw ConfigError("train: adam_eps must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  labels.validate();
}

namespace {

void check_logits(const Tensor& logits, const char* which) {
  const Shape& s = logits.shape();
  if (s.size() != 2 || s[1] != 1) {
    throw DimensionError(std::string(which) + " logits must be (B, 1), got " + shape_str(s));
  }
}

}  // namespace

Tensor mse_to(const Tensor& pred, double target) {
  return mean(square(sub(pred, Tensor::scalar(target))));
}

Tensor discriminator_loss(const Tensor& real_logits, const Tensor& fake_logits,
                          double real_label, double fake_label) {
  check_logits(real_logits, "real");
  check_logits(fake_logits, "fake");
  return add(mse_to(real_logits, real_label), mse_to(fake_logits, fake_label));
}

Tensor generator_loss(const Tensor& fake_logits, double real_label) {
  check_logits(fake_logits, "fake");
  return mse_to(fake_logits, real_label);
}

// ---- Adam -------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(ParameterSet& params, const AdamConfig& cfg) : cfg_(cfg) {
  for (auto& [name, tensor] : params) {
    params_.push_back(tensor);
    m_.emplace_back(tensor.numel(), 0.0);
    v_.emplace_back(tensor.numel(), 0.0);
  }
}

void AdamOptimizer::step() {
  ++step_count_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    std::span<double> value = p.values();
    const double* g = p.has_grad() ? p.grad().data() : nullptr;
    double* m = m_[i].data();
    double* v = v_[i].data();
    for (std::size_t j = 0; j < value.size(); ++j) {
      double gj = g ? g[j] : 0.0;
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      double m_hat = m[j] / bc1;
      double v_hat = v[j] / bc2;
      value[j] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

AdamSnapshot AdamOptimizer::snapshot() const {
  return AdamSnapshot{step_count_, m_, v_};
}

void AdamOptimizer::restore(const AdamSnapshot& snap) {
  if (snap.first_moment.size() != params_.size() ||
      snap.second_moment.size() != params_.size()) {
    throw ContractError("optimizer snapshot does not match parameter count");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (snap.first_moment[i].size() != params_[i].numel() ||
        snap.second_moment[i].size() != params_[i].numel()) {
      throw ContractError("optimizer snapshot does not match parameter shapes");
    }
  }
  step_count_ = snap.step_count;
  m_ = snap.first_moment;
  v_ = snap.second_moment;
}

// ---- train step -------------------------------------------------------------

StepLosses train_step(const Tensor& real_batch, Generator& gen, Discriminator& disc,
                      AdamOptimizer& opt_g, AdamOptimizer& opt_d, const LabelSpec& labels,
                      Rng& rng) {
  std::size_t batch = real_batch.dim(0);
  StepLosses losses;

  // Discriminator update: real batch against a fresh fake batch that is
  // detached from the generator.
  opt_d.zero_grad();
  Tensor z_d = sample_latent(batch, gen.config().latent_dim, rng);
  Tensor fake_detached = detach(gen.forward(z_d, /*training=*/true, &rng));
  {
    Tape tape;
    Tensor real_logits = disc.forward(real_batch, /*training=*/true, &rng);
    Tensor fake_logits = disc.forward(fake_detached, /*training=*/true, &rng);
    Tensor d_loss = discriminator_loss(real_logits, fake_logits, labels.d_real_target(),
                                       labels.d_fake_target());
    tape.backward(d_loss);
    losses.d_loss = d_loss.item();
  }
  opt_d.step();

  // Generator update through the discriminator, on its own latent batch.
  opt_g.zero_grad();
  {
    Tape tape;
    Tensor z_g = sample_latent(batch, gen.config().latent_dim, rng);
    Tensor fake = gen.forward(z_g, /*training=*/true, &rng);
    Tensor fake_logits = disc.forward(fake, /*training=*/true, &rng);
    Tensor g_loss = generator_loss(fake_logits, labels.g_target());
    tape.backward(g_loss);
    losses.g_loss = g_loss.item();
  }
  opt_g.step();

  return losses;
}

// ---- full runs ---------------------------------------------------------------

namespace {

std::vector<NamedTensor> snapshot_params(const ParameterSet& params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const auto& [name, tensor] : params) {
    out.push_back(NamedTensor{
        name, tensor.shape(),
        std::vector<double>(tensor.values().begin(), tensor.values().end())});
  }
  return out;
}

void load_params(ParameterSet& params, const std::vector<NamedTensor>& saved,
                 const char* which) {
  if (params.size() != saved.size()) {
    throw DataError(std::string(which) + ": checkpoint has " + std::to_string(saved.size()) +
                    " parameters, model expects " + std::to_string(params.size()));
  }
  for (const NamedTensor& nt : saved) {
    if (!params.contains(nt.name)) {
      throw DataError(std::string(which) + ": checkpoint parameter '" + nt.name +
                      "' is unknown to the model");
    }
    Tensor& target = params.at(nt.name);
    if (target.shape() != nt.shape) {
      throw DataError(std::string(which) + ": parameter '" + nt.name + "' has shape " +
                      shape_str(nt.shape) + " in the checkpoint but " +
                      shape_str(target.shape()) + " in the model");
    }
    std::copy(nt.values.begin(), nt.values.end(), target.values().begin());
  }
}

Checkpoint make_checkpoint(const Generator& gen, const Discriminator& disc,
                           const AdamOptimizer& opt_g, const AdamOptimizer& opt_d,
                           const RunConfig& cfg, std::uint64_t step, std::uint64_t epoch,
                           const Rng& rng) {
  Checkpoint ckpt;
  ckpt.config_json = cfg.to_json();
  ckpt.generator = snapshot_params(gen.params());
  ckpt.discriminator = snapshot_params(disc.params());
  ckpt.adam_g = opt_g.snapshot();
  ckpt.adam_d = opt_d.snapshot();
  ckpt.step = step;
  ckpt.epoch = epoch;
  ckpt.rng_state = rng.save_state();
  return ckpt;
}

void check_dataset_matches(const SequenceBatch& dataset, const GanConfig& model) {
  if (dataset.size() == 0) throw DataError("training dataset is empty");
  if (dataset.channels() != model.channels || dataset.timesteps() != model.seq_len) {
    throw ConfigError("dataset sequences are (" + std::to_string(dataset.channels()) + ", " +
                      std::to_string(dataset.timesteps()) + ") but the model expects (" +
                      std::to_string(model.channels) + ", " + std::to_string(model.seq_len) +
                      ")");
  }
}

TrainOutcome run_epochs(Generator& gen, Discriminator& disc, AdamOptimizer& opt_g,
                        AdamOptimizer& opt_d, const SequenceBatch& dataset, const RunConfig& cfg,
                        const TrainHooks& hooks, std::uint64_t start_epoch, std::uint64_t step,
                        Rng& rng) {
  TrainOutcome outcome;
  std::uint64_t epochs = cfg.train.epochs;
  for (std::uint64_t e = start_epoch; e < epochs; ++e) {
    auto batches = epoch_batches(dataset.size(), cfg.train.batch_size, rng);
    double sum_d = 0.0, sum_g = 0.0;
    for (const auto& indices : batches) {
      SequenceBatch real = gather(dataset, indices);
      StepLosses l = train_step(real.data, gen, disc, opt_g, opt_d, cfg.train.labels, rng);
      outcome.history.push_back(l);
      ++step;
      sum_d += l.d_loss;
      sum_g += l.g_loss;
    }
    if (hooks.on_epoch && !batches.empty()) {
      hooks.on_epoch(e + 1, sum_d / static_cast<double>(batches.size()),
                     sum_g / static_cast<double>(batches.size()));
    }
    bool at_cadence =
        cfg.train.checkpoint_every != 0 && (e + 1) % cfg.train.checkpoint_every == 0;
    if (at_cadence && (e + 1) != epochs && hooks.on_checkpoint) {
      hooks.on_checkpoint(make_checkpoint(gen, disc, opt_g, opt_d, cfg, step, e + 1, rng));
    }
  }
  outcome.final_checkpoint =
      make_checkpoint(gen, disc, opt_g, opt_d, cfg, step, epochs, rng);
  return outcome;
}

}  // namespace

TrainOutcome train(const SequenceBatch& dataset, const RunConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  GanConfig model = cfg.resolved_model();
  check_dataset_matches(dataset, model);

  Rng rng(cfg.train.seed);
  Generator gen(model, rng);
  Discriminator disc(model, rng);
  AdamOptimizer opt_g(gen.params(),
                      {cfg.train.lr_g, cfg.train.beta1, cfg.train.beta2, cfg.train.adam_eps});
  AdamOptimizer opt_d(disc.params(),
                      {cfg.train.lr_d, cfg.train.beta1, cfg.train.beta2, cfg.train.adam_eps});
  return run_epochs(gen, disc, opt_g, opt_d, dataset, cfg, hooks, 0, 0, rng);
}

TrainOutcome resume(const Checkpoint& ckpt, const SequenceBatch& dataset, const RunConfig& cfg,
                    const TrainHooks& hooks) {
  cfg.validate();
  GanConfig model = cfg.resolved_model();
  check_dataset_matches(dataset, model);
  if (ckpt.epoch > cfg.train.epochs) {
    throw ConfigError("checkpoint is at epoch " + std::to_string(ckpt.epoch) +
                      ", beyond the configured total of " + std::to_string(cfg.train.epochs));
  }

  Rng scratch(0);
  Generator gen(model, scratch);
  Discriminator disc(model, scratch);
  load_params(gen.params(), ckpt.generator, "generator");
  load_params(disc.params(), ckpt.discriminator, "discriminator");

  AdamOptimizer opt_g(gen.params(),
                      {cfg.train.lr_g, cfg.train.beta1, cfg.train.beta2, cfg.train.adam_eps});
  AdamOptimizer opt_d(disc.params(),
                      {cfg.train.lr_d, cfg.train.beta1, cfg.train.beta2, cfg.train.adam_eps});
  opt_g.restore(ckpt.adam_g);
  opt_d.restore(ckpt.adam_d);

  Rng rng(0);
  rng.load_state(ckpt.rng_state);
  return run_epochs(gen, disc, opt_g, opt_d, dataset, cfg, hooks, ckpt.epoch, ckpt.step, rng);
}

void save_loss_history(const std::filesystem::path& path, const std::vector<StepLosses>& history,
                       std::uint64_t first_step) {
  std::string out = "step,d_loss,g_loss\n";
  std::uint64_t step = first_step;
  for (const StepLosses& l : history) {
    out += std::to_string(step++);
    out += ',';
    out += ioutil::format_double(l.d_loss);
    out += ',';
    out += ioutil::format_double(l.g_loss);
    out += '\n';
  }
  ioutil::write_file(path, out);
}

}  // namespace tsforge
