#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "tsforge/checkpoint.hpp"
#include "tsforge/data.hpp"
#include "tsforge/gan.hpp"
#include "tsforge/params.hpp"

namespace tsforge {

struct RunConfig;  // config.hpp

// Target values used by the least-squares losses. Hard is (1, 0). Soft uses
// the configured pair. Flipped swaps the real/fake targets in the
// discriminator loss only; the generator keeps aiming at the real value.
enum class LabelMode { kHard, kSoft, kFlipped };

struct LabelSpec {
  LabelMode mode = LabelMode::kHard;
  double soft_real = 0.9;
  double soft_fake = 0.1;

  void validate() const;
  double d_real_target() const;
  double d_fake_target() const;
  double g_target() const;
};

struct TrainConfig {
  double lr_g = 1e-4;
  double lr_d = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 200;
  LabelSpec labels;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // epochs between cadence checkpoints; 0 = final only

  void validate() const;
};

// Mean squared error against a constant target.
Tensor mse_to(const Tensor& pred, double target);

// d_loss = MSE(D(real), real_label) + MSE(D(G(z)), fake_label)
Tensor discriminator_loss(const Tensor& real_logits, const Tensor& fake_logits,
                          double real_label, double fake_label);
// g_loss = MSE(D(G(z)), real_label)
Tensor generator_loss(const Tensor& fake_logits, double real_label);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a ParameterSet. A parameter with no gradient is
// treated as having a zero gradient (moments still decay, t still advances).
class AdamOptimizer {
 public:
  AdamOptimizer(ParameterSet& params, const AdamConfig& cfg);

  void step();
  void zero_grad();

  std::uint64_t step_count() const { return step_count_; }
  AdamSnapshot snapshot() const;
  void restore(const AdamSnapshot& snap);

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t step_count_ = 0;
  AdamConfig cfg_;
};

struct StepLosses {
  double d_loss = 0.0;
  double g_loss = 0.0;
};

// One alternating update: the discriminator trains on (real batch, fresh
// fake batch detached from G), then the generator trains through D. Each
// sub-step draws its own latent batch.
StepLosses train_step(const Tensor& real_batch, Generator& gen, Discriminator& disc,
                      AdamOptimizer& opt_g, AdamOptimizer& opt_d, const LabelSpec& labels,
                      Rng& rng);

struct TrainHooks {
  // Called for cadence checkpoints (and the initial one when epochs == 0).
  std::function<void(const Checkpoint&)> on_checkpoint;
  std::function<void(std::size_t epoch, double mean_d_loss, double mean_g_loss)> on_epoch;
};

struct TrainOutcome {
  std::vector<StepLosses> history;  // one entry per train step
  Checkpoint final_checkpoint;
};

// Full run from a fresh initialization.
TrainOutcome train(const SequenceBatch& dataset, const RunConfig& cfg,
                   const TrainHooks& hooks = {});

// Continues a checkpointed run until cfg.train.epochs total epochs. The
// history contains only the steps taken after the checkpoint.
TrainOutcome resume(const Checkpoint& ckpt, const SequenceBatch& dataset, const RunConfig& cfg,
                    const TrainHooks& hooks = {});

// Loss history CSV with header `step,d_loss,g_loss`.
void save_loss_history(const std::filesystem::path& path, const std::vector<StepLosses>& history,
                       std::uint64_t first_step = 1);

}  // namespace tsforge
