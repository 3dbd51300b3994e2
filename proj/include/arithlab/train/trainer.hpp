#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "arithlab/datagen/datagen.hpp"
#include "arithlab/model/weights.hpp"
#include "arithlab/nn/optim.hpp"

namespace arithlab::train {

enum class FreezeKind { None, AttentionEvery, AllEvery };

struct FreezeMode {
  FreezeKind kind = FreezeKind::None;
  int every = 100;
};

enum class InitKind { Fresh, FromAddition };

struct InitSpec {
  InitKind kind = InitKind::Fresh;
  std::string donor_path;  // checkpoint to insert when kind == FromAddition
};

struct TrainConfig {
  model::ModelConfig model;
  datagen::EnrichmentConfig data;
  int batch_size = 64;
  std::int64_t total_steps = 10000;
  nn::AdamWParams optim;       // lr 8e-5, wd 0.1, betas (0.9, 0.98)
  double stop_loss = 0.0;      // <= 0 disables early stopping
  int stop_patience = 100;     // consecutive below-threshold steps required
  std::int64_t checkpoint_every = 0;  // 0 = final checkpoint only
  int per_digit_every = 100;
  InitSpec init;
  FreezeMode freeze;

  void validate() const;
};

struct StepRecord {
  std::int64_t step;
  double loss;
  double lr;
};

struct PerDigitRecord {
  std::int64_t step;
  std::vector<double> loss;  // per answer slot, sign first
};

struct TrainLog {
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::vector<PerDigitRecord> per_digit;
  double final_loss = 0.0;
  double wall_secs = 0.0;
  std::int64_t stopped_at_step = 0;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
nlohmann::json train_log_to_json(const TrainConfig& cfg, const TrainLog& log);

struct TrainResult {
  model::ModelWeights weights;
  TrainLog log;
};

// Full training loop: gen_batch -> forward -> masked NLL -> AdamW with the
// warmup+cosine schedule. Stops at total_steps or once the all-digits loss
// stays under stop_loss for stop_patience consecutive steps. When out_dir
// is non-empty, writes model.ckpt and training_loss.json there. A NaN loss
// aborts with a diagnostic. donor must be set for FromAddition init (it
// overrides any donor_path) and for freeze modes.
TrainResult train(const TrainConfig& cfg, const model::ModelWeights* donor = nullptr,
                  const std::string& out_dir = "");

// Builds target weights with every donor slice copied into the first
// layers/heads (top-left blocks of each matching tensor, embeddings
// included); everything outside the inserted slices keeps its fresh init.
// Requires equal n_digits and d_head, donor layers/heads <= target.
model::ModelWeights init_from_addition(const model::ModelWeights& donor,
                                       const model::ModelConfig& target_cfg);

// At step multiples of mode.every, restores donor attention slices
// (AttentionEvery) or attention + MLP slices (AllEvery) into weights.
void freeze_reset_hook(std::int64_t step, model::ModelWeights& weights,
                       const model::ModelWeights& donor, const FreezeMode& mode);

struct SweepResult {
  std::vector<std::pair<std::uint64_t, double>> final_losses;  // (seed, loss)
  double min_loss = 0.0;
  double median_loss = 0.0;
  double max_loss = 0.0;
};

// Independent runs of cfg with model/data seeds re-derived per sweep seed.
SweepResult seed_sweep(TrainConfig cfg, std::span<const std::uint64_t> seeds);

}  // namespace arithlab::train
