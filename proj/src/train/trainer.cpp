#include "arithlab/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "arithlab/model/checkpoint.hpp"
#include "arithlab/model/forward.hpp"
#include "arithlab/nn/ops.hpp"

namespace arithlab::train {

using model::ModelWeights;
using nn::TensorF;

void TrainConfig::validate() const {
  model.validate();
  data.validate();
  if (data.n_digits != model.n_digits)
    throw std::invalid_argument("data and model n_digits differ");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (total_steps < 1) throw std::invalid_argument("total_steps must be >= 1");
  if (stop_patience < 1) throw std::invalid_argument("stop_patience must be >= 1");
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {
      {"model", model::config_to_json(cfg.model)},
      {"data",
       {{"enriched_fraction", cfg.data.enriched_fraction},
        {"equal_operand_freq", cfg.data.equal_operand_freq},
        {"add_weight", cfg.data.add_weight},
        {"sub_weight", cfg.data.sub_weight},
        {"n_digits", cfg.data.n_digits},
        {"seed", cfg.data.seed}}},
      {"batch_size", cfg.batch_size},
      {"total_steps", cfg.total_steps},
      {"optim",
       {{"lr", cfg.optim.lr},
        {"weight_decay", cfg.optim.weight_decay},
        {"beta1", cfg.optim.beta1},
        {"beta2", cfg.optim.beta2},
        {"eps", cfg.optim.eps}}},
      {"stop_loss", cfg.stop_loss},
      {"stop_patience", cfg.stop_patience},
      {"init", cfg.init.kind == InitKind::Fresh ? "fresh" : "from_addition"},
      {"freeze", cfg.freeze.kind == FreezeKind::None
                     ? "none"
                     : (cfg.freeze.kind == FreezeKind::AttentionEvery ? "attention" : "all")},
  };
}

nlohmann::json train_log_to_json(const TrainConfig& cfg, const TrainLog& log) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : log.steps)
    steps.push_back({{"step", s.step}, {"loss", s.loss}, {"lr", s.lr}});
  nlohmann::json per_digit = nlohmann::json::array();
  for (const auto& p : log.per_digit)
    per_digit.push_back({{"step", p.step}, {"loss", p.loss}});
  return {{"config", train_config_to_json(cfg)},
          {"seed", log.seed},
          {"steps", steps},
          {"per_digit", per_digit},
          {"final", {{"loss", log.final_loss}, {"wall_secs", log.wall_secs}}}};
}

namespace {

// Copies the top-left block of src into dst (row-major 2-d tensors).
void copy_block(const TensorF& src, TensorF& dst, std::size_t rows, std::size_t cols,
                std::size_t src_row0 = 0, std::size_t src_col0 = 0, std::size_t dst_row0 = 0,
                std::size_t dst_col0 = 0) {
  const std::size_t sc = src.shape().back();
  const std::size_t dc = dst.shape().back();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* s = src.data() + (src_row0 + r) * sc + src_col0;
    float* d = dst.data() + (dst_row0 + r) * dc + dst_col0;
    std::copy(s, s + cols, d);
  }
}

void copy_prefix(const TensorF& src, TensorF& dst, std::size_t n) {
  std::copy(src.data(), src.data() + n, dst.data());
}

void copy_attention_slices(const model::LayerWeights& src, model::LayerWeights& dst,
                           int heads, int d_head, std::size_t dd) {
  // Q/K/V: head h owns output columns; O: head h owns input rows.
  for (int h = 0; h < heads; ++h) {
    const auto col0 = static_cast<std::size_t>(h * d_head);
    copy_block(src.wq, dst.wq, dd, static_cast<std::size_t>(d_head), 0, col0, 0, col0);
    copy_block(src.wk, dst.wk, dd, static_cast<std::size_t>(d_head), 0, col0, 0, col0);
    copy_block(src.wv, dst.wv, dd, static_cast<std::size_t>(d_head), 0, col0, 0, col0);
    copy_block(src.wo, dst.wo, static_cast<std::size_t>(d_head), dd, col0, 0, col0, 0);
    std::copy(src.bq.data() + col0, src.bq.data() + col0 + d_head, dst.bq.data() + col0);
    std::copy(src.bk.data() + col0, src.bk.data() + col0 + d_head, dst.bk.data() + col0);
    std::copy(src.bv.data() + col0, src.bv.data() + col0 + d_head, dst.bv.data() + col0);
  }
  copy_prefix(src.bo, dst.bo, dd);
}

void copy_mlp_slices(const model::LayerWeights& src, model::LayerWeights& dst, std::size_t dd,
                     std::size_t dm) {
  copy_block(src.w_in, dst.w_in, dd, dm);
  copy_prefix(src.b_in, dst.b_in, dm);
  copy_block(src.w_out, dst.w_out, dm, dd);
  copy_prefix(src.b_out, dst.b_out, dd);
}

}  // namespace

ModelWeights init_from_addition(const ModelWeights& donor, const model::ModelConfig& target_cfg) {
  const auto& dc = donor.cfg;
  target_cfg.validate();
  if (dc.n_digits != target_cfg.n_digits)
    throw std::invalid_argument("transfer init requires equal n_digits");
  if (dc.d_head != target_cfg.d_head)
    throw std::invalid_argument("transfer init requires equal d_head");
  if (dc.n_layers > target_cfg.n_layers || dc.n_heads > target_cfg.n_heads)
    throw std::invalid_argument("donor must not exceed the target shape");

  ModelWeights w = ModelWeights::init(target_cfg);
  const auto dd = static_cast<std::size_t>(dc.d_model());
  const auto dm = static_cast<std::size_t>(dc.d_mlp());

  copy_block(donor.tok_embed, w.tok_embed,
             static_cast<std::size_t>(model::ModelConfig::kVocabSize), dd);
  copy_block(donor.pos_embed, w.pos_embed, static_cast<std::size_t>(dc.context_len()), dd);
  for (int l = 0; l < dc.n_layers; ++l) {
    const auto& src = donor.layers[static_cast<std::size_t>(l)];
    auto& dst = w.layers[static_cast<std::size_t>(l)];
    copy_prefix(src.ln1_g, dst.ln1_g, dd);
    copy_prefix(src.ln1_b, dst.ln1_b, dd);
    copy_attention_slices(src, dst, dc.n_heads, dc.d_head, dd);
    copy_prefix(src.ln2_g, dst.ln2_g, dd);
    copy_prefix(src.ln2_b, dst.ln2_b, dd);
    copy_mlp_slices(src, dst, dd, dm);
  }
  copy_prefix(donor.lnf_g, w.lnf_g, dd);
  copy_prefix(donor.lnf_b, w.lnf_b, dd);
  copy_block(donor.unembed_w, w.unembed_w, dd,
             static_cast<std::size_t>(model::ModelConfig::kVocabSize));
  copy_prefix(donor.unembed_b, w.unembed_b,
              static_cast<std::size_t>(model::ModelConfig::kVocabSize));
  return w;
}

void freeze_reset_hook(std::int64_t step, ModelWeights& weights, const ModelWeights& donor,
                       const FreezeMode& mode) {
  if (mode.kind == FreezeKind::None) return;
  if (step <= 0 || step % mode.every != 0) return;
  const auto& dc = donor.cfg;
  const auto dd = static_cast<std::size_t>(dc.d_model());
  const auto dm = static_cast<std::size_t>(dc.d_mlp());
  for (int l = 0; l < dc.n_layers; ++l) {
    const auto& src = donor.layers[static_cast<std::size_t>(l)];
    auto& dst = weights.layers[static_cast<std::size_t>(l)];
    copy_attention_slices(src, dst, dc.n_heads, dc.d_head, dd);
    if (mode.kind == FreezeKind::AllEvery) copy_mlp_slices(src, dst, dd, dm);
  }
}

TrainResult train(const TrainConfig& cfg, const ModelWeights* donor, const std::string& out_dir) {
  cfg.validate();
  std::optional<model::LoadedCheckpoint> loaded_donor;
  if (cfg.init.kind == InitKind::FromAddition && donor == nullptr) {
    if (cfg.init.donor_path.empty())
      throw std::invalid_argument("FromAddition init needs a donor or donor_path");
    loaded_donor = model::load_checkpoint(cfg.init.donor_path);
    donor = &loaded_donor->weights;
  }
  if (cfg.freeze.kind != FreezeKind::None && donor == nullptr)
    throw std::invalid_argument("freeze modes need a donor");

  ModelWeights w = cfg.init.kind == InitKind::Fresh ? ModelWeights::init(cfg.model)
                                                    : init_from_addition(*donor, cfg.model);

  std::vector<TensorF> params;
  for (auto& [name, t] : w.named_params()) {
    (void)name;
    params.push_back(t);
  }
  nn::AdamW<float> opt(params, cfg.optim);
  const auto sched = nn::Schedule::standard(cfg.optim.lr, cfg.total_steps);

  const arith::Layout layout(cfg.model.n_digits);
  const int S = layout.total_len();
  const std::size_t rows = static_cast<std::size_t>(cfg.batch_size) * S;

  // Next-token targets; only answer-predicting positions carry loss.
  std::vector<std::int32_t> targets(rows, 0);
  std::vector<std::uint8_t> mask(rows, 0);
  for (int b = 0; b < cfg.batch_size; ++b)
    for (int pos = layout.pos_equals(); pos < S - 1; ++pos)
      mask[static_cast<std::size_t>(b) * S + pos] = 1;

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  TrainLog log;
  log.seed = cfg.model.seed;
  log.steps.reserve(static_cast<std::size_t>(cfg.total_steps));

  const auto t0 = std::chrono::steady_clock::now();
  int below_count = 0;
  std::int64_t step = 0;
  std::vector<float> per_row;
  for (; step < cfg.total_steps; ++step) {
    const auto batch = datagen::gen_batch(cfg.data, static_cast<std::uint64_t>(step),
                                          cfg.batch_size);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto* row = batch.tokens.data() + static_cast<std::size_t>(b) * S;
      for (int pos = 0; pos < S - 1; ++pos)
        targets[static_cast<std::size_t>(b) * S + pos] = row[pos + 1];
    }

    auto logits = model::train_forward(w, batch.tokens, static_cast<std::size_t>(cfg.batch_size),
                                       static_cast<std::size_t>(S));
    auto loss = nn::cross_entropy_nll(logits, std::span<const std::int32_t>(targets),
                                      std::span<const std::uint8_t>(mask), &per_row);
    const double loss_v = static_cast<double>(loss.item());
    if (!std::isfinite(loss_v))
      throw std::runtime_error("training diverged (non-finite loss) at step " +
                               std::to_string(step));
    const double lr = nn::lr_at(step, sched);
    loss.backward();
    opt.step(lr);
    if (donor != nullptr) freeze_reset_hook(step, w, *donor, cfg.freeze);

    log.steps.push_back({step, loss_v, lr});
    if (cfg.per_digit_every > 0 && step % cfg.per_digit_every == 0) {
      PerDigitRecord rec;
      rec.step = step;
      rec.loss.assign(static_cast<std::size_t>(layout.answer_len()), 0.0);
      for (int b = 0; b < cfg.batch_size; ++b)
        for (int slot = 0; slot < layout.answer_len(); ++slot)
          rec.loss[static_cast<std::size_t>(slot)] +=
              per_row[static_cast<std::size_t>(b) * S + layout.pos_equals() + slot];
      for (auto& v : rec.loss) v /= cfg.batch_size;
      log.per_digit.push_back(std::move(rec));
    }

    if (cfg.checkpoint_every > 0 && !out_dir.empty() && step > 0 &&
        step % cfg.checkpoint_every == 0) {
      model::save_checkpoint(out_dir + "/model_step" + std::to_string(step) + ".ckpt", w,
                             {{"step", step}, {"loss", loss_v}});
    }

    if (cfg.stop_loss > 0.0) {
      below_count = loss_v < cfg.stop_loss ? below_count + 1 : 0;
      if (below_count >= cfg.stop_patience) {
        ++step;
        break;
      }
    }
  }

  log.stopped_at_step = step;
  log.final_loss = log.steps.empty() ? 0.0 : log.steps.back().loss;
  log.wall_secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (!out_dir.empty()) {
    model::save_checkpoint(out_dir + "/model.ckpt", w,
                           {{"steps", step},
                            {"final_loss", log.final_loss},
                            {"train_config", train_config_to_json(cfg)}});
    std::ofstream f(out_dir + "/training_loss.json");
    f << train_log_to_json(cfg, log).dump(2) << "\n";
  }
  return {std::move(w), std::move(log)};
}

SweepResult seed_sweep(TrainConfig cfg, std::span<const std::uint64_t> seeds) {
  if (seeds.size() < 2) throw std::invalid_argument("seed sweep needs at least 2 seeds");
  SweepResult out;
  for (const auto seed : seeds) {
    cfg.model.seed = seed;
    cfg.data.seed = rng::derive(seed, 0xDA7A);
    const auto result = train(cfg);
    out.final_losses.emplace_back(seed, result.log.final_loss);
  }
  std::vector<double> losses;
  for (const auto& [s, l] : out.final_losses) losses.push_back(l);
  std::sort(losses.begin(), losses.end());
  out.min_loss = losses.front();
  out.max_loss = losses.back();
  out.median_loss = losses[losses.size() / 2];
  return out;
}

}  // namespace arithlab::train
