#include "arithlab/model/weights.hpp"

#include "arithlab/common/rng.hpp"

namespace arithlab::model {

using nn::TensorF;

namespace {
constexpr float kInitStd = 0.02f;

TensorF matrix(std::size_t r, std::size_t c, rng::Rng& rng) {
  return TensorF::randn({r, c}, rng, kInitStd, /*requires_grad=*/true);
}

TensorF zeros1(std::size_t n) { return TensorF::zeros({n}, /*requires_grad=*/true); }
TensorF ones1(std::size_t n) { return TensorF::full({n}, 1.0f, /*requires_grad=*/true); }
}  // namespace

ModelWeights ModelWeights::init(const ModelConfig& cfg) {
  cfg.validate();
  rng::Rng rng(rng::derive(cfg.seed, 0xA11C0DE));
  const auto d = static_cast<std::size_t>(cfg.d_model());
  const auto dm = static_cast<std::size_t>(cfg.d_mlp());
  const auto v = static_cast<std::size_t>(ModelConfig::kVocabSize);

  ModelWeights w;
  w.cfg = cfg;
  w.tok_embed = matrix(v, d, rng);
  w.pos_embed = matrix(static_cast<std::size_t>(cfg.context_len()), d, rng);
  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerWeights lw;
    lw.ln1_g = ones1(d);
    lw.ln1_b = zeros1(d);
    lw.wq = matrix(d, d, rng);
    lw.wk = matrix(d, d, rng);
    lw.wv = matrix(d, d, rng);
    lw.wo = matrix(d, d, rng);
    lw.bq = zeros1(d);
    lw.bk = zeros1(d);
    lw.bv = zeros1(d);
    lw.bo = zeros1(d);
    lw.ln2_g = ones1(d);
    lw.ln2_b = zeros1(d);
    lw.w_in = matrix(d, dm, rng);
    lw.b_in = zeros1(dm);
    lw.w_out = matrix(dm, d, rng);
    lw.b_out = zeros1(d);
    w.layers.push_back(std::move(lw));
  }
  w.lnf_g = ones1(d);
  w.lnf_b = zeros1(d);
  w.unembed_w = matrix(d, v, rng);
  w.unembed_b = zeros1(v);
  return w;
}

std::vector<std::pair<std::string, TensorF>> ModelWeights::named_params() {
  std::vector<std::pair<std::string, TensorF>> out;
  out.emplace_back("embed.tokens", tok_embed);
  out.emplace_back("embed.pos", pos_embed);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    auto& lw = layers[l];
    out.emplace_back(p + "ln1.gain", lw.ln1_g);
    out.emplace_back(p + "ln1.bias", lw.ln1_b);
    out.emplace_back(p + "attn.wq", lw.wq);
    out.emplace_back(p + "attn.wk", lw.wk);
    out.emplace_back(p + "attn.wv", lw.wv);
    out.emplace_back(p + "attn.wo", lw.wo);
    out.emplace_back(p + "attn.bq", lw.bq);
    out.emplace_back(p + "attn.bk", lw.bk);
    out.emplace_back(p + "attn.bv", lw.bv);
    out.emplace_back(p + "attn.bo", lw.bo);
    out.emplace_back(p + "ln2.gain", lw.ln2_g);
    out.emplace_back(p + "ln2.bias", lw.ln2_b);
    out.emplace_back(p + "mlp.w_in", lw.w_in);
    out.emplace_back(p + "mlp.b_in", lw.b_in);
    out.emplace_back(p + "mlp.w_out", lw.w_out);
    out.emplace_back(p + "mlp.b_out", lw.b_out);
  }
  out.emplace_back("final_norm.gain", lnf_g);
  out.emplace_back("final_norm.bias", lnf_b);
  out.emplace_back("unembed.w", unembed_w);
  out.emplace_back("unembed.b", unembed_b);
  return out;
}

// Mirrors named_params() order exactly; that order defines the checkpoint
// tensor layout.
std::vector<std::pair<std::string, const TensorF*>> ModelWeights::named_params_const() const {
  std::vector<std::pair<std::string, const TensorF*>> out;
  out.emplace_back("embed.tokens", &tok_embed);
  out.emplace_back("embed.pos", &pos_embed);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    const auto& lw = layers[l];
    out.emplace_back(p + "ln1.gain", &lw.ln1_g);
    out.emplace_back(p + "ln1.bias", &lw.ln1_b);
    out.emplace_back(p + "attn.wq", &lw.wq);
    out.emplace_back(p + "attn.wk", &lw.wk);
    out.emplace_back(p + "attn.wv", &lw.wv);
    out.emplace_back(p + "attn.wo", &lw.wo);
    out.emplace_back(p + "attn.bq", &lw.bq);
    out.emplace_back(p + "attn.bk", &lw.bk);
    out.emplace_back(p + "attn.bv", &lw.bv);
    out.emplace_back(p + "attn.bo", &lw.bo);
    out.emplace_back(p + "ln2.gain", &lw.ln2_g);
    out.emplace_back(p + "ln2.bias", &lw.ln2_b);
    out.emplace_back(p + "mlp.w_in", &lw.w_in);
    out.emplace_back(p + "mlp.b_in", &lw.b_in);
    out.emplace_back(p + "mlp.w_out", &lw.w_out);
    out.emplace_back(p + "mlp.b_out", &lw.b_out);
  }
  out.emplace_back("final_norm.gain", &lnf_g);
  out.emplace_back("final_norm.bias", &lnf_b);
  out.emplace_back("unembed.w", &unembed_w);
  out.emplace_back("unembed.b", &unembed_b);
  return out;
}

ModelWeights ModelWeights::clone() const {
  ModelWeights out;
  out.cfg = cfg;
  auto copy = [](const TensorF& t) {
    return TensorF::from_vector(t.shape(), t.values(), /*requires_grad=*/true);
  };
  out.tok_embed = copy(tok_embed);
  out.pos_embed = copy(pos_embed);
  for (const auto& lw : layers) {
    LayerWeights nl;
    nl.ln1_g = copy(lw.ln1_g);
    nl.ln1_b = copy(lw.ln1_b);
    nl.wq = copy(lw.wq);
    nl.wk = copy(lw.wk);
    nl.wv = copy(lw.wv);
    nl.wo = copy(lw.wo);
    nl.bq = copy(lw.bq);
    nl.bk = copy(lw.bk);
    nl.bv = copy(lw.bv);
    nl.bo = copy(lw.bo);
    nl.ln2_g = copy(lw.ln2_g);
    nl.ln2_b = copy(lw.ln2_b);
    nl.w_in = copy(lw.w_in);
    nl.b_in = copy(lw.b_in);
    nl.w_out = copy(lw.w_out);
    nl.b_out = copy(lw.b_out);
    out.layers.push_back(std::move(nl));
  }
  out.lnf_g = copy(lnf_g);
  out.lnf_b = copy(lnf_b);
  out.unembed_w = copy(unembed_w);
  out.unembed_b = copy(unembed_b);
  return out;
}

std::size_t ModelWeights::param_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_params_const()) {
    (void)name;
    n += t->size();
  }
  return n;
}

}  // namespace arithlab::model
