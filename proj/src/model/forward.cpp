#include "arithlab/model/forward.hpp"

#include <cmath>

namespace arithlab::model {

using nn::TensorF;

TensorF train_forward(ModelWeights& w, std::span<const arith::TokenId> tokens,
                      std::size_t batch, std::size_t seq) {
  if (seq > static_cast<std::size_t>(w.cfg.context_len()))
    throw std::invalid_argument("sequence longer than the model context");
  const auto heads = static_cast<std::size_t>(w.cfg.n_heads);
  const float alpha = 1.0f / std::sqrt(static_cast<float>(w.cfg.d_head));

  TensorF x = nn::embedding(w.tok_embed, tokens, batch, seq);
  x = nn::add_position(x, w.pos_embed);
  for (auto& lw : w.layers) {
    TensorF normed = nn::layer_norm(x, lw.ln1_g, lw.ln1_b);
    TensorF q = nn::split_heads(nn::linear(normed, lw.wq, lw.bq), heads);
    TensorF k = nn::split_heads(nn::linear(normed, lw.wk, lw.bk), heads);
    TensorF v = nn::split_heads(nn::linear(normed, lw.wv, lw.bv), heads);
    TensorF probs = nn::causal_softmax(nn::attn_scores(q, k, alpha));
    TensorF ctx = nn::merge_heads(nn::attn_mix(probs, v));
    x = nn::add(x, nn::linear(ctx, lw.wo, lw.bo));

    TensorF normed2 = nn::layer_norm(x, lw.ln2_g, lw.ln2_b);
    TensorF hidden = nn::gelu(nn::linear(normed2, lw.w_in, lw.b_in));
    x = nn::add(x, nn::linear(hidden, lw.w_out, lw.b_out));
  }
  x = nn::layer_norm(x, w.lnf_g, w.lnf_b);
  return nn::linear(x, w.unembed_w, w.unembed_b);
}

}  // namespace arithlab::model
