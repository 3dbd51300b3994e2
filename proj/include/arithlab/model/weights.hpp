#pragma once

#include <string>
#include <utility>
#include <vector>

#include "arithlab/model/config.hpp"
#include "arithlab/nn/tensor.hpp"

namespace arithlab::model {

// Per-layer parameters. Q/K/V are [d_model, d_model] with head h owning
// output columns [h*d_head, (h+1)*d_head); W_O is [d_model, d_model] with
// head h owning the matching rows.
struct LayerWeights {
  nn::TensorF ln1_g, ln1_b;
  nn::TensorF wq, wk, wv, wo;
  nn::TensorF bq, bk, bv, bo;
  nn::TensorF ln2_g, ln2_b;
  nn::TensorF w_in, b_in;    // [d_model, d_mlp]
  nn::TensorF w_out, b_out;  // [d_mlp, d_model]
};

struct ModelWeights {
  ModelConfig cfg;
  nn::TensorF tok_embed;  // [vocab, d_model]
  nn::TensorF pos_embed;  // [context, d_model]
  std::vector<LayerWeights> layers;
  nn::TensorF lnf_g, lnf_b;
  nn::TensorF unembed_w;  // [d_model, vocab]
  nn::TensorF unembed_b;  // [vocab]

  // Fresh init from cfg.seed: normal(0, 0.02) matrices and embeddings, zero
  // biases, unit norm gains.
  static ModelWeights init(const ModelConfig& cfg);

  // Stable (name, tensor) enumeration; order defines the checkpoint layout.
  std::vector<std::pair<std::string, nn::TensorF>> named_params();
  std::vector<std::pair<std::string, const nn::TensorF*>> named_params_const() const;

  ModelWeights clone() const;
  std::size_t param_count() const;
};

}  // namespace arithlab::model
