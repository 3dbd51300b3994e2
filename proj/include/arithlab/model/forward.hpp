#pragma once

#include <span>

#include "arithlab/arith/vocab.hpp"
#include "arithlab/model/weights.hpp"
#include "arithlab/nn/ops.hpp"

namespace arithlab::model {

// Tape-building forward pass for training. tokens is row-major B x S.
// Returns logits [B, S, vocab].
nn::TensorF train_forward(ModelWeights& w, std::span<const arith::TokenId> tokens,
                          std::size_t batch, std::size_t seq);

}  // namespace arithlab::model
