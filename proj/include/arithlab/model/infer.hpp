#pragma once

#include <span>
#include <vector>

#include "arithlab/arith/types.hpp"
#include "arithlab/arith/vocab.hpp"
#include "arithlab/model/weights.hpp"

namespace arithlab::model {

// Captured activations from one inference pass. Attention rows are
// post-softmax; head_contrib holds each head's contribution to the residual
// stream (its context vector pushed through that head's W_O rows, bias
// excluded); mlp_out is the MLP block output added to the residual.
struct ActivationCache {
  int batch = 0;
  int seq = 0;
  int layers = 0;
  int heads = 0;
  int d_model = 0;
  std::vector<std::vector<float>> attn;          // per layer: B*H*S*S
  std::vector<std::vector<float>> head_contrib;  // per layer: B*S*H*D
  std::vector<std::vector<float>> mlp_out;       // per layer: B*S*D
  std::vector<std::vector<float>> resid_pre;     // per layer: B*S*D
  std::vector<float> resid_final;                // B*S*D (before the final norm)

  std::span<const float> attn_row(int layer, int b, int head, int pos) const;
  std::span<const float> head_out(int layer, int b, int head, int pos) const;
  std::span<const float> mlp_row(int layer, int b, int pos) const;
  std::span<const float> resid_pre_row(int layer, int b, int pos) const;
  std::span<const float> resid_final_row(int b, int pos) const;
};

// Replacement of a node's output contribution (d_model values) before it is
// added to the residual stream. Applied to every row of the batch.
struct Patch {
  NodeId node;
  std::vector<float> values;
};

// Plain-float forward pass (no tape) with optional capture and patching.
// tokens is row-major batch x seq; logits receives batch*seq*vocab.
void infer_forward(const ModelWeights& w, std::span<const arith::TokenId> tokens,
                   int batch, int seq, std::vector<float>& logits,
                   ActivationCache* cache = nullptr, std::span<const Patch> patches = {});

// Greedy autoregressive decode of the n+2 answer tokens. Total for any
// weights: always returns a full token sequence.
std::vector<arith::TokenId> predict_tokens(const ModelWeights& w, const arith::Question& q,
                                           std::span<const Patch> patches = {});

// predict_tokens + decode; throws MalformedSequence if the sampled sequence
// is not a well-formed answer (possible for untrained weights).
arith::Answer predict(const ModelWeights& w, const arith::Question& q,
                      std::span<const Patch> patches = {});

// Per-question bitmask of answer slots whose teacher-forced argmax differs
// from `expected` (bit 0 = sign slot, bit k = the k-th answer token). A zero
// mask means greedy decode would emit exactly `expected`: the decode matches
// iff the argmax at every answer-predicting position matches.
std::vector<std::uint32_t> batch_mismatch_masks(const ModelWeights& w,
                                                std::span<const arith::Question> questions,
                                                std::span<const arith::Answer> expected,
                                                std::span<const Patch> patches = {},
                                                int batch_cap = 128);

// Convenience wrapper: mask == 0.
std::vector<std::uint8_t> batch_matches(const ModelWeights& w,
                                        std::span<const arith::Question> questions,
                                        std::span<const arith::Answer> expected,
                                        std::span<const Patch> patches = {},
                                        int batch_cap = 128);

}  // namespace arithlab::model
