#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace arithlab::model {

struct ModelConfig {
  int n_digits = 5;
  int n_layers = 2;
  int n_heads = 3;
  int d_head = 64;
  std::uint64_t seed = 372001;

  static constexpr int kVocabSize = 15;

  int d_model() const { return n_heads * d_head; }
  int d_mlp() const { return 4 * d_model(); }
  int context_len() const { return 3 * n_digits + 4; }

  void validate() const {
    if (n_digits < 1) throw std::invalid_argument("n_digits must be positive");
    if (n_layers < 1 || n_layers > 4) throw std::invalid_argument("n_layers must be in 1..4");
    if (n_heads < 3 || n_heads > 4) throw std::invalid_argument("n_heads must be 3 or 4");
    if (d_head < 1) throw std::invalid_argument("d_head must be positive");
  }

  bool operator==(const ModelConfig&) const = default;
};

// A capturable/patchable site: one attention head or the MLP at a given
// (token position, layer).
struct NodeId {
  static constexpr int kMlp = -1;

  int pos = 0;
  int layer = 0;
  int head = kMlp;

  bool is_mlp() const { return head == kMlp; }

  // App-A style name, e.g. "P9L0H1"; MLP sites print as "P9L0M".
  std::string str() const {
    return "P" + std::to_string(pos) + "L" + std::to_string(layer) +
           (is_mlp() ? "M" : "H" + std::to_string(head));
  }

  auto operator<=>(const NodeId&) const = default;
};

}  // namespace arithlab::model
