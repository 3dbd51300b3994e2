#pragma once

#include <cstdint>
#include <vector>

#include "arithlab/arith/complexity.hpp"
#include "arithlab/arith/types.hpp"
#include "arithlab/arith/vocab.hpp"
#include "arithlab/common/rng.hpp"

namespace arithlab::datagen {

// Stream configuration for the infinite enriched generator. A stream is
// fully determined by (seed, step).
struct EnrichmentConfig {
  double enriched_fraction = 0.6;
  double equal_operand_freq = 0.006;  // applied to subtraction rows
  double add_weight = 1.0;            // curriculum weights, must sum to 1
  double sub_weight = 0.0;
  int n_digits = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Batch {
  int n_digits = 0;
  int batch_size = 0;
  std::vector<arith::TokenId> tokens;   // row-major batch_size x (3n+4)
  std::vector<arith::TokenId> targets;  // row-major batch_size x (n+2), the answer tokens
  std::vector<arith::ComplexityLabel> complexity;
  std::vector<arith::Question> questions;

  int seq_len() const { return 3 * n_digits + 4; }
  int answer_len() const { return n_digits + 2; }
};

// Operands uniform over [0, 10^n).
arith::Question gen_random_question(int n_digits, arith::Op op, rng::Rng& rng);

// Picks one operand at random and rewrites a random subset of its digit
// positions (each included with probability 1/2) so the pair at each chosen
// position sums to 9, raising the odds of a long carry cascade.
arith::Question enrich_carry_cascade(arith::Question q, rng::Rng& rng);

// Adds 1 to every second-operand digit that is 8 or less, biasing the
// stream toward negative answers.
arith::Question enrich_negative_answer(arith::Question q);

// D' := D. The all-zero positive answer edge case.
arith::Question enrich_equal_operands(arith::Question q);

// Fresh batch for the given step (infinite-data regime). Targets come from
// the cascade algorithms and are assert-checked against the oracle in debug
// builds.
Batch gen_batch(const EnrichmentConfig& cfg, std::uint64_t step, int batch_size = 64);

}  // namespace arithlab::datagen
