#include "arithlab/datagen/datagen.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

#include "arithlab/arith/cascade.hpp"
#include "arithlab/arith/oracle.hpp"

namespace arithlab::datagen {

using arith::Op;
using arith::Question;

void EnrichmentConfig::validate() const {
  if (enriched_fraction < 0.0 || enriched_fraction > 1.0)
    throw std::invalid_argument("enriched_fraction must be in [0,1]");
  if (equal_operand_freq < 0.0 || equal_operand_freq > 1.0)
    throw std::invalid_argument("equal_operand_freq must be in [0,1]");
  if (add_weight < 0.0 || sub_weight < 0.0 ||
      std::abs(add_weight + sub_weight - 1.0) > 1e-9)
    throw std::invalid_argument("curriculum weights must be non-negative and sum to 1");
  if (n_digits < 1) throw std::invalid_argument("n_digits must be positive");
}

Question gen_random_question(int n_digits, Op op, rng::Rng& rng) {
  if (n_digits < 1) throw std::invalid_argument("n_digits must be positive");
  std::vector<arith::Digit> a(static_cast<size_t>(n_digits));
  std::vector<arith::Digit> b(static_cast<size_t>(n_digits));
  for (auto& d : a) d = static_cast<arith::Digit>(rng.digit());
  for (auto& d : b) d = static_cast<arith::Digit>(rng.digit());
  return Question(op, arith::Operand(std::move(a)), arith::Operand(std::move(b)));
}

Question enrich_carry_cascade(Question q, rng::Rng& rng) {
  if (q.op != Op::Add) throw std::invalid_argument("carry-cascade enrichment needs Add");
  const bool rewrite_first = rng.bernoulli(0.5);
  arith::Operand& target = rewrite_first ? q.d : q.d_prime;
  const arith::Operand& other = rewrite_first ? q.d_prime : q.d;
  for (int place = 0; place < q.n_digits(); ++place) {
    if (rng.bernoulli(0.5))
      target.set_digit(place, static_cast<arith::Digit>(9 - other.digit(place)));
  }
  return q;
}

Question enrich_negative_answer(Question q) {
  if (q.op != Op::Sub) throw std::invalid_argument("negative-answer enrichment needs Sub");
  for (int place = 0; place < q.n_digits(); ++place) {
    const arith::Digit d = q.d_prime.digit(place);
    if (d <= 8) q.d_prime.set_digit(place, static_cast<arith::Digit>(d + 1));
  }
  return q;
}

Question enrich_equal_operands(Question q) {
  if (q.op != Op::Sub) throw std::invalid_argument("equal-operand enrichment needs Sub");
  q.d_prime = q.d;
  return q;
}

Batch gen_batch(const EnrichmentConfig& cfg, std::uint64_t step, int batch_size) {
  cfg.validate();
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");

  rng::Rng rng(rng::derive(cfg.seed, step));
  const arith::Layout layout(cfg.n_digits);

  Batch batch;
  batch.n_digits = cfg.n_digits;
  batch.batch_size = batch_size;
  batch.tokens.reserve(static_cast<size_t>(batch_size) * layout.total_len());
  batch.targets.reserve(static_cast<size_t>(batch_size) * layout.answer_len());
  batch.complexity.reserve(static_cast<size_t>(batch_size));
  batch.questions.reserve(static_cast<size_t>(batch_size));

  for (int row = 0; row < batch_size; ++row) {
    const Op op = rng.bernoulli(cfg.sub_weight) ? Op::Sub : Op::Add;
    Question q = gen_random_question(cfg.n_digits, op, rng);
    if (op == Op::Sub && rng.bernoulli(cfg.equal_operand_freq)) {
      q = enrich_equal_operands(std::move(q));
    } else if (rng.bernoulli(cfg.enriched_fraction)) {
      q = op == Op::Add ? enrich_carry_cascade(std::move(q), rng)
                        : enrich_negative_answer(std::move(q));
    }

    const arith::Answer answer = arith::cascade_eval(q);
    assert(answer == arith::oracle_eval(q));

    const auto full = arith::encode_full(q, answer);
    batch.tokens.insert(batch.tokens.end(), full.begin(), full.end());
    batch.targets.insert(batch.targets.end(),
                         full.begin() + layout.question_len(), full.end());
    batch.complexity.push_back(arith::classify_complexity(q));
    batch.questions.push_back(std::move(q));
  }
  return batch;
}

}  // namespace arithlab::datagen
