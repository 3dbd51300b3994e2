#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "arithlab/arith/cascade.hpp"
#include "arithlab/arith/oracle.hpp"
#include "arithlab/datagen/datagen.hpp"

using namespace arithlab;
using arith::Op;
using datagen::EnrichmentConfig;

namespace {

EnrichmentConfig add_only(int n, std::uint64_t seed) {
  EnrichmentConfig cfg;
  cfg.n_digits = n;
  cfg.seed = seed;
  cfg.add_weight = 1.0;
  cfg.sub_weight = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("gen_random_question is deterministic per seed and in range") {
  rng::Rng r1(42), r2(42), r3(43);
  const auto q1 = datagen::gen_random_question(5, Op::Add, r1);
  const auto q2 = datagen::gen_random_question(5, Op::Add, r2);
  const auto q3 = datagen::gen_random_question(5, Op::Add, r3);
  CHECK(q1 == q2);
  CHECK(q1 != q3);
  CHECK(q1.d.value() <= 99999);
  CHECK(q1.d_prime.value() <= 99999);
}

TEST_CASE("digit marginals are uniform within 1%") {
  rng::Rng r(1234);
  std::array<std::int64_t, 10> counts{};
  const int draws = 200000;  // 5 digits per operand, 2 operands
  for (int i = 0; i < draws / 10; ++i) {
    const auto q = datagen::gen_random_question(5, Op::Add, r);
    for (int k = 0; k < 5; ++k) {
      counts[q.d.digit(k)]++;
      counts[q.d_prime.digit(k)]++;
    }
  }
  const double expected = draws / 10.0;
  for (int d = 0; d <= 9; ++d)
    CHECK(std::abs(counts[d] - expected) / expected < 0.01 * 10);  // +-1% absolute of mass
}

TEST_CASE("carry-cascade enrichment rewrites chosen positions to sum 9") {
  rng::Rng r(7);
  int rewrites = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto base = datagen::gen_random_question(6, Op::Add, r);
    const auto enriched = datagen::enrich_carry_cascade(base, r);
    for (int k = 0; k < 6; ++k) {
      const bool changed = enriched.d.digit(k) != base.d.digit(k) ||
                           enriched.d_prime.digit(k) != base.d_prime.digit(k);
      if (changed) {
        CHECK(enriched.d.digit(k) + enriched.d_prime.digit(k) == 9);
        rewrites++;
      }
    }
  }
  CHECK(rewrites > 0);
}

TEST_CASE("enriched addition stream has more long cascades than uniform") {
  rng::Rng r(99);
  const int samples = 100000;
  int uniform_hits = 0, enriched_hits = 0;
  for (int i = 0; i < samples; ++i) {
    const auto q = datagen::gen_random_question(5, Op::Add, r);
    if (arith::classify_complexity(q).run >= 3) uniform_hits++;
    const auto e = datagen::enrich_carry_cascade(q, r);
    if (arith::classify_complexity(e).run >= 3) enriched_hits++;
  }
  CHECK(enriched_hits > uniform_hits);
}

TEST_CASE("negative-answer enrichment increments digits <= 8") {
  rng::Rng r(5);
  auto q = arith::parse_question("555-018");
  const auto e = datagen::enrich_negative_answer(q);
  CHECK(e.d_prime.str() == "129");
  auto nines = arith::parse_question("555-999");
  CHECK(datagen::enrich_negative_answer(nines).d_prime.str() == "999");

  int uniform_neg = 0, enriched_neg = 0;
  for (int i = 0; i < 100000; ++i) {
    const auto s = datagen::gen_random_question(5, Op::Sub, r);
    if (arith::oracle_eval(s).sign() == arith::Sign::Minus) uniform_neg++;
    if (arith::oracle_eval(datagen::enrich_negative_answer(s)).sign() == arith::Sign::Minus)
      enriched_neg++;
  }
  CHECK(enriched_neg > uniform_neg);
}

TEST_CASE("equal-operand enrichment is idempotent and yields positive zero") {
  rng::Rng r(6);
  const auto q = datagen::gen_random_question(4, Op::Sub, r);
  const auto e = datagen::enrich_equal_operands(q);
  CHECK(e.d == e.d_prime);
  CHECK(datagen::enrich_equal_operands(e) == e);
  const auto ans = arith::oracle_eval(e);
  CHECK(ans.sign() == arith::Sign::Plus);
  CHECK(ans.is_zero());
}

TEST_CASE("gen_batch determinism and row validity") {
  const auto cfg = add_only(4, 777);
  const auto b1 = datagen::gen_batch(cfg, 3, 16);
  const auto b2 = datagen::gen_batch(cfg, 3, 16);
  CHECK(b1.tokens == b2.tokens);
  const auto b3 = datagen::gen_batch(cfg, 4, 16);
  CHECK(b1.tokens != b3.tokens);
  auto other = cfg;
  other.seed = 778;
  CHECK(datagen::gen_batch(other, 3, 16).tokens != b1.tokens);

  // Every row decodes to a valid question whose answer segment matches the oracle.
  const arith::Layout lay(4);
  for (int row = 0; row < b1.batch_size; ++row) {
    const auto* row_toks = b1.tokens.data() + static_cast<size_t>(row) * lay.total_len();
    const auto& q = b1.questions[static_cast<size_t>(row)];
    CHECK(std::vector<arith::TokenId>(row_toks, row_toks + lay.question_len()) ==
          arith::encode_question(q));
    const auto ans = arith::decode_answer(
        std::span<const arith::TokenId>(row_toks + lay.question_len(), lay.answer_len()));
    CHECK(ans == arith::oracle_eval(q));
  }
}

TEST_CASE("curriculum mix approaches the configured weights") {
  EnrichmentConfig cfg;
  cfg.n_digits = 3;
  cfg.seed = 31;
  cfg.add_weight = 0.2;
  cfg.sub_weight = 0.8;
  int subs = 0, total = 0;
  for (std::uint64_t step = 0; step < 400; ++step) {
    const auto b = datagen::gen_batch(cfg, step, 64);
    for (const auto& q : b.questions) {
      subs += q.op == Op::Sub ? 1 : 0;
      total++;
    }
  }
  const double frac = static_cast<double>(subs) / total;
  CHECK(frac == doctest::Approx(0.8).epsilon(0.05));

  const auto all_add = datagen::gen_batch(add_only(3, 1), 0, 64);
  for (const auto& q : all_add.questions) CHECK(q.op == Op::Add);
}

TEST_CASE("config validation rejects bad probabilities and weights") {
  EnrichmentConfig cfg;
  cfg.enriched_fraction = 1.5;
  CHECK_THROWS(cfg.validate());
  cfg.enriched_fraction = 0.6;
  cfg.add_weight = 0.7;
  cfg.sub_weight = 0.7;
  CHECK_THROWS(cfg.validate());
}
