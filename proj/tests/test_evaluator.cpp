#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "arithlab/eval/evaluator.hpp"
#include "arithlab/model/infer.hpp"

using namespace arithlab;

TEST_CASE("clopper_pearson matches the published table rows") {
  const auto a = eval::clopper_pearson(0, 1000000);
  CHECK(a.lo == 0.0);
  CHECK(a.hi == doctest::Approx(3.69e-6).epsilon(0.005));

  const auto b = eval::clopper_pearson(2, 1000000);
  CHECK(b.lo == doctest::Approx(2.42e-7).epsilon(0.005));
  CHECK(b.hi == doctest::Approx(7.22e-6).epsilon(0.005));

  const auto c = eval::clopper_pearson(12621, 1000000);
  CHECK(c.lo == doctest::Approx(1.24e-2).epsilon(0.005));
  CHECK(c.hi == doctest::Approx(1.28e-2).epsilon(0.005));
}

TEST_CASE("clopper_pearson closed forms and bounds") {
  // fails == 0: upper bound solves 1 - (alpha/2)^(1/n).
  for (std::int64_t n : {100, 10000, 1000000}) {
    const auto iv = eval::clopper_pearson(0, n);
    CHECK(iv.hi ==
          doctest::Approx(1.0 - std::pow(0.025, 1.0 / static_cast<double>(n))).epsilon(1e-6));
  }
  const auto full = eval::clopper_pearson(50, 50);
  CHECK(full.hi == 1.0);
  CHECK(full.lo < 1.0);

  const auto mid = eval::clopper_pearson(500, 1000);
  CHECK(mid.lo < 0.5);
  CHECK(0.5 < mid.hi);
  CHECK_THROWS(eval::clopper_pearson(5, 4));
}

TEST_CASE("incomplete beta sanity") {
  CHECK(eval::incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(eval::incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  // I_x(1,1) is the identity.
  CHECK(eval::incomplete_beta(1.0, 1.0, 0.37) == doctest::Approx(0.37));
  // Symmetry: I_x(a,b) = 1 - I_{1-x}(b,a).
  CHECK(eval::incomplete_beta(3.5, 1.25, 0.6) ==
        doctest::Approx(1.0 - eval::incomplete_beta(1.25, 3.5, 0.4)).epsilon(1e-10));
}

TEST_CASE("5-digit addition complexity frequencies match the known profile") {
  const auto freqs = eval::complexity_histogram(5, 200000, arith::Op::Add, 99);
  double sum = 0.0;
  for (const auto& [k, v] : freqs) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(freqs.at("S0") == doctest::Approx(0.05).epsilon(0.25));
  CHECK(freqs.at("S1") == doctest::Approx(0.21).epsilon(0.15));
  CHECK(freqs.at("S2") == doctest::Approx(0.34).epsilon(0.15));
  CHECK(freqs.at("S3") == doctest::Approx(0.28).epsilon(0.15));
  CHECK(freqs.at("S4") == doctest::Approx(0.11).epsilon(0.2));
  CHECK(freqs.at("S5") == doctest::Approx(0.02).epsilon(0.3));
}

TEST_CASE("evaluate is deterministic and partitions quanta") {
  model::ModelConfig cfg;
  cfg.n_digits = 2;
  cfg.n_layers = 2;
  cfg.n_heads = 3;
  cfg.d_head = 8;
  cfg.seed = 5;
  auto w = model::ModelWeights::init(cfg);

  const auto r1 = eval::evaluate(w, 2000, 0.5, 42, 1);
  const auto r2 = eval::evaluate(w, 2000, 0.5, 42, 2);
  CHECK(r1.total.fails == r2.total.fails);
  CHECK(r1.add.fails == r2.add.fails);
  CHECK(r1.fails_per_quantum == r2.fails_per_quantum);

  CHECK(r1.add.n + r1.sub_pos.n + r1.sub_neg.n == 2000);
  std::int64_t quantum_fails = 0;
  for (const auto& [k, v] : r1.fails_per_quantum) quantum_fails += v;
  CHECK(quantum_fails == r1.total.fails);
  // An untrained model fails essentially everything.
  CHECK(r1.total.fails > 1900);

  const auto j = r1.to_json();
  CHECK(j.at("total").at("fails").get<std::int64_t>() == r1.total.fails);
  CHECK(r1.to_csv().find("class,n,fails") == 0);
}
