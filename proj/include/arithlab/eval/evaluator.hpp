#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <json.hpp>

#include "arithlab/model/infer.hpp"

namespace arithlab::eval {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Exact (Clopper-Pearson) two-sided binomial interval for the failure rate,
// via Beta-quantile bisection. fails==0 gives lo==0; fails==n gives hi==1.
Interval clopper_pearson(std::int64_t fails, std::int64_t n, double confidence = 0.95);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

struct ClassStats {
  std::int64_t n = 0;
  std::int64_t fails = 0;
  Interval ci;

  double fail_rate() const { return n > 0 ? static_cast<double>(fails) / n : 0.0; }
};

struct EvalReport {
  std::int64_t n_questions = 0;
  std::uint64_t seed = 0;
  double sub_fraction = 0.0;
  ClassStats total;
  ClassStats add;
  ClassStats sub_pos;
  ClassStats sub_neg;
  std::map<std::string, std::int64_t> fails_per_quantum;
  std::map<std::string, std::int64_t> count_per_quantum;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Accuracy over uniform random questions (never enriched). A failure is any
// answer-token mismatch against the oracle. sub_fraction picks the Add/Sub
// mix; per-quantum tallies use classify_complexity. Shards deterministically
// across n_threads (0 = hardware concurrency) and merges in shard order.
EvalReport evaluate(const model::ModelWeights& weights, std::int64_t n_questions,
                    double sub_fraction, std::uint64_t seed, int n_threads = 0);

// Monte-Carlo frequency of each complexity quantum under uniform questions.
std::map<std::string, double> complexity_histogram(int n_digits, std::int64_t samples,
                                                   arith::Op op, std::uint64_t seed);

}  // namespace arithlab::eval
