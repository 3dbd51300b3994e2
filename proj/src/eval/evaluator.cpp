#include "arithlab/eval/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "arithlab/arith/cascade.hpp"
#include "arithlab/arith/complexity.hpp"
#include "arithlab/arith/oracle.hpp"
#include "arithlab/datagen/datagen.hpp"

namespace arithlab::eval {

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double betacf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 3e-16) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

namespace {

// Smallest x with I_x(a,b) >= p, bisected to 1e-12.
double beta_quantile(double p, double a, double b) {
  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (incomplete_beta(a, b, mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

Interval clopper_pearson(std::int64_t fails, std::int64_t n, double confidence) {
  if (n <= 0 || fails < 0 || fails > n)
    throw std::invalid_argument("clopper_pearson: need 0 <= fails <= n");
  const double alpha = 1.0 - confidence;
  Interval out;
  out.lo = fails == 0 ? 0.0
                      : beta_quantile(alpha / 2.0, static_cast<double>(fails),
                                      static_cast<double>(n - fails + 1));
  out.hi = fails == n ? 1.0
                      : beta_quantile(1.0 - alpha / 2.0, static_cast<double>(fails + 1),
                                      static_cast<double>(n - fails));
  return out;
}

namespace {

constexpr std::int64_t kShardSize = 4096;

struct ShardTally {
  std::int64_t n_add = 0, n_sub_pos = 0, n_sub_neg = 0;
  std::int64_t f_add = 0, f_sub_pos = 0, f_sub_neg = 0;
  std::map<std::string, std::int64_t> fails_per_quantum;
  std::map<std::string, std::int64_t> count_per_quantum;
};

ShardTally run_shard(const model::ModelWeights& w, std::int64_t count, double sub_fraction,
                     std::uint64_t shard_seed, int n_digits) {
  rng::Rng rng(shard_seed);
  std::vector<arith::Question> qs;
  std::vector<arith::Answer> expected;
  qs.reserve(static_cast<std::size_t>(count));
  expected.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    const auto op = rng.bernoulli(sub_fraction) ? arith::Op::Sub : arith::Op::Add;
    qs.push_back(datagen::gen_random_question(n_digits, op, rng));
    expected.push_back(arith::oracle_eval(qs.back()));
  }
  const auto matches = model::batch_matches(w, qs, expected, {}, 256);
  ShardTally t;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const bool fail = matches[i] == 0;
    const bool sub = qs[i].op == arith::Op::Sub;
    const bool neg = expected[i].sign() == arith::Sign::Minus;
    if (!sub) {
      t.n_add++;
      t.f_add += fail;
    } else if (neg) {
      t.n_sub_neg++;
      t.f_sub_neg += fail;
    } else {
      t.n_sub_pos++;
      t.f_sub_pos += fail;
    }
    const auto label = arith::classify_complexity(qs[i]).str();
    t.count_per_quantum[label]++;
    if (fail) t.fails_per_quantum[label]++;
  }
  return t;
}

}  // namespace

EvalReport evaluate(const model::ModelWeights& weights, std::int64_t n_questions,
                    double sub_fraction, std::uint64_t seed, int n_threads) {
  if (n_questions < 1) throw std::invalid_argument("evaluate: n_questions must be >= 1");
  if (sub_fraction < 0.0 || sub_fraction > 1.0)
    throw std::invalid_argument("evaluate: sub_fraction must be in [0,1]");
  if (n_threads <= 0)
    n_threads = std::max(1u, std::thread::hardware_concurrency());

  const std::int64_t n_shards = (n_questions + kShardSize - 1) / kShardSize;
  std::vector<ShardTally> tallies(static_cast<std::size_t>(n_shards));

  // Shard layout and per-shard seeds are independent of the thread count.
  std::atomic<std::int64_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::int64_t s = next.fetch_add(1);
      if (s >= n_shards) return;
      const std::int64_t count = std::min(kShardSize, n_questions - s * kShardSize);
      tallies[static_cast<std::size_t>(s)] =
          run_shard(weights, count, sub_fraction, rng::derive(seed, static_cast<std::uint64_t>(s)),
                    weights.cfg.n_digits);
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  EvalReport report;
  report.n_questions = n_questions;
  report.seed = seed;
  report.sub_fraction = sub_fraction;
  for (const auto& t : tallies) {  // merge in shard order
    report.add.n += t.n_add;
    report.add.fails += t.f_add;
    report.sub_pos.n += t.n_sub_pos;
    report.sub_pos.fails += t.f_sub_pos;
    report.sub_neg.n += t.n_sub_neg;
    report.sub_neg.fails += t.f_sub_neg;
    for (const auto& [k, v] : t.fails_per_quantum) report.fails_per_quantum[k] += v;
    for (const auto& [k, v] : t.count_per_quantum) report.count_per_quantum[k] += v;
  }
  report.total.n = n_questions;
  report.total.fails = report.add.fails + report.sub_pos.fails + report.sub_neg.fails;
  report.total.ci = clopper_pearson(report.total.fails, report.total.n);
  if (report.add.n > 0) report.add.ci = clopper_pearson(report.add.fails, report.add.n);
  if (report.sub_pos.n > 0)
    report.sub_pos.ci = clopper_pearson(report.sub_pos.fails, report.sub_pos.n);
  if (report.sub_neg.n > 0)
    report.sub_neg.ci = clopper_pearson(report.sub_neg.fails, report.sub_neg.n);
  return report;
}

std::map<std::string, double> complexity_histogram(int n_digits, std::int64_t samples,
                                                   arith::Op op, std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("complexity_histogram: samples must be >= 1");
  rng::Rng rng(rng::derive(seed, 0xC0417));
  std::map<std::string, std::int64_t> counts;
  for (int run = 0; run <= n_digits; ++run) {
    if (op == arith::Op::Add) {
      counts["S" + std::to_string(run)] = 0;
    } else {
      counts["M" + std::to_string(run)] = 0;
      counts["N" + std::to_string(run)] = 0;
    }
  }
  for (std::int64_t i = 0; i < samples; ++i) {
    const auto q = datagen::gen_random_question(n_digits, op, rng);
    counts[arith::classify_complexity(q).str()]++;
  }
  std::map<std::string, double> freqs;
  for (const auto& [k, v] : counts)
    freqs[k] = static_cast<double>(v) / static_cast<double>(samples);
  return freqs;
}

namespace {

nlohmann::json class_json(const ClassStats& c) {
  return {{"n", c.n},
          {"fails", c.fails},
          {"fail_rate", c.fail_rate()},
          {"ci_low", c.ci.lo},
          {"ci_high", c.ci.hi}};
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  return {{"n_questions", n_questions},
          {"seed", seed},
          {"sub_fraction", sub_fraction},
          {"total", class_json(total)},
          {"add", class_json(add)},
          {"sub_pos", class_json(sub_pos)},
          {"sub_neg", class_json(sub_neg)},
          {"fails_per_quantum", fails_per_quantum},
          {"count_per_quantum", count_per_quantum}};
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "class,n,fails,fail_rate,ci_low,ci_high\n";
  auto row = [&out](const char* name, const ClassStats& c) {
    out << name << "," << c.n << "," << c.fails << "," << c.fail_rate() << "," << c.ci.lo << ","
        << c.ci.hi << "\n";
  };
  row("total", total);
  row("add", add);
  row("sub_pos", sub_pos);
  row("sub_neg", sub_neg);
  for (const auto& [k, v] : count_per_quantum) {
    const auto fit = fails_per_quantum.find(k);
    out << "quantum_" << k << "," << v << "," << (fit == fails_per_quantum.end() ? 0 : fit->second)
        << ",,,\n";
  }
  return out.str();
}

}  // namespace arithlab::eval
