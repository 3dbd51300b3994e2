#include "arithlab/interp/probes.hpp"

#include <stdexcept>

#include "arithlab/arith/cascade.hpp"
#include "arithlab/arith/oracle.hpp"
#include "arithlab/datagen/datagen.hpp"

namespace arithlab::interp {

using arith::Digit;
using arith::Op;
using arith::Operand;
using arith::Question;

SubtaskKind subtask_from_name(const std::string& name) {
  for (SubtaskKind k :
       {SubtaskKind::SA, SubtaskKind::SC, SubtaskKind::ST, SubtaskKind::SV, SubtaskKind::MD,
        SubtaskKind::MB, SubtaskKind::MT, SubtaskKind::ND, SubtaskKind::NB, SubtaskKind::OPR,
        SubtaskKind::SGN}) {
    if (name == subtask_name(k)) return k;
  }
  throw std::invalid_argument("unknown subtask kind: " + name);
}

namespace {

Op op_of(SubtaskKind kind) { return is_addition_kind(kind) ? Op::Add : Op::Sub; }

struct DigitPair {
  Digit a, b;
};

// Digit pairs realizing one class of a subtask at a given place.
// Tri-state kinds use class ids 0 (Zero), 1 (One), 2 (Uncertain); value
// kinds (SA/MD/ND) use the digit value itself.
std::vector<DigitPair> pairs_for_class(SubtaskKind kind, int place, int cls) {
  std::vector<DigitPair> out;
  for (int a = 0; a <= 9; ++a)
    for (int b = 0; b <= 9; ++b) {
      const auto da = static_cast<Digit>(a);
      const auto db = static_cast<Digit>(b);
      int c;
      switch (kind) {
        case SubtaskKind::ST:
        case SubtaskKind::SC:
        case SubtaskKind::SV:
          c = static_cast<int>(arith::st(da, db, place));
          break;
        case SubtaskKind::MB:
        case SubtaskKind::MT:
          c = static_cast<int>(arith::tricase_borrow(da, db, place));
          break;
        case SubtaskKind::NB:
          c = static_cast<int>(arith::tricase_borrow(db, da, place));
          break;
        case SubtaskKind::SA:
          c = arith::sa(da, db);
          break;
        case SubtaskKind::MD:
          c = arith::diff_mod10(da, db);
          break;
        case SubtaskKind::ND:
          c = arith::diff_mod10(db, da);
          break;
        default:
          throw std::invalid_argument("subtask has no digit-pair classes");
      }
      if (c == cls) out.push_back({da, db});
    }
  return out;
}

DigitPair sample(const std::vector<DigitPair>& pool, rng::Rng& rng) {
  if (pool.empty()) throw std::logic_error("empty digit-pair pool");
  return pool[rng.below(pool.size())];
}

void set_pair(Question& q, int place, DigitPair p) {
  q.d.set_digit(place, p.a);
  q.d_prime.set_digit(place, p.b);
}

}  // namespace

ProbeSet uniform_probes(int n_digits, Op op, int count, std::uint64_t seed) {
  rng::Rng rng(rng::derive(seed, 0x9087));
  ProbeSet out;
  out.purpose = std::string("uniform_") + (op == Op::Add ? "add" : "sub");
  for (int i = 0; i < count; ++i)
    out.questions.push_back(datagen::gen_random_question(n_digits, op, rng));
  return out;
}

ProbeSet enriched_probes(int n_digits, Op op, int count, std::uint64_t seed) {
  rng::Rng rng(rng::derive(seed, 0x3412));
  ProbeSet out;
  out.purpose = std::string("enriched_") + (op == Op::Add ? "add" : "sub");
  for (int i = 0; i < count; ++i) {
    auto q = datagen::gen_random_question(n_digits, op, rng);
    q = op == Op::Add ? datagen::enrich_carry_cascade(std::move(q), rng)
                      : datagen::enrich_negative_answer(std::move(q));
    out.questions.push_back(std::move(q));
  }
  return out;
}

ProbeSet class_probes(int n_digits, QClass cls, int count, std::uint64_t seed) {
  rng::Rng rng(rng::derive(seed, 0x5150));
  ProbeSet out;
  out.purpose = std::string("class_") + qclass_name(cls);
  while (static_cast<int>(out.questions.size()) < count) {
    const Op op = cls == QClass::Add ? Op::Add : Op::Sub;
    auto q = datagen::gen_random_question(n_digits, op, rng);
    if (cls != QClass::Add) {
      const bool neg = arith::mv(q, n_digits - 1, false) == 1;
      if (neg != (cls == QClass::SubNeg)) continue;
    }
    out.questions.push_back(std::move(q));
  }
  return out;
}

TriProbes tristate_probes(int n_digits, SubtaskKind kind, int digit, int per_class,
                          std::uint64_t seed) {
  if (!is_tristate(kind) && kind != SubtaskKind::SC)
    throw std::invalid_argument("tristate_probes needs a tri-state kind");
  rng::Rng rng(rng::derive(seed, 0x7217));
  TriProbes out;
  out.kind = kind;
  out.digit = digit;
  const Op op = op_of(kind);
  for (int cls = 0; cls < 3; ++cls) {
    out.classes[static_cast<std::size_t>(cls)].purpose =
        subtask_label(kind, digit) + "_class" + std::to_string(cls);
    const auto pool = pairs_for_class(kind, digit, cls);
    if (pool.empty()) continue;  // Uncertain unreachable at place 0
    for (int i = 0; i < per_class; ++i) {
      auto q = datagen::gen_random_question(n_digits, op, rng);
      set_pair(q, digit, sample(pool, rng));
      out.classes[static_cast<std::size_t>(cls)].questions.push_back(std::move(q));
    }
  }
  return out;
}

BitProbes bit_probes(int n_digits, SubtaskKind kind, int digit, int per_class,
                     std::uint64_t seed) {
  if (kind != SubtaskKind::SV) throw std::invalid_argument("bit_probes supports SV");
  rng::Rng rng(rng::derive(seed, 0xB17));
  BitProbes out;
  out.kind = kind;
  out.digit = digit;
  out.classes[0].purpose = subtask_label(kind, digit) + "_bit0";
  out.classes[1].purpose = subtask_label(kind, digit) + "_bit1";
  int guard = 0;
  while ((static_cast<int>(out.classes[0].questions.size()) < per_class ||
          static_cast<int>(out.classes[1].questions.size()) < per_class) &&
         guard++ < per_class * 1000) {
    auto q = datagen::gen_random_question(n_digits, Op::Add, rng);
    const int bit = arith::sv(q, digit);
    auto& dst = out.classes[static_cast<std::size_t>(bit)];
    if (static_cast<int>(dst.questions.size()) < per_class) dst.questions.push_back(std::move(q));
  }
  return out;
}

std::vector<InterventionPair> make_intervention_pairs(int n_digits, SubtaskKind kind, int digit,
                                                      int count, std::uint64_t seed) {
  if (!has_digit(kind)) throw std::invalid_argument("kind has no digit-pair interventions");
  if (digit < 0 || digit >= n_digits) throw std::invalid_argument("digit out of range");
  rng::Rng rng(rng::derive(seed, 0x1A17));
  const Op op = op_of(kind);
  const int top = n_digits - 1;

  std::vector<InterventionPair> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Question shared = datagen::gen_random_question(n_digits, op, rng);

    // Pin the leading pair so the answer class is independent of the
    // targeted place (subtraction kinds need a stable branch).
    if (digit != top) {
      if (kind == SubtaskKind::MD || kind == SubtaskKind::MB || kind == SubtaskKind::MT) {
        const auto hi = static_cast<Digit>(1 + rng.below(9));
        shared.d.set_digit(top, hi);
        shared.d_prime.set_digit(top, static_cast<Digit>(rng.below(hi)));
      } else if (kind == SubtaskKind::ND || kind == SubtaskKind::NB) {
        const auto hi = static_cast<Digit>(1 + rng.below(9));
        shared.d_prime.set_digit(top, hi);
        shared.d.set_digit(top, static_cast<Digit>(rng.below(hi)));
      }
    }

    DigitPair base_pair{}, donor_pair{};
    switch (kind) {
      case SubtaskKind::ST:
      case SubtaskKind::SC:
      case SubtaskKind::SV: {
        // Same SA, carry class 0 <-> 1: sums s and s+10 for s <= 8.
        const int s = static_cast<int>(rng.below(9));
        const int a0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(s) + 1));
        base_pair = {static_cast<Digit>(a0), static_cast<Digit>(s - a0)};
        const int lo = s + 1;  // a in [s+1-9, 9] keeps b=s+10-a in range
        const int a1 = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(9 - s)));
        donor_pair = {static_cast<Digit>(a1), static_cast<Digit>(s + 10 - a1)};
        break;
      }
      case SubtaskKind::SA: {
        // Same carry class, two different sums.
        const bool carry = rng.bernoulli(0.5);
        int s0 = carry ? 10 + static_cast<int>(rng.below(9)) : static_cast<int>(rng.below(9));
        int s1;
        do {
          s1 = carry ? 10 + static_cast<int>(rng.below(9)) : static_cast<int>(rng.below(9));
        } while (s1 == s0);
        auto pick = [&rng](int s) {
          const int lo = std::max(0, s - 9), hi = std::min(9, s);
          const int a = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
          return DigitPair{static_cast<Digit>(a), static_cast<Digit>(s - a)};
        };
        base_pair = pick(s0);
        donor_pair = pick(s1);
        break;
      }
      case SubtaskKind::MB:
      case SubtaskKind::MT:
      case SubtaskKind::NB: {
        // Same diff value, borrow class 0 <-> 1.
        const int d = 1 + static_cast<int>(rng.below(9));
        const int a0 = d + static_cast<int>(rng.below(static_cast<std::uint64_t>(10 - d)));
        DigitPair no_borrow{static_cast<Digit>(a0), static_cast<Digit>(a0 - d)};
        const int a1 = static_cast<int>(rng.below(static_cast<std::uint64_t>(d)));
        DigitPair borrow{static_cast<Digit>(a1), static_cast<Digit>(a1 - d + 10)};
        if (kind == SubtaskKind::NB) {
          std::swap(no_borrow.a, no_borrow.b);  // classes defined on (D', D)
          std::swap(borrow.a, borrow.b);
        }
        base_pair = no_borrow;
        donor_pair = borrow;
        break;
      }
      case SubtaskKind::MD:
      case SubtaskKind::ND: {
        // Same borrow class, two different diffs. Away from the top digit
        // both classes are available; at the top the class must keep the
        // answer in this kind's branch.
        bool borrow_cls = rng.bernoulli(0.5);
        if (digit == top) borrow_cls = false;
        int d0 = 1 + static_cast<int>(rng.below(9));
        int d1;
        do {
          d1 = 1 + static_cast<int>(rng.below(9));
        } while (d1 == d0);
        auto pick = [&rng, borrow_cls](int d) {
          if (!borrow_cls) {
            const int a = d + static_cast<int>(rng.below(static_cast<std::uint64_t>(10 - d)));
            return DigitPair{static_cast<Digit>(a), static_cast<Digit>(a - d)};
          }
          const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(d)));
          return DigitPair{static_cast<Digit>(a), static_cast<Digit>(a - d + 10)};
        };
        base_pair = pick(d0);
        donor_pair = pick(d1);
        if (kind == SubtaskKind::ND) {
          std::swap(base_pair.a, base_pair.b);
          std::swap(donor_pair.a, donor_pair.b);
        }
        break;
      }
      default:
        throw std::invalid_argument("no intervention recipe for this kind");
    }

    if (rng.bernoulli(0.5)) std::swap(base_pair, donor_pair);
    InterventionPair pair{shared, shared};
    set_pair(pair.base, digit, base_pair);
    set_pair(pair.donor, digit, donor_pair);
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace arithlab::interp
