#include "arithlab/interp/expectation.hpp"

#include <stdexcept>
#include <vector>

#include "arithlab/arith/cascade.hpp"

namespace arithlab::interp {

using arith::Answer;
using arith::Digit;
using arith::Op;
using arith::Question;
using arith::Sign;
using arith::TriState;

namespace {

// Carry/borrow-out bit at each place from a tri-state series, folding
// high-to-low with TriAdd.
std::vector<int> fold_bits(const std::vector<TriState>& tri) {
  std::vector<int> bits(tri.size());
  for (std::size_t k = 0; k < tri.size(); ++k) {
    TriState acc = tri[k];
    for (std::size_t i = k; i-- > 0;) acc = arith::tri_add(acc, tri[i]);
    bits[k] = acc == TriState::One ? 1 : 0;
  }
  return bits;
}

Answer add_from_parts(const std::vector<Digit>& sa_vals, const std::vector<int>& sv_bits) {
  const int n = static_cast<int>(sa_vals.size());
  std::vector<Digit> digits(static_cast<std::size_t>(n + 1), 0);
  digits[0] = static_cast<Digit>(sv_bits[static_cast<std::size_t>(n - 1)]);
  for (int k = 0; k < n; ++k) {
    const int carry = k == 0 ? 0 : sv_bits[static_cast<std::size_t>(k - 1)];
    digits[static_cast<std::size_t>(n - k)] =
        static_cast<Digit>((sa_vals[static_cast<std::size_t>(k)] + carry) % 10);
  }
  return Answer(Sign::Plus, std::move(digits));
}

// Exact ripple with the carry-out of `place` forced to `bit`.
Answer add_with_carry_override(const Question& q, int place, int bit) {
  const int n = q.n_digits();
  std::vector<Digit> digits(static_cast<std::size_t>(n + 1), 0);
  int carry = 0;
  for (int k = 0; k < n; ++k) {
    const int s = q.d.digit(k) + q.d_prime.digit(k) + carry;
    digits[static_cast<std::size_t>(n - k)] = static_cast<Digit>(s % 10);
    carry = s >= 10 ? 1 : 0;
    if (k == place) carry = bit;
  }
  digits[0] = static_cast<Digit>(carry);
  return Answer(Sign::Plus, std::move(digits));
}

Answer sub_from_parts(const Question& q, const std::vector<TriState>& mb,
                      const std::vector<TriState>& nb) {
  const int n = q.n_digits();
  const auto mv = fold_bits(mb);
  const auto nv = fold_bits(nb);
  const bool negative = mv[static_cast<std::size_t>(n - 1)] == 1;
  std::vector<Digit> digits(static_cast<std::size_t>(n + 1), 0);
  for (int k = 0; k < n; ++k) {
    const auto& bits = negative ? nv : mv;
    const int borrow = k == 0 ? 0 : bits[static_cast<std::size_t>(k - 1)];
    const Digit base = negative ? arith::diff_mod10(q.d_prime.digit(k), q.d.digit(k))
                                : arith::diff_mod10(q.d.digit(k), q.d_prime.digit(k));
    digits[static_cast<std::size_t>(n - k)] =
        arith::diff_mod10(base, static_cast<Digit>(borrow));
  }
  return Answer(negative ? Sign::Minus : Sign::Plus, std::move(digits));
}

}  // namespace

Answer expected_with_substitution(const Question& base, SubtaskKind kind, int digit,
                                  const Question& donor) {
  if (base.n_digits() != donor.n_digits())
    throw std::invalid_argument("base/donor widths differ");
  if (!has_digit(kind)) throw std::invalid_argument("kind has no substitution semantics");
  if (digit < 0 || digit >= base.n_digits())
    throw std::invalid_argument("substituted digit out of range");
  const int n = base.n_digits();

  if (is_addition_kind(kind)) {
    if (base.op != Op::Add || donor.op != Op::Add)
      throw std::invalid_argument("addition subtask on a subtraction question");
    switch (kind) {
      case SubtaskKind::SA: {
        std::vector<Digit> sa_vals(static_cast<std::size_t>(n));
        std::vector<TriState> st_vals(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
          sa_vals[static_cast<std::size_t>(k)] = arith::sa(base.d.digit(k), base.d_prime.digit(k));
          st_vals[static_cast<std::size_t>(k)] =
              arith::st(base.d.digit(k), base.d_prime.digit(k), k);
        }
        sa_vals[static_cast<std::size_t>(digit)] =
            arith::sa(donor.d.digit(digit), donor.d_prime.digit(digit));
        return add_from_parts(sa_vals, fold_bits(st_vals));
      }
      case SubtaskKind::ST: {
        std::vector<Digit> sa_vals(static_cast<std::size_t>(n));
        std::vector<TriState> st_vals(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
          sa_vals[static_cast<std::size_t>(k)] = arith::sa(base.d.digit(k), base.d_prime.digit(k));
          st_vals[static_cast<std::size_t>(k)] =
              arith::st(base.d.digit(k), base.d_prime.digit(k), k);
        }
        st_vals[static_cast<std::size_t>(digit)] =
            arith::st(donor.d.digit(digit), donor.d_prime.digit(digit), digit);
        return add_from_parts(sa_vals, fold_bits(st_vals));
      }
      case SubtaskKind::SC:
        return add_with_carry_override(base, digit,
                                       arith::sc(donor.d.digit(digit), donor.d_prime.digit(digit)));
      case SubtaskKind::SV:
        return add_with_carry_override(base, digit, arith::sv(donor, digit));
      default:
        break;
    }
  }

  if (base.op != Op::Sub || donor.op != Op::Sub)
    throw std::invalid_argument("subtraction subtask on an addition question");
  std::vector<TriState> mb(static_cast<std::size_t>(n)), nb(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    mb[static_cast<std::size_t>(k)] = arith::tricase_borrow(base.d.digit(k), base.d_prime.digit(k), k);
    nb[static_cast<std::size_t>(k)] = arith::tricase_borrow(base.d_prime.digit(k), base.d.digit(k), k);
  }

  switch (kind) {
    case SubtaskKind::MB:
    case SubtaskKind::MT:
      mb[static_cast<std::size_t>(digit)] =
          arith::tricase_borrow(donor.d.digit(digit), donor.d_prime.digit(digit), digit);
      return sub_from_parts(base, mb, nb);
    case SubtaskKind::NB:
      nb[static_cast<std::size_t>(digit)] =
          arith::tricase_borrow(donor.d_prime.digit(digit), donor.d.digit(digit), digit);
      return sub_from_parts(base, mb, nb);
    case SubtaskKind::MD: {
      Answer out = arith::sub_via_cascade(base);
      if (out.sign() == Sign::Minus) return out;  // positive branch not emitted
      const auto mv = fold_bits(mb);
      const int borrow = digit == 0 ? 0 : mv[static_cast<std::size_t>(digit - 1)];
      const Digit base_diff = arith::diff_mod10(donor.d.digit(digit), donor.d_prime.digit(digit));
      std::vector<Digit> digits = out.msf();
      digits[static_cast<std::size_t>(n - digit)] =
          arith::diff_mod10(base_diff, static_cast<Digit>(borrow));
      return Answer(out.sign(), std::move(digits));
    }
    case SubtaskKind::ND: {
      Answer out = arith::sub_via_cascade(base);
      if (out.sign() == Sign::Plus) return out;  // negative branch not emitted
      const auto nv = fold_bits(nb);
      const int borrow = digit == 0 ? 0 : nv[static_cast<std::size_t>(digit - 1)];
      const Digit base_diff = arith::diff_mod10(donor.d_prime.digit(digit), donor.d.digit(digit));
      std::vector<Digit> digits = out.msf();
      digits[static_cast<std::size_t>(n - digit)] =
          arith::diff_mod10(base_diff, static_cast<Digit>(borrow));
      return Answer(out.sign(), std::move(digits));
    }
    default:
      throw std::invalid_argument("no substitution semantics for this kind");
  }
}

}  // namespace arithlab::interp
