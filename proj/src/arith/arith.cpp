#include <algorithm>
#include <cassert>

#include "arithlab/arith/cascade.hpp"
#include "arithlab/arith/complexity.hpp"
#include "arithlab/arith/oracle.hpp"
#include "arithlab/arith/types.hpp"
#include "arithlab/arith/vocab.hpp"

namespace arithlab::arith {

// ---------------------------------------------------------------------------
// Operand / Question / Answer

Operand::Operand(std::vector<Digit> digits_msf) : digits_(std::move(digits_msf)) {
  if (digits_.empty()) throw std::invalid_argument("operand needs at least one digit");
  for (Digit d : digits_) {
    if (d > 9) throw std::invalid_argument("operand digit out of range");
  }
}

Operand Operand::zero(int n_digits) {
  if (n_digits < 1) throw std::invalid_argument("n_digits must be positive");
  return Operand(std::vector<Digit>(static_cast<size_t>(n_digits), 0));
}

Operand Operand::from_value(std::uint64_t value, int n_digits) {
  Operand out = zero(n_digits);
  for (int place = 0; place < n_digits; ++place) {
    out.digits_[static_cast<size_t>(n_digits - 1 - place)] = static_cast<Digit>(value % 10);
    value /= 10;
  }
  if (value != 0) throw std::invalid_argument("value does not fit in n_digits");
  return out;
}

Operand Operand::from_string(const std::string& text, int n_digits) {
  if (text.empty() || static_cast<int>(text.size()) > n_digits)
    throw std::invalid_argument("operand string does not fit in n_digits");
  Operand out = zero(n_digits);
  const int pad = n_digits - static_cast<int>(text.size());
  for (size_t i = 0; i < text.size(); ++i) {
    if (text[i] < '0' || text[i] > '9')
      throw std::invalid_argument("operand string has a non-digit");
    out.digits_[static_cast<size_t>(pad) + i] = static_cast<Digit>(text[i] - '0');
  }
  return out;
}

void Operand::set_digit(int place, Digit d) {
  if (d > 9) throw std::invalid_argument("digit out of range");
  digits_[digits_.size() - 1 - static_cast<size_t>(place)] = d;
}

std::uint64_t Operand::value() const {
  if (n_digits() > 19) throw std::overflow_error("operand too wide for u64");
  std::uint64_t v = 0;
  for (Digit d : digits_) v = v * 10 + d;
  return v;
}

std::string Operand::str() const {
  std::string s(digits_.size(), '0');
  for (size_t i = 0; i < digits_.size(); ++i) s[i] = static_cast<char>('0' + digits_[i]);
  return s;
}

Question::Question(Op o, Operand lhs, Operand rhs)
    : op(o), d(std::move(lhs)), d_prime(std::move(rhs)) {
  if (d.n_digits() != d_prime.n_digits())
    throw std::invalid_argument("operands must have equal width");
}

Answer::Answer(Sign sign, std::vector<Digit> digits_msf)
    : sign_(sign), digits_(std::move(digits_msf)) {
  if (digits_.empty()) throw std::invalid_argument("answer needs at least one digit");
  for (Digit d : digits_) {
    if (d > 9) throw std::invalid_argument("answer digit out of range");
  }
}

bool Answer::is_zero() const {
  return std::all_of(digits_.begin(), digits_.end(), [](Digit d) { return d == 0; });
}

std::string Answer::str() const {
  std::string s(1, sign_char(sign_));
  for (Digit d : digits_) s += static_cast<char>('0' + d);
  return s;
}

// ---------------------------------------------------------------------------
// Vocabulary and layout

namespace vocab {

TokenId from_char(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  switch (c) {
    case '+': return kPlus;
    case '-': return kMinus;
    case '=': return kEquals;
    case '*': return kStar;
    case '/': return kSlash;
    default: throw std::invalid_argument(std::string("unknown symbol: ") + c);
  }
}

char to_char(TokenId id) {
  if (id >= 0 && id <= 9) return static_cast<char>('0' + id);
  switch (id) {
    case kPlus: return '+';
    case kMinus: return '-';
    case kEquals: return '=';
    case kStar: return '*';
    case kSlash: return '/';
    default: throw std::invalid_argument("unknown token id");
  }
}

}  // namespace vocab

Layout::Layout(int n_digits) : n_(n_digits) {
  if (n_ < 1) throw std::invalid_argument("n_digits must be positive");
}

Layout::Role Layout::role(int pos) const {
  if (pos < 0 || pos >= total_len()) throw std::out_of_range("position outside layout");
  if (pos < n_) return {RoleKind::FirstOperand, n_ - 1 - pos};
  if (pos == n_) return {RoleKind::Operator, -1};
  if (pos <= 2 * n_) return {RoleKind::SecondOperand, 2 * n_ - pos};
  if (pos == 2 * n_ + 1) return {RoleKind::Equals, -1};
  if (pos == 2 * n_ + 2) return {RoleKind::AnswerSign, -1};
  return {RoleKind::AnswerDigit, 3 * n_ + 3 - pos};
}

std::string Layout::role_name(int pos) const {
  const Role r = role(pos);
  switch (r.kind) {
    case RoleKind::FirstOperand: return "D" + std::to_string(r.place);
    case RoleKind::Operator: return "OP";
    case RoleKind::SecondOperand: return "D'" + std::to_string(r.place);
    case RoleKind::Equals: return "=";
    case RoleKind::AnswerSign: return "A" + std::to_string(n_ + 1);
    case RoleKind::AnswerDigit: return "A" + std::to_string(r.place);
  }
  return "?";
}

std::vector<TokenId> encode_question(const Question& q) {
  std::vector<TokenId> out;
  out.reserve(static_cast<size_t>(2 * q.n_digits() + 2));
  for (Digit d : q.d.msf()) out.push_back(vocab::digit_token(d));
  out.push_back(vocab::op_token(q.op));
  for (Digit d : q.d_prime.msf()) out.push_back(vocab::digit_token(d));
  out.push_back(vocab::kEquals);
  return out;
}

std::vector<TokenId> encode_answer(const Answer& a) {
  std::vector<TokenId> out;
  out.reserve(static_cast<size_t>(a.n_digits() + 1));
  out.push_back(vocab::sign_token(a.sign()));
  for (Digit d : a.msf()) out.push_back(vocab::digit_token(d));
  return out;
}

std::vector<TokenId> encode_full(const Question& q, const Answer& a) {
  std::vector<TokenId> out = encode_question(q);
  const std::vector<TokenId> ans = encode_answer(a);
  out.insert(out.end(), ans.begin(), ans.end());
  return out;
}

Answer decode_answer(std::span<const TokenId> tokens) {
  if (tokens.size() < 2) throw MalformedSequence("answer sequence too short");
  Sign sign;
  if (tokens[0] == vocab::kPlus) {
    sign = Sign::Plus;
  } else if (tokens[0] == vocab::kMinus) {
    sign = Sign::Minus;
  } else {
    throw MalformedSequence("answer must start with a sign token");
  }
  std::vector<Digit> digits;
  digits.reserve(tokens.size() - 1);
  for (size_t i = 1; i < tokens.size(); ++i) {
    if (!vocab::is_digit(tokens[i]))
      throw MalformedSequence("non-digit token after the answer sign");
    digits.push_back(static_cast<Digit>(tokens[i]));
  }
  return Answer(sign, std::move(digits));
}

std::string format_question(const Question& q) {
  return q.d.str() + op_char(q.op) + q.d_prime.str() + "=";
}

std::string format_canonical(const Question& q, const Answer& a) {
  return format_question(q) + a.str();
}

Question parse_question(const std::string& text) {
  // Accepts "555+448", "00555+00448=", etc. Width is the longer operand.
  size_t op_pos = std::string::npos;
  for (size_t i = 1; i < text.size(); ++i) {  // i=0 cannot be the operator
    if (text[i] == '+' || text[i] == '-') {
      op_pos = i;
      break;
    }
  }
  if (op_pos == std::string::npos) throw std::invalid_argument("no operator in question");
  std::string rhs = text.substr(op_pos + 1);
  if (!rhs.empty() && rhs.back() == '=') rhs.pop_back();
  const std::string lhs = text.substr(0, op_pos);
  if (lhs.empty() || rhs.empty()) throw std::invalid_argument("empty operand");
  const int n = static_cast<int>(std::max(lhs.size(), rhs.size()));
  const Op op = text[op_pos] == '+' ? Op::Add : Op::Sub;
  return Question(op, Operand::from_string(lhs, n), Operand::from_string(rhs, n));
}

// ---------------------------------------------------------------------------
// Cascade algorithms

int sv(const Question& q, int k) {
  assert(q.op == Op::Add);
  TriState acc = st(q.d.digit(k), q.d_prime.digit(k), k);
  for (int i = k - 1; i >= 0; --i)
    acc = tri_add(acc, st(q.d.digit(i), q.d_prime.digit(i), i));
  assert(acc != TriState::Uncertain);
  return acc == TriState::One ? 1 : 0;
}

int mv(const Question& q, int k, bool negated) {
  assert(q.op == Op::Sub);
  const Operand& a = negated ? q.d_prime : q.d;
  const Operand& b = negated ? q.d : q.d_prime;
  TriState acc = tricase_borrow(a.digit(k), b.digit(k), k);
  for (int i = k - 1; i >= 0; --i)
    acc = tri_add(acc, tricase_borrow(a.digit(i), b.digit(i), i));
  assert(acc != TriState::Uncertain);
  return acc == TriState::One ? 1 : 0;
}

Answer add_via_cascade(const Question& q) {
  if (q.op != Op::Add) throw std::invalid_argument("add_via_cascade needs an Add question");
  const int n = q.n_digits();
  std::vector<Digit> digits(static_cast<size_t>(n + 1), 0);
  digits[0] = static_cast<Digit>(sv(q, n - 1));  // A_n
  for (int k = 0; k < n; ++k) {
    const int carry_below = k == 0 ? 0 : sv(q, k - 1);
    const Digit a = sa(q.d.digit(k), q.d_prime.digit(k));
    digits[static_cast<size_t>(n - k)] = static_cast<Digit>((a + carry_below) % 10);
  }
  return Answer(Sign::Plus, std::move(digits));
}

Answer sub_via_cascade(const Question& q) {
  if (q.op != Op::Sub) throw std::invalid_argument("sub_via_cascade needs a Sub question");
  const int n = q.n_digits();
  const bool negative = mv(q, n - 1, /*negated=*/false) == 1;
  std::vector<Digit> digits(static_cast<size_t>(n + 1), 0);  // top digit stays 0
  for (int k = 0; k < n; ++k) {
    const int borrow_below = k == 0 ? 0 : mv(q, k - 1, negative);
    const Digit base = negative ? diff_mod10(q.d_prime.digit(k), q.d.digit(k))
                                : diff_mod10(q.d.digit(k), q.d_prime.digit(k));
    digits[static_cast<size_t>(n - k)] = diff_mod10(base, static_cast<Digit>(borrow_below));
  }
  return Answer(negative ? Sign::Minus : Sign::Plus, std::move(digits));
}

Answer cascade_eval(const Question& q) {
  return q.op == Op::Add ? add_via_cascade(q) : sub_via_cascade(q);
}

// ---------------------------------------------------------------------------
// Oracle and complexity

namespace {

// Lexicographic compare of equal-width msf digit vectors.
int compare_operands(const Operand& a, const Operand& b) {
  for (int i = 0; i < a.n_digits(); ++i) {
    if (a.msf()[static_cast<size_t>(i)] != b.msf()[static_cast<size_t>(i)])
      return a.msf()[static_cast<size_t>(i)] < b.msf()[static_cast<size_t>(i)] ? -1 : 1;
  }
  return 0;
}

std::vector<Digit> ripple_add(const Operand& a, const Operand& b) {
  const int n = a.n_digits();
  std::vector<Digit> out(static_cast<size_t>(n + 1), 0);
  int carry = 0;
  for (int place = 0; place < n; ++place) {
    const int s = a.digit(place) + b.digit(place) + carry;
    out[static_cast<size_t>(n - place)] = static_cast<Digit>(s % 10);
    carry = s / 10;
  }
  out[0] = static_cast<Digit>(carry);
  return out;
}

// Requires a >= b.
std::vector<Digit> ripple_sub(const Operand& a, const Operand& b) {
  const int n = a.n_digits();
  std::vector<Digit> out(static_cast<size_t>(n + 1), 0);
  int borrow = 0;
  for (int place = 0; place < n; ++place) {
    int diff = a.digit(place) - b.digit(place) - borrow;
    borrow = diff < 0 ? 1 : 0;
    if (diff < 0) diff += 10;
    out[static_cast<size_t>(n - place)] = static_cast<Digit>(diff);
  }
  assert(borrow == 0);
  return out;
}

}  // namespace

Answer oracle_eval(const Question& q) {
  if (q.op == Op::Add) return Answer(Sign::Plus, ripple_add(q.d, q.d_prime));
  const int cmp = compare_operands(q.d, q.d_prime);
  if (cmp >= 0) return Answer(Sign::Plus, ripple_sub(q.d, q.d_prime));
  return Answer(Sign::Minus, ripple_sub(q.d_prime, q.d));
}

ComplexityLabel classify_complexity(const Question& q) {
  const int n = q.n_digits();
  ComplexityLabel label;
  int best = 0, run = 0;
  if (q.op == Op::Add) {
    label.prefix = 'S';
    int carry = 0;
    for (int place = 0; place < n; ++place) {
      const int s = q.d.digit(place) + q.d_prime.digit(place) + carry;
      carry = s >= 10 ? 1 : 0;
      run = carry ? run + 1 : 0;
      best = std::max(best, run);
    }
  } else {
    const bool negative = compare_operands(q.d, q.d_prime) < 0;
    label.prefix = negative ? 'N' : 'M';
    const Operand& hi = negative ? q.d_prime : q.d;
    const Operand& lo = negative ? q.d : q.d_prime;
    int borrow = 0;
    for (int place = 0; place < n; ++place) {
      const int diff = hi.digit(place) - lo.digit(place) - borrow;
      borrow = diff < 0 ? 1 : 0;
      run = borrow ? run + 1 : 0;
      best = std::max(best, run);
    }
  }
  label.run = best;
  return label;
}

}  // namespace arithlab::arith
