#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace arithlab::arith {

enum class Op : std::uint8_t { Add, Sub };
enum class Sign : std::uint8_t { Plus, Minus };

// Three-valued carry/borrow state. Uncertain means "decided by the next
// lower digit".
enum class TriState : std::uint8_t { Zero, One, Uncertain };

using Digit = std::uint8_t;  // 0..9, validated at container boundaries

inline char op_char(Op op) { return op == Op::Add ? '+' : '-'; }
inline char sign_char(Sign s) { return s == Sign::Plus ? '+' : '-'; }

// Fixed-width unsigned operand, stored most-significant digit first.
// Leading zeros are part of the representation: operands are always
// zero-padded to n digits.
class Operand {
 public:
  Operand(std::vector<Digit> digits_msf);
  static Operand zero(int n_digits);
  static Operand from_value(std::uint64_t value, int n_digits);
  static Operand from_string(const std::string& text, int n_digits);

  int n_digits() const { return static_cast<int>(digits_.size()); }

  // Place-value access: digit(0) is the units digit.
  Digit digit(int place) const { return digits_[digits_.size() - 1 - place]; }
  void set_digit(int place, Digit d);

  const std::vector<Digit>& msf() const { return digits_; }

  std::uint64_t value() const;  // throws for widths that overflow u64
  std::string str() const;

  bool operator==(const Operand&) const = default;

 private:
  std::vector<Digit> digits_;
};

struct Question {
  Op op = Op::Add;
  Operand d;
  Operand d_prime;

  Question(Op o, Operand lhs, Operand rhs);
  int n_digits() const { return d.n_digits(); }

  bool operator==(const Question&) const = default;
};

// Signed n+1 digit answer, most-significant first. Addition answers and
// zero answers always carry sign Plus.
class Answer {
 public:
  Answer(Sign sign, std::vector<Digit> digits_msf);

  Sign sign() const { return sign_; }
  int n_digits() const { return static_cast<int>(digits_.size()); }
  Digit digit(int place) const { return digits_[digits_.size() - 1 - place]; }
  const std::vector<Digit>& msf() const { return digits_; }

  bool is_zero() const;
  std::string str() const;  // e.g. "+1003", "-0004"

  bool operator==(const Answer&) const = default;

 private:
  Sign sign_;
  std::vector<Digit> digits_;
};

}  // namespace arithlab::arith
