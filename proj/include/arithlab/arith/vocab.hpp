#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "arithlab/arith/types.hpp"

namespace arithlab::arith {

using TokenId = std::int32_t;

// Fixed 15-symbol vocabulary. Ids are part of the checkpoint format and
// must never be reordered.
namespace vocab {
inline constexpr TokenId kPlus = 10;
inline constexpr TokenId kMinus = 11;
inline constexpr TokenId kEquals = 12;
inline constexpr TokenId kStar = 13;
inline constexpr TokenId kSlash = 14;
inline constexpr int kSize = 15;

TokenId from_char(char c);
char to_char(TokenId id);
inline bool is_digit(TokenId id) { return id >= 0 && id <= 9; }
inline TokenId digit_token(Digit d) { return static_cast<TokenId>(d); }
inline TokenId op_token(Op op) { return op == Op::Add ? kPlus : kMinus; }
inline TokenId sign_token(Sign s) { return s == Sign::Plus ? kPlus : kMinus; }
}  // namespace vocab

// Token-position layout of a question/answer sequence:
//   P0..P(n-1)        D_{n-1}..D_0
//   P(n)              operator
//   P(n+1)..P(2n)     D'_{n-1}..D'_0
//   P(2n+1)           '='
//   P(2n+2)           answer sign (the A_{n+1} slot)
//   P(2n+3)..P(3n+3)  A_n..A_0
// Total length 3n+4.
class Layout {
 public:
  explicit Layout(int n_digits);

  int n_digits() const { return n_; }
  int total_len() const { return 3 * n_ + 4; }
  int question_len() const { return 2 * n_ + 2; }  // through '='
  int answer_len() const { return n_ + 2; }        // sign + n+1 digits

  int pos_d(int place) const { return n_ - 1 - place; }
  int pos_operator() const { return n_; }
  int pos_d_prime(int place) const { return 2 * n_ - place; }
  int pos_equals() const { return 2 * n_ + 1; }
  int pos_sign() const { return 2 * n_ + 2; }
  int pos_answer(int place) const { return 3 * n_ + 3 - place; }

  // Position whose logits predict the given answer token (the previous
  // position under next-token decoding).
  int pos_predicting_sign() const { return pos_equals(); }
  int pos_predicting_answer(int place) const { return pos_answer(place) - 1; }

  enum class RoleKind : std::uint8_t {
    FirstOperand,
    Operator,
    SecondOperand,
    Equals,
    AnswerSign,
    AnswerDigit,
  };
  struct Role {
    RoleKind kind;
    int place;  // digit place for operand/answer roles, -1 otherwise
  };
  Role role(int pos) const;

  // App-A style role names: "D3", "D'0", "OP", "=", "A6" (the sign slot is
  // named A_{n+1}).
  std::string role_name(int pos) const;

 private:
  int n_;
};

struct MalformedSequence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Question-part encoding: digits most-significant first, zero-padded,
// length 2n+2 (through the '=' token).
std::vector<TokenId> encode_question(const Question& q);

// Answer-part encoding: sign token followed by n+1 digit tokens.
std::vector<TokenId> encode_answer(const Answer& a);

// Full 3n+4 token sequence.
std::vector<TokenId> encode_full(const Question& q, const Answer& a);

// Inverse of encode_answer. Throws MalformedSequence if the first token is
// not a sign or a non-digit appears after it.
Answer decode_answer(std::span<const TokenId> tokens);

// Canonical text forms used by the CLI and fixtures:
//   question "00555+00448=" (trailing '=' optional on input)
//   full     "00555+00448=+001003"
std::string format_question(const Question& q);
std::string format_canonical(const Question& q, const Answer& a);
Question parse_question(const std::string& text);

}  // namespace arithlab::arith
