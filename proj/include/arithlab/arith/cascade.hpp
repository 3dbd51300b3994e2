#pragma once

#include "arithlab/arith/types.hpp"

namespace arithlab::arith {

// Base Add: digit-wise sum modulo 10.
inline Digit sa(Digit a, Digit b) { return static_cast<Digit>((a + b) % 10); }

// Carry One: 1 iff the digit pair alone generates a carry.
inline int sc(Digit a, Digit b) { return a + b >= 10 ? 1 : 0; }

// TriCase for addition: classifies a digit pair as definitely carrying,
// definitely not, or uncertain (sums to 9, decided by the lower digits).
// At the units place there is no lower digit, so the result is never
// Uncertain.
inline TriState st(Digit a, Digit b, int place) {
  const int s = a + b;
  if (s >= 10) return TriState::One;
  if (s <= 8 || place == 0) return TriState::Zero;
  return TriState::Uncertain;
}

// Resolves a higher-digit tri-state with the next lower one: the higher
// value wins unless it is Uncertain.
inline TriState tri_add(TriState x, TriState y) {
  return x == TriState::Uncertain ? y : x;
}

// TriCase for subtraction: borrow when a < b, none when a > b, uncertain on
// equal digits. Equal digits at the units place generate no borrow. Serves
// the MB series with (D, D') and the NB series with (D', D).
inline TriState tricase_borrow(Digit a, Digit b, int place) {
  if (a < b) return TriState::One;
  if (a > b || place == 0) return TriState::Zero;
  return TriState::Uncertain;
}

// Multidigit carry-out of places k..0, computed by left-folding tri_add
// from the high digit down. Never Uncertain: the fold ends on the units
// place which is always concrete. Requires q.op == Add.
int sv(const Question& q, int k);

// Borrow analogue of sv. negated=false folds the MB series (D - D'),
// negated=true the NB series (D' - D). Requires q.op == Sub.
int mv(const Question& q, int k, bool negated);

// Exact n-digit addition via the tri-state cascade:
//   A_n = SV_{n-1},  A_k = (SA_k + SV_{k-1}) mod 10  with SV_{-1} = 0.
Answer add_via_cascade(const Question& q);

// Exact n-digit subtraction via the borrow cascade. The MV_{n-1} bit picks
// the sign; the answer digits come from the MD series (positive) or the ND
// series (negative), each corrected by its own borrow cascade. Equal
// operands produce "+000...0".
Answer sub_via_cascade(const Question& q);

// Dispatch on q.op.
Answer cascade_eval(const Question& q);

// Basic/Neg Diff: (a - b) mod 10. Serves MD with (D, D') and ND with
// (D', D).
inline Digit diff_mod10(Digit a, Digit b) {
  return static_cast<Digit>((a - b + 10) % 10);
}

}  // namespace arithlab::arith
