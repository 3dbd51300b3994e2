#pragma once

#include <string>

#include "arithlab/arith/types.hpp"

namespace arithlab::arith {

// Calculation-complexity quantum of a question: the length of the longest
// consecutive run of carry (addition) or borrow (subtraction) positions,
// found by exact simulation. Prefix S for addition, M for subtraction with
// a non-negative answer, N for a negative answer.
struct ComplexityLabel {
  char prefix = 'S';
  int run = 0;

  std::string str() const { return prefix + std::to_string(run); }
  bool operator==(const ComplexityLabel&) const = default;
};

ComplexityLabel classify_complexity(const Question& q);

}  // namespace arithlab::arith
