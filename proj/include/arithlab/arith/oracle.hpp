#pragma once

#include "arithlab/arith/types.hpp"

namespace arithlab::arith {

// Independent correctness reference: schoolbook right-to-left ripple
// carry/borrow on the digit arrays (exact for any width, no shared code
// with the cascade path).
Answer oracle_eval(const Question& q);

}  // namespace arithlab::arith
