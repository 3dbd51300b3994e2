#pragma once

#include "arithlab/arith/types.hpp"
#include "arithlab/interp/subtask.hpp"

namespace arithlab::interp {

// Expected answer when the value of one subtask inside `base` is replaced
// by the value it takes in `donor`. Computed purely from the symbolic
// cascade algorithms (never from a model), including counterfactual states
// no real digit pair realizes, e.g. SA swapped while ST stays fixed.
arith::Answer expected_with_substitution(const arith::Question& base, SubtaskKind kind,
                                         int digit, const arith::Question& donor);

}  // namespace arithlab::interp
