#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "arithlab/arith/types.hpp"
#include "arithlab/common/rng.hpp"
#include "arithlab/interp/subtask.hpp"

namespace arithlab::interp {

// Question classes used for per-class usefulness and coverage accounting.
enum class QClass { Add, SubPos, SubNeg };

inline const char* qclass_name(QClass c) {
  switch (c) {
    case QClass::Add: return "add";
    case QClass::SubPos: return "sub_pos";
    case QClass::SubNeg: return "sub_neg";
  }
  return "?";
}

struct ProbeSet {
  std::string purpose;
  std::vector<arith::Question> questions;
};

// Uniform random questions of one operation.
ProbeSet uniform_probes(int n_digits, arith::Op op, int count, std::uint64_t seed);

// Enrichment-shaped probes (cascade-heavy for Add, negative-heavy for Sub).
ProbeSet enriched_probes(int n_digits, arith::Op op, int count, std::uint64_t seed);

// Rejection-sampled probes of one question class.
ProbeSet class_probes(int n_digits, QClass cls, int count, std::uint64_t seed);

// Three labeled probe sets that force a tri-state (or bi-state) subtask at
// one digit place to each of its values; other digits uniform. Class order:
// Zero, One, Uncertain. For subtasks without a reachable Uncertain class
// (e.g. place 0) the third set stays empty.
struct TriProbes {
  SubtaskKind kind = SubtaskKind::ST;
  int digit = 0;
  std::array<ProbeSet, 3> classes;
};

TriProbes tristate_probes(int n_digits, SubtaskKind kind, int digit, int per_class,
                          std::uint64_t seed);

// Binary-labeled probes for bit-valued subtasks (SV: resolved carry).
struct BitProbes {
  SubtaskKind kind = SubtaskKind::SV;
  int digit = 0;
  std::array<ProbeSet, 2> classes;  // bit value 0, 1
};

BitProbes bit_probes(int n_digits, SubtaskKind kind, int digit, int per_class,
                     std::uint64_t seed);

// A base/donor pair differing only in the targeted subtask's value at one
// digit place: the complementary subtask at that place is held equal (same
// SA for an ST pair, same ST class for an SA pair, and the borrow/diff
// analogues for subtraction kinds).
struct InterventionPair {
  arith::Question base;
  arith::Question donor;
};

std::vector<InterventionPair> make_intervention_pairs(int n_digits, SubtaskKind kind, int digit,
                                                      int count, std::uint64_t seed);

}  // namespace arithlab::interp
