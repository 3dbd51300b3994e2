#pragma once

#include <stdexcept>
#include <string>

namespace arithlab::interp {

// Algorithmic roles a node can implement (App-A glossary naming).
enum class SubtaskKind {
  SA,   // base add (digit sum mod 10)
  SC,   // single-digit carry bit
  ST,   // tri-state carry
  SV,   // resolved multidigit carry bit
  MD,   // base diff, positive-answer branch
  MB,   // tri-state borrow, positive branch
  MT,   // tri-state borrow computed before '='
  ND,   // base diff, negative-answer branch
  NB,   // tri-state borrow, negative branch
  OPR,  // attends to the question operator token
  SGN,  // attends to the answer sign token
};

inline const char* subtask_name(SubtaskKind k) {
  switch (k) {
    case SubtaskKind::SA: return "SA";
    case SubtaskKind::SC: return "SC";
    case SubtaskKind::ST: return "ST";
    case SubtaskKind::SV: return "SV";
    case SubtaskKind::MD: return "MD";
    case SubtaskKind::MB: return "MB";
    case SubtaskKind::MT: return "MT";
    case SubtaskKind::ND: return "ND";
    case SubtaskKind::NB: return "NB";
    case SubtaskKind::OPR: return "OPR";
    case SubtaskKind::SGN: return "SGN";
  }
  return "?";
}

SubtaskKind subtask_from_name(const std::string& name);

// Kinds whose node activations should separate into the tri-state clusters.
inline bool is_tristate(SubtaskKind k) {
  return k == SubtaskKind::ST || k == SubtaskKind::MB || k == SubtaskKind::NB ||
         k == SubtaskKind::MT;
}

// Kinds indexed by a digit place (OPR/SGN are position roles, not digits).
inline bool has_digit(SubtaskKind k) {
  return k != SubtaskKind::OPR && k != SubtaskKind::SGN;
}

// Kinds belonging to addition questions.
inline bool is_addition_kind(SubtaskKind k) {
  return k == SubtaskKind::SA || k == SubtaskKind::SC || k == SubtaskKind::ST ||
         k == SubtaskKind::SV;
}

inline std::string subtask_label(SubtaskKind k, int digit) {
  return has_digit(k) ? subtask_name(k) + std::to_string(digit) : subtask_name(k);
}

}  // namespace arithlab::interp
