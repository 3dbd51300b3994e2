#include <functional>
#include "arithlab/interp/schema.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

namespace arithlab::interp {

std::string Constraint::describe(const arith::Layout& layout) const {
  const std::string label = subtask_label(kind, digit);
  switch (type) {
    case Type::Coverage:
      return "coverage: at least one " + label + " node";
    case Type::WindowAll:
      return "window: every " + label + " node within [" + layout.role_name(lo_pos) + ", " +
             layout.role_name(hi_pos) + "]";
    case Type::DeadlineExists:
      return "deadline: some " + label + " node at or before " + layout.role_name(hi_pos);
    case Type::OrderAfter:
      return "order: every " + label + " node after some " +
             subtask_label(before_kind, before_digit) + " node";
  }
  return "?";
}

void AlgorithmSchema::validate() const {
  if (n_digits < 1) throw std::invalid_argument("schema n_digits must be positive");
  // Cycle check over the OrderAfter graph (kind,digit) -> (before_kind,before_digit).
  std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> edges;
  std::set<std::pair<int, int>> nodes;
  for (const auto& c : constraints) {
    if (c.type != Constraint::Type::OrderAfter) continue;
    const auto after = std::make_pair(static_cast<int>(c.kind), c.digit);
    const auto before = std::make_pair(static_cast<int>(c.before_kind), c.before_digit);
    edges[after].push_back(before);
    nodes.insert(after);
    nodes.insert(before);
  }
  std::map<std::pair<int, int>, int> state;  // 0 unseen, 1 open, 2 done
  std::function<void(const std::pair<int, int>&)> dfs = [&](const std::pair<int, int>& v) {
    state[v] = 1;
    for (const auto& w : edges[v]) {
      if (state[w] == 1) throw std::invalid_argument("schema ordering constraints are cyclic");
      if (state[w] == 0) dfs(w);
    }
    state[v] = 2;
  };
  for (const auto& v : nodes)
    if (state[v] == 0) dfs(v);
}

namespace {

nlohmann::json target_json(const AlgorithmSchema::Target& t) {
  return {{"kind", subtask_name(t.kind)},
          {"digit", t.digit},
          {"lo_pos", t.lo_pos},
          {"hi_pos", t.hi_pos},
          {"required", t.required}};
}

const char* type_name(Constraint::Type t) {
  switch (t) {
    case Constraint::Type::Coverage: return "coverage";
    case Constraint::Type::WindowAll: return "window_all";
    case Constraint::Type::DeadlineExists: return "deadline_exists";
    case Constraint::Type::OrderAfter: return "order_after";
  }
  return "?";
}

Constraint::Type type_from_name(const std::string& s) {
  if (s == "coverage") return Constraint::Type::Coverage;
  if (s == "window_all") return Constraint::Type::WindowAll;
  if (s == "deadline_exists") return Constraint::Type::DeadlineExists;
  if (s == "order_after") return Constraint::Type::OrderAfter;
  throw std::invalid_argument("unknown constraint type: " + s);
}

}  // namespace

nlohmann::json AlgorithmSchema::to_json() const {
  nlohmann::json targets_j = nlohmann::json::array();
  for (const auto& t : targets) targets_j.push_back(target_json(t));
  nlohmann::json cons = nlohmann::json::array();
  for (const auto& c : constraints) {
    nlohmann::json j{{"type", type_name(c.type)},
                     {"kind", subtask_name(c.kind)},
                     {"digit", c.digit},
                     {"lo_pos", c.lo_pos},
                     {"hi_pos", c.hi_pos}};
    if (c.type == Constraint::Type::OrderAfter) {
      j["before_kind"] = subtask_name(c.before_kind);
      j["before_digit"] = c.before_digit;
    }
    cons.push_back(std::move(j));
  }
  return {{"schema_version", 1},
          {"name", name},
          {"n_digits", n_digits},
          {"targets", targets_j},
          {"constraints", cons}};
}

AlgorithmSchema AlgorithmSchema::from_json(const nlohmann::json& j) {
  AlgorithmSchema s;
  s.name = j.at("name").get<std::string>();
  s.n_digits = j.at("n_digits").get<int>();
  for (const auto& t : j.at("targets")) {
    s.targets.push_back({subtask_from_name(t.at("kind").get<std::string>()),
                         t.at("digit").get<int>(), t.at("lo_pos").get<int>(),
                         t.at("hi_pos").get<int>(), t.at("required").get<bool>()});
  }
  for (const auto& c : j.at("constraints")) {
    Constraint cc;
    cc.type = type_from_name(c.at("type").get<std::string>());
    cc.kind = subtask_from_name(c.at("kind").get<std::string>());
    cc.digit = c.at("digit").get<int>();
    cc.lo_pos = c.value("lo_pos", 0);
    cc.hi_pos = c.value("hi_pos", 0);
    if (cc.type == Constraint::Type::OrderAfter) {
      cc.before_kind = subtask_from_name(c.at("before_kind").get<std::string>());
      cc.before_digit = c.at("before_digit").get<int>();
    }
    s.constraints.push_back(std::move(cc));
  }
  s.validate();
  return s;
}

AlgorithmSchema AlgorithmSchema::addition(int n_digits) {
  const arith::Layout lay(n_digits);
  AlgorithmSchema s;
  s.n_digits = n_digits;
  s.name = "addition";
  const int n = n_digits;

  for (int k = 0; k < n; ++k) {
    // SA_k: needed when predicting A_k; searched from D'_k onward.
    s.targets.push_back({SubtaskKind::SA, k, lay.pos_d_prime(k), lay.pos_predicting_answer(k),
                         /*required=*/true});
    // ST_k: resolved no later than the sign position (the top digit is
    // predicted there). k=0 is bi-state; searched but optional.
    s.targets.push_back({SubtaskKind::ST, k, lay.pos_d_prime(k), lay.pos_sign(),
                         /*required=*/k > 0});
    // SC/SV are redundant alternatives some models learn; never required.
    s.targets.push_back({SubtaskKind::SC, k, lay.pos_d_prime(k), lay.pos_predicting_answer(k),
                         /*required=*/false});
    if (k < n - 1)
      s.targets.push_back({SubtaskKind::SV, k, lay.pos_equals(), lay.pos_predicting_answer(k + 1),
                           /*required=*/false});
  }

  for (const auto& t : s.targets) {
    if (!t.required) continue;
    s.constraints.push_back(
        {Constraint::Type::Coverage, t.kind, t.digit, 0, 0, SubtaskKind::ST, -1});
    s.constraints.push_back(
        {Constraint::Type::WindowAll, t.kind, t.digit, t.lo_pos, t.hi_pos, SubtaskKind::ST, -1});
  }
  // Dependency deadlines: A_j needs every ST_k with k < j by the position
  // that predicts A_j.
  for (int k = 1; k < n; ++k)
    for (int j = k + 1; j <= n; ++j)
      s.constraints.push_back({Constraint::Type::DeadlineExists, SubtaskKind::ST, k, 0,
                               lay.pos_predicting_answer(j), SubtaskKind::ST, -1});
  // SA_k must exist by its answer digit's prediction step.
  for (int k = 0; k < n; ++k)
    s.constraints.push_back({Constraint::Type::DeadlineExists, SubtaskKind::SA, k, 0,
                             lay.pos_predicting_answer(k), SubtaskKind::ST, -1});
  // SV_k nodes sit after the ST_j (j <= k) they fold.
  for (int k = 1; k < n - 1; ++k)
    for (int j = 1; j <= k; ++j)
      s.constraints.push_back({Constraint::Type::OrderAfter, SubtaskKind::SV, k, 0, 0,
                               SubtaskKind::ST, j});
  s.validate();
  return s;
}

AlgorithmSchema AlgorithmSchema::subtraction(int n_digits) {
  const arith::Layout lay(n_digits);
  AlgorithmSchema s;
  s.n_digits = n_digits;
  s.name = "subtraction";
  const int n = n_digits;
  for (int k = 0; k < n; ++k) {
    s.targets.push_back({SubtaskKind::MD, k, lay.pos_d_prime(k), lay.pos_predicting_answer(k),
                         /*required=*/true});
    s.targets.push_back({SubtaskKind::ND, k, lay.pos_d_prime(k), lay.pos_predicting_answer(k),
                         /*required=*/false});
    s.targets.push_back({SubtaskKind::MT, k, lay.pos_d_prime(k), lay.pos_sign(),
                         /*required=*/k > 0});
    s.targets.push_back({SubtaskKind::MB, k, lay.pos_d_prime(k), lay.pos_predicting_answer(k),
                         /*required=*/false});
    s.targets.push_back({SubtaskKind::NB, k, lay.pos_d_prime(k), lay.pos_predicting_answer(k),
                         /*required=*/false});
  }
  for (const auto& t : s.targets) {
    if (!t.required) continue;
    s.constraints.push_back(
        {Constraint::Type::Coverage, t.kind, t.digit, 0, 0, SubtaskKind::ST, -1});
    s.constraints.push_back(
        {Constraint::Type::WindowAll, t.kind, t.digit, t.lo_pos, t.hi_pos, SubtaskKind::ST, -1});
  }
  for (int k = 1; k < n; ++k)
    for (int j = k + 1; j <= n; ++j)
      s.constraints.push_back({Constraint::Type::DeadlineExists, SubtaskKind::MT, k, 0,
                               lay.pos_predicting_answer(j), SubtaskKind::ST, -1});
  s.validate();
  return s;
}

AlgorithmSchema AlgorithmSchema::mixed(int n_digits) {
  const arith::Layout lay(n_digits);
  AlgorithmSchema s = addition(n_digits);
  s.name = "mixed";
  const AlgorithmSchema sub = subtraction(n_digits);
  s.targets.insert(s.targets.end(), sub.targets.begin(), sub.targets.end());
  s.constraints.insert(s.constraints.end(), sub.constraints.begin(), sub.constraints.end());
  // Class-routing roles: OPR may fire anywhere after the operator token,
  // SGN after the sign is emitted.
  s.targets.push_back({SubtaskKind::OPR, -1, lay.pos_operator(), lay.total_len() - 2,
                       /*required=*/false});
  s.targets.push_back({SubtaskKind::SGN, -1, lay.pos_sign(), lay.total_len() - 2,
                       /*required=*/false});
  s.validate();
  return s;
}

ConstraintReport check_constraints(const std::vector<SubtaskTag>& tags,
                                   const AlgorithmSchema& schema) {
  const arith::Layout lay(schema.n_digits);
  ConstraintReport report;
  auto tags_of = [&tags](SubtaskKind kind, int digit) {
    std::vector<const SubtaskTag*> out;
    for (const auto& t : tags)
      if (t.kind == kind && t.digit == digit) out.push_back(&t);
    return out;
  };

  for (const auto& c : schema.constraints) {
    ConstraintResult r;
    r.description = c.describe(lay);
    const auto matching = tags_of(c.kind, c.digit);
    switch (c.type) {
      case Constraint::Type::Coverage: {
        r.passed = !matching.empty();
        if (r.passed) {
          r.witness = matching.front()->node.str();
          for (std::size_t i = 1; i < matching.size(); ++i)
            r.witness += " " + matching[i]->node.str();
        } else {
          r.witness = "no tagged node";
        }
        break;
      }
      case Constraint::Type::WindowAll: {
        r.passed = true;
        for (const auto* t : matching) {
          if (t->node.pos < c.lo_pos || t->node.pos > c.hi_pos) {
            r.passed = false;
            r.witness = t->node.str() + " outside window";
            break;
          }
        }
        if (r.passed)
          r.witness = matching.empty() ? "vacuous (no tags)"
                                       : std::to_string(matching.size()) + " tag(s) in window";
        break;
      }
      case Constraint::Type::DeadlineExists: {
        r.passed = false;
        for (const auto* t : matching) {
          if (t->node.pos <= c.hi_pos) {
            r.passed = true;
            r.witness = t->node.str();
            break;
          }
        }
        if (!r.passed) r.witness = "no tag at or before " + lay.role_name(c.hi_pos);
        break;
      }
      case Constraint::Type::OrderAfter: {
        const auto before = tags_of(c.before_kind, c.before_digit);
        r.passed = true;
        for (const auto* t : matching) {
          const bool ok = std::any_of(before.begin(), before.end(), [&](const SubtaskTag* b) {
            return b->node.pos < t->node.pos;
          });
          if (!ok) {
            r.passed = false;
            r.witness = t->node.str() + " has no earlier " +
                        subtask_label(c.before_kind, c.before_digit) + " node";
            break;
          }
        }
        if (r.passed)
          r.witness = matching.empty() ? "vacuous (no tags)" : "ordering satisfied";
        break;
      }
    }
    if (!r.passed) report.failed++;
    report.results.push_back(std::move(r));
  }
  return report;
}

}  // namespace arithlab::interp
