#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "arithlab/arith/cascade.hpp"
#include "arithlab/arith/oracle.hpp"
#include "arithlab/interp/analyzer.hpp"
#include "arithlab/interp/expectation.hpp"
#include "arithlab/interp/facts.hpp"
#include "arithlab/interp/maps.hpp"
#include "arithlab/interp/probes.hpp"
#include "arithlab/interp/schema.hpp"

using namespace arithlab;
using interp::QClass;
using interp::SubtaskKind;
using model::ModelConfig;
using model::ModelWeights;
using model::NodeId;

namespace {

ModelConfig tiny_cfg(int n_digits = 3) {
  ModelConfig cfg;
  cfg.n_digits = n_digits;
  cfg.n_layers = 2;
  cfg.n_heads = 3;
  cfg.d_head = 8;
  cfg.seed = 7;
  return cfg;
}

interp::Analyzer::Options tiny_opts() {
  interp::Analyzer::Options opt;
  opt.reference_questions = 500;
  opt.probe_count = 64;
  opt.pca_per_class = 20;
  opt.intervention_pairs = 10;
  return opt;
}

}  // namespace

TEST_CASE("probe recipes satisfy their predicates") {
  const auto tri = interp::tristate_probes(4, SubtaskKind::ST, 2, 30, 5);
  REQUIRE(tri.classes[0].questions.size() == 30);
  for (const auto& q : tri.classes[0].questions)
    CHECK(arith::st(q.d.digit(2), q.d_prime.digit(2), 2) == arith::TriState::Zero);
  for (const auto& q : tri.classes[1].questions)
    CHECK(arith::st(q.d.digit(2), q.d_prime.digit(2), 2) == arith::TriState::One);
  for (const auto& q : tri.classes[2].questions)
    CHECK(arith::st(q.d.digit(2), q.d_prime.digit(2), 2) == arith::TriState::Uncertain);

  // Place 0 has no Uncertain class.
  const auto tri0 = interp::tristate_probes(4, SubtaskKind::ST, 0, 10, 6);
  CHECK(tri0.classes[2].questions.empty());

  const auto neg = interp::class_probes(3, QClass::SubNeg, 40, 7);
  for (const auto& q : neg.questions)
    CHECK(arith::oracle_eval(q).sign() == arith::Sign::Minus);

  const auto borrow = interp::tristate_probes(4, SubtaskKind::MB, 1, 20, 8);
  for (const auto& q : borrow.classes[2].questions)
    CHECK(q.d.digit(1) == q.d_prime.digit(1));
}

TEST_CASE("intervention pairs differ only at the targeted place") {
  for (const auto kind : {SubtaskKind::ST, SubtaskKind::SA, SubtaskKind::MB, SubtaskKind::MD,
                          SubtaskKind::NB, SubtaskKind::ND}) {
    const int digit = 1;
    const auto pairs = interp::make_intervention_pairs(4, kind, digit, 50, 17);
    REQUIRE(pairs.size() == 50);
    for (const auto& p : pairs) {
      for (int k = 0; k < 4; ++k) {
        if (k == digit) continue;
        CHECK(p.base.d.digit(k) == p.donor.d.digit(k));
        CHECK(p.base.d_prime.digit(k) == p.donor.d_prime.digit(k));
      }
      const auto a = p.base.d.digit(digit), b = p.base.d_prime.digit(digit);
      const auto a2 = p.donor.d.digit(digit), b2 = p.donor.d_prime.digit(digit);
      switch (kind) {
        case SubtaskKind::ST:
          CHECK(arith::sa(a, b) == arith::sa(a2, b2));
          CHECK(arith::st(a, b, digit) != arith::st(a2, b2, digit));
          break;
        case SubtaskKind::SA:
          CHECK(arith::sa(a, b) != arith::sa(a2, b2));
          CHECK(arith::st(a, b, digit) == arith::st(a2, b2, digit));
          break;
        case SubtaskKind::MB:
          CHECK(arith::diff_mod10(a, b) == arith::diff_mod10(a2, b2));
          CHECK(arith::tricase_borrow(a, b, digit) != arith::tricase_borrow(a2, b2, digit));
          break;
        case SubtaskKind::MD:
          CHECK(arith::diff_mod10(a, b) != arith::diff_mod10(a2, b2));
          CHECK(arith::tricase_borrow(a, b, digit) == arith::tricase_borrow(a2, b2, digit));
          break;
        case SubtaskKind::NB:
          CHECK(arith::diff_mod10(b, a) == arith::diff_mod10(b2, a2));
          CHECK(arith::tricase_borrow(b, a, digit) != arith::tricase_borrow(b2, a2, digit));
          break;
        case SubtaskKind::ND:
          CHECK(arith::diff_mod10(b, a) != arith::diff_mod10(b2, a2));
          CHECK(arith::tricase_borrow(b, a, digit) == arith::tricase_borrow(b2, a2, digit));
          break;
        default:
          break;
      }
      // Subtraction pairs keep the base in the branch that makes the
      // intervention visible.
      if (kind == SubtaskKind::MB || kind == SubtaskKind::MD)
        CHECK(arith::oracle_eval(p.base).sign() == arith::Sign::Plus);
      if (kind == SubtaskKind::NB || kind == SubtaskKind::ND)
        CHECK(arith::oracle_eval(p.base).sign() == arith::Sign::Minus);
    }
  }
}

TEST_CASE("substitution expectations match the cascade on realizable hybrids") {
  // When the pair holds every sibling subtask fixed, substituting equals
  // evaluating the question with the donor digit pair spliced in.
  rng::Rng r(31);
  for (const auto kind : {SubtaskKind::ST, SubtaskKind::SA}) {
    const auto pairs = interp::make_intervention_pairs(4, kind, 2, 40, 19);
    for (const auto& p : pairs) {
      auto spliced = p.base;
      spliced.d.set_digit(2, p.donor.d.digit(2));
      spliced.d_prime.set_digit(2, p.donor.d_prime.digit(2));
      CHECK(interp::expected_with_substitution(p.base, kind, 2, p.donor) ==
            arith::oracle_eval(spliced));
    }
  }
  // Positive-branch borrow substitution below the top digit.
  const auto pairs = interp::make_intervention_pairs(4, SubtaskKind::MB, 1, 40, 23);
  for (const auto& p : pairs) {
    auto spliced = p.base;
    spliced.d.set_digit(1, p.donor.d.digit(1));
    spliced.d_prime.set_digit(1, p.donor.d_prime.digit(1));
    if (arith::oracle_eval(spliced).sign() == arith::Sign::Plus)
      CHECK(interp::expected_with_substitution(p.base, SubtaskKind::MB, 1, p.donor) ==
            arith::oracle_eval(spliced));
  }
}

TEST_CASE("substitution expectations: hand-checked counterfactuals") {
  // 55+45 = +100; forcing ST0 (the units carry) to zero must give +090.
  const auto base = arith::parse_question("55+45");
  auto donor = base;
  donor.d.set_digit(0, 2);
  donor.d_prime.set_digit(0, 5);  // same SA (7 -> 2+5), no carry
  const auto expect = interp::expected_with_substitution(base, SubtaskKind::ST, 0, donor);
  CHECK(expect.str() == "+090");

  // Sign flip: 61-32 = +29; forcing MB1 to borrow makes the fold negative,
  // so the expected answer switches to the (unmodified) negative branch.
  const auto sub_base = arith::parse_question("61-32");
  auto sub_donor = sub_base;
  sub_donor.d.set_digit(1, 3);
  sub_donor.d_prime.set_digit(1, 6);  // MD fixed (=9... wait 6-3) -> keep diff 3: 3-6 wraps
  const auto sub_expect =
      interp::expected_with_substitution(sub_base, SubtaskKind::MB, 1, sub_donor);
  CHECK(sub_expect.sign() == arith::Sign::Minus);
  // Negative branch of 61-32: ND digits (D'-D mod 10): units 2-1=1? per place:
  // place0: (2-1)=1, place1: (3-6) mod 10 = 7; NB0: 2>1 -> no borrow.
  // A1 = 7, A0 = 1 -> "-071".
  CHECK(sub_expect.str() == "-071");
}

TEST_CASE("addition schema is acyclic and constraint checking works") {
  const auto schema = interp::AlgorithmSchema::addition(3);
  CHECK_NOTHROW(schema.validate());
  const arith::Layout lay(3);

  // A consistent synthetic tag set: SA_k at the predicting position, ST_k
  // just after D'_k.
  std::vector<interp::SubtaskTag> tags;
  for (int k = 0; k < 3; ++k) {
    interp::SubtaskTag sa;
    sa.node = {lay.pos_predicting_answer(k), 1, 0};
    sa.kind = SubtaskKind::SA;
    sa.digit = k;
    tags.push_back(sa);
    interp::SubtaskTag st;
    st.node = {lay.pos_d_prime(k), 0, 1};
    st.kind = SubtaskKind::ST;
    st.digit = k;
    tags.push_back(st);
  }
  const auto report = interp::check_constraints(tags, schema);
  CHECK(report.all_passed());
  CHECK(report.results.size() >= 15);

  // Remove every ST1 tag: coverage must fail with an explicit entry.
  std::vector<interp::SubtaskTag> missing;
  for (const auto& t : tags)
    if (!(t.kind == SubtaskKind::ST && t.digit == 1)) missing.push_back(t);
  const auto rep2 = interp::check_constraints(missing, schema);
  CHECK(!rep2.all_passed());
  bool found = false;
  for (const auto& r : rep2.results)
    if (!r.passed && r.description.find("ST1") != std::string::npos) found = true;
  CHECK(found);

  // Move an ST tag outside its window: the window constraint must fail.
  auto bad = tags;
  for (auto& t : bad)
    if (t.kind == SubtaskKind::ST && t.digit == 2) t.node.pos = lay.pos_sign() + 1;
  CHECK(!interp::check_constraints(bad, schema).all_passed());

  // Ordering violation: an SV tag earlier than every ST tag it folds.
  auto ordered = tags;
  interp::SubtaskTag sv;
  sv.node = {0, 0, 2};
  sv.kind = SubtaskKind::SV;
  sv.digit = 1;
  ordered.push_back(sv);
  const auto rep3 = interp::check_constraints(ordered, interp::AlgorithmSchema::addition(3));
  CHECK(!rep3.all_passed());
}

TEST_CASE("schema JSON round-trip") {
  const auto schema = interp::AlgorithmSchema::mixed(4);
  const auto j = schema.to_json();
  const auto back = interp::AlgorithmSchema::from_json(j);
  CHECK(back.name == schema.name);
  CHECK(back.targets.size() == schema.targets.size());
  CHECK(back.constraints.size() == schema.constraints.size());
  CHECK(back.to_json() == j);
}

TEST_CASE("analyzer on an untrained model: sweeps, PCA control, self-swap") {
  const auto cfg = tiny_cfg(2);
  const auto w = ModelWeights::init(cfg);
  interp::Analyzer an(w, tiny_opts());

  const auto nodes = an.all_nodes();
  CHECK(static_cast<int>(nodes.size()) == (cfg.context_len() - 1) * cfg.n_layers * (cfg.n_heads + 1));
  CHECK(an.mean_activation(nodes[0]).size() == static_cast<std::size_t>(cfg.d_model()));

  // Untrained model: nothing is answered correctly, so no node can flip a
  // correct answer to incorrect.
  const auto probe = interp::uniform_probes(2, arith::Op::Add, 48, 3);
  const auto sweep = an.sweep_nodes(probe);
  for (double f : sweep.fail_fraction) CHECK(f == 0.0);

  // PCA control: untrained activations should not form 0.9-grade clusters.
  const auto tri = interp::tristate_probes(2, SubtaskKind::ST, 1, 20, 4);
  const auto pca = an.pca_node({4, 0, 1}, tri);
  CHECK(pca.coords.size() == 60);
  CHECK(pca.cluster_score < 0.85);
  REQUIRE(!pca.evr.empty());
  double evr_sum = 0.0;
  for (std::size_t i = 1; i < pca.evr.size(); ++i) CHECK(pca.evr[i] <= pca.evr[i - 1]);
  for (double v : pca.evr) evr_sum += v;
  CHECK(evr_sum <= 1.0 + 1e-9);

  // Self-swap leaves the prediction unchanged.
  const auto q = interp::uniform_probes(2, arith::Op::Add, 1, 5).questions[0];
  const interp::InterventionPair self{q, q};
  const NodeId node{3, 0, 0};
  const NodeId single[] = {node};
  const auto outcome = an.interchange_intervention(single, self, SubtaskKind::ST, 1);
  // expected == true cascade answer for a self pair
  CHECK(outcome.expected == arith::oracle_eval(q));
  // and the patched model output equals the unpatched output
  const auto base_tokens = model::predict_tokens(w, q);
  model::ActivationCache cache;
  std::vector<float> logits;
  const auto full = arith::encode_full(q, arith::oracle_eval(q));
  model::infer_forward(w, full, 1, static_cast<int>(full.size()), logits, &cache);
  const auto row = cache.head_out(0, 0, 0, 3);
  std::vector<model::Patch> patches{{node, {row.begin(), row.end()}}};
  CHECK(model::predict_tokens(w, q, patches) == base_tokens);
}

TEST_CASE("attention profile: head rows only, weights bounded") {
  const auto cfg = tiny_cfg(2);
  const auto w = ModelWeights::init(cfg);
  const auto q = interp::uniform_probes(2, arith::Op::Add, 1, 9).questions[0];
  const auto full = arith::encode_full(q, arith::oracle_eval(q));
  model::ActivationCache cache;
  std::vector<float> logits;
  model::infer_forward(w, full, 1, static_cast<int>(full.size()), logits, &cache);

  const auto profile = interp::attention_profile(cache, {5, 0, 1}, 0.01);
  double total = 0.0;
  for (const auto& [pos, wgt] : profile) {
    CHECK(pos <= 5);  // causal
    total += wgt;
  }
  CHECK(total <= 1.0 + 1e-5);
  CHECK_THROWS(interp::attention_profile(cache, {5, 0, NodeId::kMlp}));
}

TEST_CASE("maps render matching CSV and SVG cells") {
  const auto cfg = tiny_cfg(2);
  interp::NodeSweep sweep;
  sweep.nodes = {{3, 0, 0}, {3, 0, NodeId::kMlp}, {5, 1, 2}};
  sweep.fail_fraction = {0.25, 0.0, 0.5};
  sweep.impact_mask = {0b10, 0, 0b101};
  sweep.min_quantum = {1, -1, 0};
  const arith::Layout lay(2);

  const auto fail_map = interp::build_fail_map(sweep, lay, cfg, 0.001);
  CHECK(fail_map.positions == std::vector<int>{3, 5});
  const auto dir = std::filesystem::temp_directory_path() / "arithlab_maps";
  std::filesystem::create_directories(dir);
  interp::write_csv(fail_map, (dir / "fail.csv").string());
  interp::write_svg(fail_map, (dir / "fail.svg").string());

  std::ifstream csv(dir / "fail.csv");
  std::string csv_text((std::istreambuf_iterator<char>(csv)), {});
  std::ifstream svg(dir / "fail.svg");
  std::string svg_text((std::istreambuf_iterator<char>(svg)), {});
  CHECK(csv_text.find("25%") != std::string::npos);
  CHECK(svg_text.find("25%") != std::string::npos);
  CHECK(csv_text.find("50%") != std::string::npos);
  CHECK(svg_text.find("50%") != std::string::npos);
  CHECK(svg_text.find("#e0e0e0") != std::string::npos);  // unused filler cells

  const auto imp = interp::build_impact_map(sweep, lay, cfg, 0.001);
  bool saw = false;
  for (const auto& row : imp.cells)
    for (const auto& cell : row)
      if (cell.find("A") != std::string::npos) saw = true;
  CHECK(saw);

  const auto cx = interp::build_complexity_map(sweep, lay, cfg, 0.001, 'S');
  bool saw_s0 = false;
  for (const auto& row : cx.cells)
    for (const auto& cell : row)
      if (cell == "S0") saw_s0 = true;
  CHECK(saw_s0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("facts files carry the documented shapes and are deterministic") {
  const auto cfg = tiny_cfg(2);
  interp::AnalysisArtifacts a;
  a.cfg = cfg;
  interp::NodeSweep sweep;
  sweep.nodes = {{3, 0, 0}, {5, 1, 1}};
  sweep.fail_fraction = {0.1, 0.02};
  sweep.impact_mask = {0b10, 0b100};
  sweep.min_quantum = {0, 1};
  a.sweeps[QClass::Add] = sweep;
  a.attention_sources["P3L0H0"] = {{0, 0.45}, {3, 0.4}};
  interp::SubtaskTag tag;
  tag.node = {3, 0, 0};
  tag.kind = SubtaskKind::SA;
  tag.digit = 1;
  tag.attention_score = 0.45;
  tag.intervention_success = 0.99;
  a.tags.push_back(tag);

  const auto behaviors = interp::behaviors_json(a);
  CHECK(behaviors.at("nodes").contains("P3L0H0"));
  CHECK(behaviors.at("nodes").at("P3L0H0").at("attends_to").size() == 2);
  const auto features = interp::features_json(a);
  CHECK(features.at("features")[0].at("subtask") == "SA1");

  const auto dir = std::filesystem::temp_directory_path() / "arithlab_facts";
  interp::emit_facts(a, dir.string());
  std::ifstream f1(dir / "behaviors.json");
  std::string first((std::istreambuf_iterator<char>(f1)), {});
  interp::emit_facts(a, dir.string());
  std::ifstream f2(dir / "behaviors.json");
  std::string second((std::istreambuf_iterator<char>(f2)), {});
  CHECK(first == second);
  std::filesystem::remove_all(dir);
}

TEST_CASE("polysemanticity accounting") {
  std::map<QClass, std::map<NodeId, double>> used;
  const NodeId a{3, 0, 0}, b{4, 0, 1}, c{5, 1, 2}, d{6, 1, NodeId::kMlp};
  used[QClass::Add] = {{a, 0.5}, {b, 0.2}};
  used[QClass::SubPos] = {{a, 0.4}, {c, 0.1}};
  used[QClass::SubNeg] = {{a, 0.3}, {d, 0.05}};

  const auto rep = interp::polysemanticity_report(used, {a, b});
  CHECK(rep.total_used == 4);
  CHECK(rep.total_inserted == 2);
  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.rows[0].used == 2);           // Add
  CHECK(rep.rows[0].inserted_used == 2);  // a and b
  CHECK(rep.rows[1].inserted_used == 1);  // a reused for SubPos
  CHECK(rep.rows[2].inserted_used == 1);  // a reused for SubNeg
  CHECK(rep.inserted_reused.size() == 1); // only a serves a subtraction class
  CHECK(rep.to_json().at("rows").size() == 3);

  // Fresh model: no inserted nodes.
  const auto fresh = interp::polysemanticity_report(used, {});
  CHECK(fresh.total_inserted == 0);
  for (const auto& row : fresh.rows) CHECK(row.inserted_used == 0);
}
