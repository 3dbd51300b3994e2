#include "arithlab/interp/analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "arithlab/arith/cascade.hpp"
#include "arithlab/arith/complexity.hpp"
#include "arithlab/arith/oracle.hpp"
#include "arithlab/datagen/datagen.hpp"

namespace arithlab::interp {

using model::ActivationCache;
using model::ModelWeights;
using model::NodeId;
using model::Patch;

namespace {

constexpr int kCaptureBatch = 128;

// Cyclic Jacobi eigendecomposition of a symmetric matrix. A is n x n and is
// destroyed; eigenvalues land in `vals`, eigenvectors in the columns of V.
void jacobi_eig(std::vector<double>& a, int n, std::vector<double>& vals,
                std::vector<double>& v) {
  v.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
  auto at = [&a, n](int r, int c) -> double& { return a[static_cast<std::size_t>(r) * n + c]; };
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
    if (off < 1e-22) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v[static_cast<std::size_t>(k) * n + p];
          const double vkq = v[static_cast<std::size_t>(k) * n + q];
          v[static_cast<std::size_t>(k) * n + p] = c * vkp - s * vkq;
          v[static_cast<std::size_t>(k) * n + q] = s * vkp + c * vkq;
        }
      }
  }
  vals.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) vals[static_cast<std::size_t>(i)] = at(i, i);
}

QClass class_for_kind(SubtaskKind kind) {
  switch (kind) {
    case SubtaskKind::SA:
    case SubtaskKind::SC:
    case SubtaskKind::ST:
    case SubtaskKind::SV:
    case SubtaskKind::OPR:
      return QClass::Add;
    case SubtaskKind::MD:
    case SubtaskKind::MB:
    case SubtaskKind::MT:
      return QClass::SubPos;
    case SubtaskKind::ND:
    case SubtaskKind::NB:
    case SubtaskKind::SGN:
      return QClass::SubNeg;
  }
  return QClass::Add;
}

}  // namespace

Analyzer::Analyzer(const ModelWeights& weights, Options opt)
    : w_(weights.clone()), opt_(opt), layout_(weights.cfg.n_digits) {
  const auto& cfg = w_.cfg;
  const int S = cfg.context_len();
  const int L = cfg.n_layers;
  const int H = cfg.n_heads;
  const int D = cfg.d_model();

  // Reference means for mean-ablation, accumulated in double.
  std::vector<std::vector<std::vector<double>>> head_acc(
      static_cast<std::size_t>(L),
      std::vector<std::vector<double>>(static_cast<std::size_t>(S) * H,
                                       std::vector<double>(static_cast<std::size_t>(D), 0.0)));
  std::vector<std::vector<std::vector<double>>> mlp_acc(
      static_cast<std::size_t>(L),
      std::vector<std::vector<double>>(static_cast<std::size_t>(S),
                                       std::vector<double>(static_cast<std::size_t>(D), 0.0)));

  rng::Rng rng(rng::derive(opt_.seed, 0x4EF5));
  std::int64_t done = 0;
  std::vector<arith::TokenId> tokens;
  std::vector<float> logits;
  while (done < opt_.reference_questions) {
    const int bsz = static_cast<int>(
        std::min<std::int64_t>(kCaptureBatch, opt_.reference_questions - done));
    tokens.clear();
    for (int i = 0; i < bsz; ++i) {
      const auto op = rng.bernoulli(opt_.reference_sub_fraction) ? arith::Op::Sub : arith::Op::Add;
      const auto q = datagen::gen_random_question(cfg.n_digits, op, rng);
      const auto full = arith::encode_full(q, arith::oracle_eval(q));
      tokens.insert(tokens.end(), full.begin(), full.end());
    }
    ActivationCache cache;
    model::infer_forward(w_, tokens, bsz, S, logits, &cache);
    for (int l = 0; l < L; ++l)
      for (int b = 0; b < bsz; ++b)
        for (int p = 0; p < S; ++p) {
          for (int h = 0; h < H; ++h) {
            const auto src = cache.head_out(l, b, h, p);
            auto& dst = head_acc[static_cast<std::size_t>(l)]
                                [static_cast<std::size_t>(p) * H + h];
            for (int j = 0; j < D; ++j) dst[static_cast<std::size_t>(j)] += src[static_cast<std::size_t>(j)];
          }
          const auto src = cache.mlp_row(l, b, p);
          auto& dst = mlp_acc[static_cast<std::size_t>(l)][static_cast<std::size_t>(p)];
          for (int j = 0; j < D; ++j) dst[static_cast<std::size_t>(j)] += src[static_cast<std::size_t>(j)];
        }
    done += bsz;
  }

  const double inv = 1.0 / static_cast<double>(opt_.reference_questions);
  mean_head_.assign(static_cast<std::size_t>(L), {});
  mean_mlp_.assign(static_cast<std::size_t>(L), {});
  for (int l = 0; l < L; ++l) {
    auto& mh = mean_head_[static_cast<std::size_t>(l)];
    mh.resize(static_cast<std::size_t>(S) * H, std::vector<float>(static_cast<std::size_t>(D)));
    for (std::size_t i = 0; i < mh.size(); ++i)
      for (int j = 0; j < D; ++j)
        mh[i][static_cast<std::size_t>(j)] =
            static_cast<float>(head_acc[static_cast<std::size_t>(l)][i][static_cast<std::size_t>(j)] * inv);
    auto& mm = mean_mlp_[static_cast<std::size_t>(l)];
    mm.resize(static_cast<std::size_t>(S), std::vector<float>(static_cast<std::size_t>(D)));
    for (std::size_t i = 0; i < mm.size(); ++i)
      for (int j = 0; j < D; ++j)
        mm[i][static_cast<std::size_t>(j)] =
            static_cast<float>(mlp_acc[static_cast<std::size_t>(l)][i][static_cast<std::size_t>(j)] * inv);
  }
}

std::vector<NodeId> Analyzer::all_nodes() const {
  std::vector<NodeId> out;
  const int S = w_.cfg.context_len();
  for (int p = 0; p < S - 1; ++p)
    for (int l = 0; l < w_.cfg.n_layers; ++l) {
      for (int h = 0; h < w_.cfg.n_heads; ++h) out.push_back({p, l, h});
      out.push_back({p, l, NodeId::kMlp});
    }
  return out;
}

std::span<const float> Analyzer::mean_activation(const NodeId& node) const {
  if (node.is_mlp())
    return mean_mlp_[static_cast<std::size_t>(node.layer)][static_cast<std::size_t>(node.pos)];
  return mean_head_[static_cast<std::size_t>(node.layer)]
                   [static_cast<std::size_t>(node.pos) * w_.cfg.n_heads + node.head];
}

std::vector<float> Analyzer::node_patch_vector(const NodeId& node) const {
  if (opt_.mode == AblationMode::Zero)
    return std::vector<float>(static_cast<std::size_t>(w_.cfg.d_model()), 0.0f);
  const auto mean = mean_activation(node);
  return {mean.begin(), mean.end()};
}

NodeSweep Analyzer::sweep_nodes(const ProbeSet& probe) const {
  NodeSweep sweep;
  sweep.nodes = all_nodes();
  sweep.fail_fraction.assign(sweep.nodes.size(), 0.0);
  sweep.impact_mask.assign(sweep.nodes.size(), 0);
  sweep.min_quantum.assign(sweep.nodes.size(), -1);

  std::vector<arith::Answer> expected;
  std::vector<int> quantum;
  expected.reserve(probe.questions.size());
  for (const auto& q : probe.questions) {
    expected.push_back(arith::oracle_eval(q));
    quantum.push_back(arith::classify_complexity(q).run);
  }
  const auto base = model::batch_mismatch_masks(w_, probe.questions, expected);

  for (std::size_t ni = 0; ni < sweep.nodes.size(); ++ni) {
    const auto& node = sweep.nodes[ni];
    const Patch patch{node, node_patch_vector(node)};
    const auto masks =
        model::batch_mismatch_masks(w_, probe.questions, expected, std::span(&patch, 1));
    int broke = 0;
    for (std::size_t i = 0; i < masks.size(); ++i) {
      if (base[i] != 0 || masks[i] == 0) continue;
      broke++;
      sweep.impact_mask[ni] |= masks[i];
      if (sweep.min_quantum[ni] < 0 || quantum[i] < sweep.min_quantum[ni])
        sweep.min_quantum[ni] = quantum[i];
    }
    sweep.fail_fraction[ni] =
        probe.questions.empty() ? 0.0 : static_cast<double>(broke) / probe.questions.size();
  }
  return sweep;
}

std::map<NodeId, double> Analyzer::find_useful_nodes(const ProbeSet& probe) const {
  const auto sweep = sweep_nodes(probe);
  std::map<NodeId, double> out;
  for (std::size_t i = 0; i < sweep.nodes.size(); ++i)
    if (sweep.fail_fraction[i] >= opt_.useful_threshold)
      out[sweep.nodes[i]] = sweep.fail_fraction[i];
  return out;
}

void Analyzer::ensure_class_probes(QClass cls) const {
  if (class_probes_.count(cls)) return;
  class_probes_[cls] = class_probes(w_.cfg.n_digits, cls, opt_.probe_count,
                                    rng::derive(opt_.seed, static_cast<std::uint64_t>(cls) + 11));
}

const ProbeSet& Analyzer::class_probe_set(QClass cls) const {
  ensure_class_probes(cls);
  return class_probes_.at(cls);
}

const std::vector<double>& Analyzer::class_attention(QClass cls) const {
  if (class_attention_.count(cls)) return class_attention_.at(cls);
  ensure_class_probes(cls);
  const auto& probe = class_probes_.at(cls);
  const auto& cfg = w_.cfg;
  const int S = cfg.context_len(), L = cfg.n_layers, H = cfg.n_heads;
  std::vector<double> acc(static_cast<std::size_t>(L) * H * S * S, 0.0);

  std::vector<arith::TokenId> tokens;
  std::vector<float> logits;
  std::size_t start = 0;
  while (start < probe.questions.size()) {
    const std::size_t bsz = std::min<std::size_t>(kCaptureBatch, probe.questions.size() - start);
    tokens.clear();
    for (std::size_t i = 0; i < bsz; ++i) {
      const auto& q = probe.questions[start + i];
      const auto full = arith::encode_full(q, arith::oracle_eval(q));
      tokens.insert(tokens.end(), full.begin(), full.end());
    }
    ActivationCache cache;
    model::infer_forward(w_, tokens, static_cast<int>(bsz), S, logits, &cache);
    for (int l = 0; l < L; ++l)
      for (std::size_t b = 0; b < bsz; ++b)
        for (int h = 0; h < H; ++h)
          for (int p = 0; p < S; ++p) {
            const auto row = cache.attn_row(l, static_cast<int>(b), h, p);
            double* dst = acc.data() +
                          ((static_cast<std::size_t>(l) * H + h) * S + p) * static_cast<std::size_t>(S);
            for (int j = 0; j < S; ++j) dst[j] += row[static_cast<std::size_t>(j)];
          }
    start += bsz;
  }
  const double inv = 1.0 / static_cast<double>(probe.questions.size());
  for (auto& v : acc) v *= inv;
  class_attention_[cls] = std::move(acc);
  return class_attention_.at(cls);
}

double Analyzer::attention_mean(QClass cls, const NodeId& node, int src_pos) const {
  const auto& acc = class_attention(cls);
  const int S = w_.cfg.context_len(), H = w_.cfg.n_heads;
  return acc[((static_cast<std::size_t>(node.layer) * H + node.head) * S + node.pos) *
                 static_cast<std::size_t>(S) +
             static_cast<std::size_t>(src_pos)];
}

std::vector<std::pair<int, double>> Analyzer::mean_attention_profile(const ProbeSet& probe,
                                                                     const NodeId& node) const {
  if (node.is_mlp()) throw std::invalid_argument("attention profile needs an attention head");
  const auto& cfg = w_.cfg;
  const int S = cfg.context_len();
  std::vector<double> acc(static_cast<std::size_t>(S), 0.0);
  std::vector<arith::TokenId> tokens;
  std::vector<float> logits;
  std::size_t start = 0;
  while (start < probe.questions.size()) {
    const std::size_t bsz = std::min<std::size_t>(kCaptureBatch, probe.questions.size() - start);
    tokens.clear();
    for (std::size_t i = 0; i < bsz; ++i) {
      const auto& q = probe.questions[start + i];
      const auto full = arith::encode_full(q, arith::oracle_eval(q));
      tokens.insert(tokens.end(), full.begin(), full.end());
    }
    ActivationCache cache;
    model::infer_forward(w_, tokens, static_cast<int>(bsz), S, logits, &cache);
    for (std::size_t b = 0; b < bsz; ++b) {
      const auto row = cache.attn_row(node.layer, static_cast<int>(b), node.head, node.pos);
      for (int j = 0; j < S; ++j) acc[static_cast<std::size_t>(j)] += row[static_cast<std::size_t>(j)];
    }
    start += bsz;
  }
  std::vector<std::pair<int, double>> out;
  const double inv = probe.questions.empty() ? 0.0 : 1.0 / probe.questions.size();
  for (int j = 0; j < S; ++j) {
    const double wgt = acc[static_cast<std::size_t>(j)] * inv;
    if (wgt > opt_.attention_threshold) out.emplace_back(j, wgt);
  }
  return out;
}

std::vector<std::vector<float>> Analyzer::node_activations(const NodeId& node,
                                                           const ProbeSet& probe) const {
  const int S = w_.cfg.context_len();
  const int D = w_.cfg.d_model();
  std::vector<std::vector<float>> out;
  out.reserve(probe.questions.size());
  std::vector<arith::TokenId> tokens;
  std::vector<float> logits;
  std::size_t start = 0;
  while (start < probe.questions.size()) {
    const std::size_t bsz = std::min<std::size_t>(kCaptureBatch, probe.questions.size() - start);
    tokens.clear();
    for (std::size_t i = 0; i < bsz; ++i) {
      const auto& q = probe.questions[start + i];
      const auto full = arith::encode_full(q, arith::oracle_eval(q));
      tokens.insert(tokens.end(), full.begin(), full.end());
    }
    ActivationCache cache;
    model::infer_forward(w_, tokens, static_cast<int>(bsz), S, logits, &cache);
    for (std::size_t b = 0; b < bsz; ++b) {
      const auto row = node.is_mlp() ? cache.mlp_row(node.layer, static_cast<int>(b), node.pos)
                                     : cache.head_out(node.layer, static_cast<int>(b), node.head,
                                                      node.pos);
      out.emplace_back(row.begin(), row.begin() + D);
    }
    start += bsz;
  }
  return out;
}

namespace {

PCAResult pca_from_points(const std::vector<std::vector<float>>& points,
                          const std::vector<int>& labels) {
  PCAResult res;
  res.labels = labels;
  const int n = static_cast<int>(points.size());
  if (n < 4) {
    res.degenerate = true;
    return res;
  }
  const int d = static_cast<int>(points[0].size());
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (const auto& p : points)
    for (int j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += p[static_cast<std::size_t>(j)];
  for (auto& m : mean) m /= n;

  std::vector<double> centered(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      centered[static_cast<std::size_t>(i) * d + j] =
          points[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] -
          mean[static_cast<std::size_t>(j)];

  // Gram-matrix PCA: the nonzero spectrum of X X^T matches X^T X and n is
  // much smaller than d here.
  std::vector<double> gram(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k)
        acc += centered[static_cast<std::size_t>(i) * d + k] *
               centered[static_cast<std::size_t>(j) * d + k];
      gram[static_cast<std::size_t>(i) * n + j] = acc;
      gram[static_cast<std::size_t>(j) * n + i] = acc;
    }
  double trace = 0.0;
  for (int i = 0; i < n; ++i) trace += gram[static_cast<std::size_t>(i) * n + i];
  if (trace < 1e-12) {
    res.degenerate = true;
    return res;
  }

  std::vector<double> vals, vecs;
  jacobi_eig(gram, n, vals, vecs);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&vals](int a, int b) {
    return vals[static_cast<std::size_t>(a)] > vals[static_cast<std::size_t>(b)];
  });

  res.evr.clear();
  for (int i = 0; i < std::min(n, 6); ++i)
    res.evr.push_back(std::max(0.0, vals[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]) / trace);

  res.coords.assign(static_cast<std::size_t>(n), {0.0, 0.0});
  for (int c = 0; c < 2 && c < n; ++c) {
    const int idx = order[static_cast<std::size_t>(c)];
    const double lam = std::max(0.0, vals[static_cast<std::size_t>(idx)]);
    const double scale = std::sqrt(lam);
    for (int i = 0; i < n; ++i)
      res.coords[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] =
          scale * vecs[static_cast<std::size_t>(i) * n + idx];
  }

  // Held-out nearest-centroid accuracy: even indices per class form the
  // centroids, odd indices are scored.
  std::map<int, std::array<double, 3>> centroid;  // label -> (x, y, count)
  std::map<int, int> seen;
  std::vector<bool> is_train(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n; ++i) {
    const int rank = seen[labels[static_cast<std::size_t>(i)]]++;
    if (rank % 2 == 0) {
      auto& c = centroid[labels[static_cast<std::size_t>(i)]];
      c[0] += res.coords[static_cast<std::size_t>(i)][0];
      c[1] += res.coords[static_cast<std::size_t>(i)][1];
      c[2] += 1.0;
      is_train[static_cast<std::size_t>(i)] = true;
    }
  }
  for (auto& [lbl, c] : centroid) {
    c[0] /= c[2];
    c[1] /= c[2];
  }
  int tested = 0, hit = 0;
  for (int i = 0; i < n; ++i) {
    if (is_train[static_cast<std::size_t>(i)]) continue;
    tested++;
    double best = 1e300;
    int best_lbl = -1;
    for (const auto& [lbl, c] : centroid) {
      const double dx = res.coords[static_cast<std::size_t>(i)][0] - c[0];
      const double dy = res.coords[static_cast<std::size_t>(i)][1] - c[1];
      const double dist = dx * dx + dy * dy;
      if (dist < best) {
        best = dist;
        best_lbl = lbl;
      }
    }
    hit += best_lbl == labels[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  res.cluster_score = tested > 0 ? static_cast<double>(hit) / tested : 0.0;
  return res;
}

}  // namespace

PCAResult Analyzer::pca_node(const NodeId& node, const TriProbes& probes) const {
  std::vector<std::vector<float>> points;
  std::vector<int> labels;
  for (int cls = 0; cls < 3; ++cls) {
    const auto& set = probes.classes[static_cast<std::size_t>(cls)];
    if (set.questions.empty()) continue;
    auto acts = node_activations(node, set);
    for (auto& a : acts) {
      points.push_back(std::move(a));
      labels.push_back(cls);
    }
  }
  return pca_from_points(points, labels);
}

PCAResult Analyzer::pca_node_bits(const NodeId& node, const BitProbes& probes) const {
  std::vector<std::vector<float>> points;
  std::vector<int> labels;
  for (int cls = 0; cls < 2; ++cls) {
    const auto& set = probes.classes[static_cast<std::size_t>(cls)];
    auto acts = node_activations(node, set);
    for (auto& a : acts) {
      points.push_back(std::move(a));
      labels.push_back(cls);
    }
  }
  return pca_from_points(points, labels);
}

InterventionOutcome Analyzer::interchange_intervention(std::span<const NodeId> nodes,
                                                       const InterventionPair& pair,
                                                       SubtaskKind kind, int digit) const {
  const int S = w_.cfg.context_len();
  const auto donor_answer = arith::oracle_eval(pair.donor);
  const auto donor_tokens = arith::encode_full(pair.donor, donor_answer);
  ActivationCache cache;
  std::vector<float> logits;
  model::infer_forward(w_, donor_tokens, 1, S, logits, &cache);

  std::vector<Patch> patches;
  for (const auto& node : nodes) {
    const auto row = node.is_mlp() ? cache.mlp_row(node.layer, 0, node.pos)
                                   : cache.head_out(node.layer, 0, node.head, node.pos);
    patches.push_back({node, {row.begin(), row.end()}});
  }

  InterventionOutcome out{expected_with_substitution(pair.base, kind, digit, pair.donor), false};
  const auto masks = model::batch_mismatch_masks(w_, std::span(&pair.base, 1),
                                                 std::span(&out.expected, 1), patches);
  out.match = masks[0] == 0;
  return out;
}

double Analyzer::intervention_success(std::span<const NodeId> nodes, SubtaskKind kind, int digit,
                                      int n_pairs, std::uint64_t seed) const {
  const auto pairs = make_intervention_pairs(w_.cfg.n_digits, kind, digit, n_pairs, seed);
  int hits = 0;
  for (const auto& pair : pairs)
    hits += interchange_intervention(nodes, pair, kind, digit).match ? 1 : 0;
  return pairs.empty() ? 0.0 : static_cast<double>(hits) / pairs.size();
}

std::vector<SubtaskTag> Analyzer::tag_subtasks(const AlgorithmSchema& schema) const {
  std::vector<SubtaskTag> tags;
  std::map<QClass, std::map<NodeId, double>> useful_cache;
  auto useful_for = [&](QClass cls) -> const std::map<NodeId, double>& {
    if (!useful_cache.count(cls)) useful_cache[cls] = find_useful_nodes(class_probe_set(cls));
    return useful_cache.at(cls);
  };

  for (const auto& target : schema.targets) {
    const QClass cls = class_for_kind(target.kind);
    const auto& useful = useful_for(cls);

    // Attention evidence per candidate head node in the window.
    struct Candidate {
      NodeId node;
      double attention = 0.0;
      double pca = -1.0;
    };
    std::vector<Candidate> passed_attention;
    TriProbes tri;
    BitProbes bits;
    const std::uint64_t probe_seed =
        rng::derive(opt_.seed, (static_cast<std::uint64_t>(target.kind) << 8) ^
                                   static_cast<std::uint64_t>(target.digit + 1));
    if (is_tristate(target.kind))
      tri = tristate_probes(w_.cfg.n_digits, target.kind, target.digit, opt_.pca_per_class,
                            probe_seed);
    if (target.kind == SubtaskKind::SV)
      bits = bit_probes(w_.cfg.n_digits, target.kind, target.digit, opt_.pca_per_class,
                        probe_seed);

    for (const auto& [node, frac] : useful) {
      if (node.is_mlp()) continue;
      if (node.pos < target.lo_pos || node.pos > target.hi_pos) continue;
      double att = 0.0;
      if (target.kind == SubtaskKind::OPR) {
        att = attention_mean(cls, node, layout_.pos_operator());
      } else if (target.kind == SubtaskKind::SGN) {
        att = attention_mean(cls, node, layout_.pos_sign());
      } else if (target.kind == SubtaskKind::SV) {
        // A fold node reads several digit pairs; no single-pair criterion.
        att = opt_.attention_threshold * 2;
      } else {
        const double a1 = attention_mean(cls, node, layout_.pos_d(target.digit));
        const double a2 = attention_mean(cls, node, layout_.pos_d_prime(target.digit));
        att = std::min(a1, a2);
      }
      if (att <= opt_.attention_threshold) continue;
      passed_attention.push_back({node, att, -1.0});
    }

    bool any_single = false;
    for (auto& cand : passed_attention) {
      if (is_tristate(target.kind)) {
        const auto pca = pca_node(cand.node, tri);
        if (pca.degenerate || pca.cluster_score < opt_.pca_accept) continue;
        cand.pca = pca.cluster_score;
      } else if (target.kind == SubtaskKind::SV) {
        const auto pca = pca_node_bits(cand.node, bits);
        if (pca.degenerate || pca.cluster_score < opt_.pca_accept) continue;
        cand.pca = pca.cluster_score;
      }

      SubtaskTag tag;
      tag.node = cand.node;
      tag.kind = target.kind;
      tag.digit = has_digit(target.kind) ? target.digit : -1;
      tag.attention_score = cand.attention;
      tag.pca_cluster_score = cand.pca;
      if (has_digit(target.kind)) {
        const NodeId single[] = {cand.node};
        tag.intervention_success = intervention_success(
            single, target.kind, target.digit, opt_.intervention_pairs,
            rng::derive(probe_seed, 0x1F));
        if (tag.intervention_success < opt_.intervention_accept) continue;
      }
      if (target.kind == SubtaskKind::SV) tag.low_confidence = true;
      tags.push_back(tag);
      any_single = true;
    }

    // Paper-style fallback: one subtask split across two heads at the same
    // position and layer. Joint patching must produce the full effect.
    if (!any_single && target.required && has_digit(target.kind)) {
      for (std::size_t i = 0; i < passed_attention.size(); ++i) {
        for (std::size_t j = i + 1; j < passed_attention.size(); ++j) {
          const auto& a = passed_attention[i];
          const auto& b = passed_attention[j];
          if (a.node.pos != b.node.pos || a.node.layer != b.node.layer) continue;
          const NodeId both[] = {a.node, b.node};
          const double rate = intervention_success(both, target.kind, target.digit,
                                                   opt_.intervention_pairs,
                                                   rng::derive(probe_seed, 0x2F));
          if (rate < opt_.intervention_accept) continue;
          for (const auto& cand : {a, b}) {
            SubtaskTag tag;
            tag.node = cand.node;
            tag.kind = target.kind;
            tag.digit = target.digit;
            tag.attention_score = cand.attention;
            tag.pca_cluster_score = cand.pca;
            tag.intervention_success = rate;
            tag.joint_with = cand.node == a.node ? b.node : a.node;
            tags.push_back(tag);
          }
        }
      }
    }
  }
  return tags;
}

std::vector<std::pair<int, double>> attention_profile(const ActivationCache& cache,
                                                      const NodeId& node, double min_weight) {
  if (node.is_mlp()) throw std::invalid_argument("attention profile needs an attention head");
  const auto row = cache.attn_row(node.layer, 0, node.head, node.pos);
  std::vector<std::pair<int, double>> out;
  for (int j = 0; j < cache.seq; ++j)
    if (row[static_cast<std::size_t>(j)] > min_weight)
      out.emplace_back(j, static_cast<double>(row[static_cast<std::size_t>(j)]));
  return out;
}

PolysemanticityReport polysemanticity_report(
    const std::map<QClass, std::map<NodeId, double>>& used_per_class,
    const std::vector<NodeId>& inserted_nodes) {
  PolysemanticityReport rep;
  std::set<NodeId> all_used;
  for (const auto& [cls, used] : used_per_class)
    for (const auto& [node, frac] : used) all_used.insert(node);
  rep.total_used = static_cast<int>(all_used.size());
  rep.total_inserted = static_cast<int>(inserted_nodes.size());

  std::set<NodeId> inserted(inserted_nodes.begin(), inserted_nodes.end());
  std::set<NodeId> reused;
  for (const auto cls : {QClass::Add, QClass::SubPos, QClass::SubNeg}) {
    PolysemanticityReport::Row row;
    row.cls = cls;
    const auto it = used_per_class.find(cls);
    if (it != used_per_class.end()) {
      for (const auto& [node, frac] : it->second) {
        row.used++;
        if (inserted.count(node)) {
          row.inserted_used++;
          if (cls != QClass::Add) reused.insert(node);
        }
      }
    }
    row.used_pct = rep.total_used > 0 ? 100.0 * row.used / rep.total_used : 0.0;
    row.inserted_pct =
        rep.total_inserted > 0 ? 100.0 * row.inserted_used / rep.total_inserted : 0.0;
    rep.rows.push_back(row);
  }
  rep.inserted_reused.assign(reused.begin(), reused.end());
  return rep;
}

nlohmann::json PolysemanticityReport::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_j.push_back({{"question_class", qclass_name(r.cls)},
                      {"used", r.used},
                      {"used_pct", r.used_pct},
                      {"inserted_used", r.inserted_used},
                      {"inserted_pct", r.inserted_pct}});
  }
  nlohmann::json reused = nlohmann::json::array();
  for (const auto& n : inserted_reused) reused.push_back(n.str());
  return {{"total_used", total_used},
          {"total_inserted", total_inserted},
          {"rows", rows_j},
          {"inserted_reused_for_subtraction", reused}};
}

}  // namespace arithlab::interp
