#include "arithlab/model/infer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace arithlab::model {

namespace {

// out[r,:] = x[r,:] . w + b
void linear_rows(const float* x, const float* w, const float* b, float* out,
                 std::size_t rows, std::size_t k, std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) {
    float* yr = out + r * n;
    if (b) {
      std::memcpy(yr, b, n * sizeof(float));
    } else {
      std::fill(yr, yr + n, 0.0f);
    }
    const float* xr = x + r * k;
    for (std::size_t i = 0; i < k; ++i) {
      const float a = xr[i];
      const float* wr = w + i * n;
      for (std::size_t j = 0; j < n; ++j) yr[j] += a * wr[j];
    }
  }
}

void layer_norm_rows(const float* x, const float* g, const float* b, float* out,
                     std::size_t rows, std::size_t d, float eps = 1e-5f) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x + r * d;
    float* yr = out + r * d;
    float mean = 0.0f;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (std::size_t j = 0; j < d; ++j) {
      const float c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<float>(d);
    const float rs = 1.0f / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) yr[j] = (xr[j] - mean) * rs * g[j] + b[j];
  }
}

void gelu_inplace(float* x, std::size_t n) {
  constexpr float k0 = 0.7978845608028654f;
  constexpr float k1 = 0.044715f;
  for (std::size_t i = 0; i < n; ++i) {
    const float v = x[i];
    x[i] = 0.5f * v * (1.0f + std::tanh(k0 * (v + k1 * v * v * v)));
  }
}

}  // namespace

std::span<const float> ActivationCache::attn_row(int layer, int b, int head, int pos) const {
  const auto& a = attn[static_cast<std::size_t>(layer)];
  const std::size_t off =
      ((static_cast<std::size_t>(b) * heads + head) * seq + pos) * static_cast<std::size_t>(seq);
  return {a.data() + off, static_cast<std::size_t>(seq)};
}

std::span<const float> ActivationCache::head_out(int layer, int b, int head, int pos) const {
  const auto& h = head_contrib[static_cast<std::size_t>(layer)];
  const std::size_t off =
      ((static_cast<std::size_t>(b) * seq + pos) * heads + head) * static_cast<std::size_t>(d_model);
  return {h.data() + off, static_cast<std::size_t>(d_model)};
}

std::span<const float> ActivationCache::mlp_row(int layer, int b, int pos) const {
  const auto& m = mlp_out[static_cast<std::size_t>(layer)];
  const std::size_t off =
      (static_cast<std::size_t>(b) * seq + pos) * static_cast<std::size_t>(d_model);
  return {m.data() + off, static_cast<std::size_t>(d_model)};
}

std::span<const float> ActivationCache::resid_pre_row(int layer, int b, int pos) const {
  const auto& m = resid_pre[static_cast<std::size_t>(layer)];
  const std::size_t off =
      (static_cast<std::size_t>(b) * seq + pos) * static_cast<std::size_t>(d_model);
  return {m.data() + off, static_cast<std::size_t>(d_model)};
}

std::span<const float> ActivationCache::resid_final_row(int b, int pos) const {
  const std::size_t off =
      (static_cast<std::size_t>(b) * seq + pos) * static_cast<std::size_t>(d_model);
  return {resid_final.data() + off, static_cast<std::size_t>(d_model)};
}

void infer_forward(const ModelWeights& w, std::span<const arith::TokenId> tokens,
                   int batch, int seq, std::vector<float>& logits,
                   ActivationCache* cache, std::span<const Patch> patches) {
  const auto& cfg = w.cfg;
  if (seq > cfg.context_len()) throw std::invalid_argument("sequence longer than context");
  if (tokens.size() != static_cast<std::size_t>(batch) * seq)
    throw std::invalid_argument("token count does not match batch x seq");
  for (const auto& p : patches) {
    if (p.values.size() != static_cast<std::size_t>(cfg.d_model()))
      throw std::invalid_argument("patch vector must have d_model values");
    if (p.node.layer < 0 || p.node.layer >= cfg.n_layers || p.node.pos < 0 ||
        p.node.pos >= seq || p.node.head >= cfg.n_heads)
      throw std::invalid_argument("patch node outside the model");
  }

  const std::size_t B = static_cast<std::size_t>(batch);
  const std::size_t S = static_cast<std::size_t>(seq);
  const std::size_t D = static_cast<std::size_t>(cfg.d_model());
  const std::size_t H = static_cast<std::size_t>(cfg.n_heads);
  const std::size_t dh = static_cast<std::size_t>(cfg.d_head);
  const std::size_t DM = static_cast<std::size_t>(cfg.d_mlp());
  const std::size_t V = ModelConfig::kVocabSize;
  const std::size_t rows = B * S;
  const float alpha = 1.0f / std::sqrt(static_cast<float>(dh));
  if (dh > 512) throw std::invalid_argument("d_head above the 512 kernel limit");

  if (cache) {
    cache->batch = batch;
    cache->seq = seq;
    cache->layers = cfg.n_layers;
    cache->heads = cfg.n_heads;
    cache->d_model = cfg.d_model();
    cache->attn.assign(static_cast<std::size_t>(cfg.n_layers), {});
    cache->head_contrib.assign(static_cast<std::size_t>(cfg.n_layers), {});
    cache->mlp_out.assign(static_cast<std::size_t>(cfg.n_layers), {});
    cache->resid_pre.assign(static_cast<std::size_t>(cfg.n_layers), {});
  }

  std::vector<float> resid(rows * D);
  const float* te = w.tok_embed.data();
  const float* pe = w.pos_embed.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < S; ++i) {
      const auto id = tokens[b * S + i];
      if (id < 0 || id >= static_cast<arith::TokenId>(V))
        throw std::invalid_argument("token id out of vocabulary");
      float* r = resid.data() + (b * S + i) * D;
      const float* t = te + static_cast<std::size_t>(id) * D;
      const float* p = pe + i * D;
      for (std::size_t j = 0; j < D; ++j) r[j] = t[j] + p[j];
    }

  std::vector<float> normed(rows * D), q(rows * D), k(rows * D), v(rows * D);
  std::vector<float> probs(B * H * S * S), contrib(rows * H * D), hidden(rows * DM),
      mlp(rows * D);

  for (int layer = 0; layer < cfg.n_layers; ++layer) {
    const auto& lw = w.layers[static_cast<std::size_t>(layer)];
    if (cache) cache->resid_pre[static_cast<std::size_t>(layer)] = resid;

    layer_norm_rows(resid.data(), lw.ln1_g.data(), lw.ln1_b.data(), normed.data(), rows, D);
    linear_rows(normed.data(), lw.wq.data(), lw.bq.data(), q.data(), rows, D, D);
    linear_rows(normed.data(), lw.wk.data(), lw.bk.data(), k.data(), rows, D, D);
    linear_rows(normed.data(), lw.wv.data(), lw.bv.data(), v.data(), rows, D, D);

    // Per-head causal attention and the head's residual contribution.
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < H; ++h) {
        float* pr = probs.data() + (b * H + h) * S * S;
        for (std::size_t i = 0; i < S; ++i) {
          const float* qi = q.data() + (b * S + i) * D + h * dh;
          float* row = pr + i * S;
          float mx = -1e30f;
          for (std::size_t j = 0; j <= i; ++j) {
            const float* kj = k.data() + (b * S + j) * D + h * dh;
            float acc = 0.0f;
            for (std::size_t d = 0; d < dh; ++d) acc += qi[d] * kj[d];
            row[j] = acc * alpha;
            mx = std::max(mx, row[j]);
          }
          float denom = 0.0f;
          for (std::size_t j = 0; j <= i; ++j) {
            row[j] = std::exp(row[j] - mx);
            denom += row[j];
          }
          const float inv = 1.0f / denom;
          for (std::size_t j = 0; j <= i; ++j) row[j] *= inv;
          for (std::size_t j = i + 1; j < S; ++j) row[j] = 0.0f;

          // z = sum_j p[i,j] v_h(j); contribution = z . W_O[h-rows]
          float z[512];
          std::fill(z, z + dh, 0.0f);
          for (std::size_t j = 0; j <= i; ++j) {
            const float pij = row[j];
            if (pij == 0.0f) continue;
            const float* vj = v.data() + (b * S + j) * D + h * dh;
            for (std::size_t d = 0; d < dh; ++d) z[d] += pij * vj[d];
          }
          float* c = contrib.data() + ((b * S + i) * H + h) * D;
          std::fill(c, c + D, 0.0f);
          for (std::size_t d = 0; d < dh; ++d) {
            const float zd = z[d];
            const float* wo_row = lw.wo.data() + (h * dh + d) * D;
            for (std::size_t j = 0; j < D; ++j) c[j] += zd * wo_row[j];
          }
        }
      }

    // Head patches replace the contribution before the residual add.
    for (const auto& p : patches) {
      if (p.node.layer != layer || p.node.is_mlp()) continue;
      for (std::size_t b = 0; b < B; ++b) {
        float* c = contrib.data() +
                   ((b * S + static_cast<std::size_t>(p.node.pos)) * H +
                    static_cast<std::size_t>(p.node.head)) *
                       D;
        std::copy(p.values.begin(), p.values.end(), c);
      }
    }
    if (cache) {
      cache->attn[static_cast<std::size_t>(layer)] = probs;
      cache->head_contrib[static_cast<std::size_t>(layer)] = contrib;
    }

    for (std::size_t r = 0; r < rows; ++r) {
      float* rr = resid.data() + r * D;
      const float* bo = lw.bo.data();
      for (std::size_t j = 0; j < D; ++j) rr[j] += bo[j];
      for (std::size_t h = 0; h < H; ++h) {
        const float* c = contrib.data() + (r * H + h) * D;
        for (std::size_t j = 0; j < D; ++j) rr[j] += c[j];
      }
    }

    layer_norm_rows(resid.data(), lw.ln2_g.data(), lw.ln2_b.data(), normed.data(), rows, D);
    linear_rows(normed.data(), lw.w_in.data(), lw.b_in.data(), hidden.data(), rows, D, DM);
    gelu_inplace(hidden.data(), rows * DM);
    linear_rows(hidden.data(), lw.w_out.data(), lw.b_out.data(), mlp.data(), rows, DM, D);

    for (const auto& p : patches) {
      if (p.node.layer != layer || !p.node.is_mlp()) continue;
      for (std::size_t b = 0; b < B; ++b) {
        float* m = mlp.data() + (b * S + static_cast<std::size_t>(p.node.pos)) * D;
        std::copy(p.values.begin(), p.values.end(), m);
      }
    }
    if (cache) cache->mlp_out[static_cast<std::size_t>(layer)] = mlp;

    for (std::size_t i = 0; i < rows * D; ++i) resid[i] += mlp[i];
  }

  if (cache) cache->resid_final = resid;
  layer_norm_rows(resid.data(), w.lnf_g.data(), w.lnf_b.data(), normed.data(), rows, D);
  logits.resize(rows * V);
  linear_rows(normed.data(), w.unembed_w.data(), w.unembed_b.data(), logits.data(), rows, D, V);
}

namespace {

int argmax_token(const float* row, std::size_t v) {
  int best = 0;
  for (std::size_t j = 1; j < v; ++j)
    if (row[j] > row[best]) best = static_cast<int>(j);
  return best;
}

}  // namespace

std::vector<arith::TokenId> predict_tokens(const ModelWeights& w, const arith::Question& q,
                                           std::span<const Patch> patches) {
  const arith::Layout layout(q.n_digits());
  std::vector<arith::TokenId> seq = arith::encode_question(q);
  std::vector<float> logits;
  for (int step = 0; step < layout.answer_len(); ++step) {
    infer_forward(w, seq, 1, static_cast<int>(seq.size()), logits, nullptr, patches);
    const float* last = logits.data() + (seq.size() - 1) * ModelConfig::kVocabSize;
    seq.push_back(argmax_token(last, ModelConfig::kVocabSize));
  }
  return seq;
}

arith::Answer predict(const ModelWeights& w, const arith::Question& q,
                      std::span<const Patch> patches) {
  const arith::Layout layout(q.n_digits());
  const auto seq = predict_tokens(w, q, patches);
  return arith::decode_answer(
      std::span<const arith::TokenId>(seq.data() + layout.question_len(),
                                      static_cast<std::size_t>(layout.answer_len())));
}

std::vector<std::uint32_t> batch_mismatch_masks(const ModelWeights& w,
                                                std::span<const arith::Question> questions,
                                                std::span<const arith::Answer> expected,
                                                std::span<const Patch> patches, int batch_cap) {
  if (questions.size() != expected.size())
    throw std::invalid_argument("question/answer count mismatch");
  if (questions.empty()) return {};
  const arith::Layout layout(questions[0].n_digits());
  const int S = layout.total_len();
  const std::size_t V = ModelConfig::kVocabSize;

  std::vector<std::uint32_t> out(questions.size(), 0);
  std::vector<arith::TokenId> tokens;
  std::vector<float> logits;
  for (std::size_t start = 0; start < questions.size();
       start += static_cast<std::size_t>(batch_cap)) {
    const std::size_t bsz = std::min(static_cast<std::size_t>(batch_cap),
                                     questions.size() - start);
    tokens.clear();
    for (std::size_t i = 0; i < bsz; ++i) {
      const auto full = arith::encode_full(questions[start + i], expected[start + i]);
      tokens.insert(tokens.end(), full.begin(), full.end());
    }
    infer_forward(w, tokens, static_cast<int>(bsz), S, logits, nullptr, patches);
    for (std::size_t i = 0; i < bsz; ++i) {
      std::uint32_t mask = 0;
      for (int slot = 0; slot < layout.answer_len(); ++slot) {
        const int pos = layout.pos_equals() + slot;  // predicts answer token `slot`
        const float* row = logits.data() + (i * static_cast<std::size_t>(S) +
                                            static_cast<std::size_t>(pos)) *
                                               V;
        if (argmax_token(row, V) !=
            tokens[i * static_cast<std::size_t>(S) + static_cast<std::size_t>(pos) + 1])
          mask |= 1u << slot;
      }
      out[start + i] = mask;
    }
  }
  return out;
}

std::vector<std::uint8_t> batch_matches(const ModelWeights& w,
                                        std::span<const arith::Question> questions,
                                        std::span<const arith::Answer> expected,
                                        std::span<const Patch> patches, int batch_cap) {
  const auto masks = batch_mismatch_masks(w, questions, expected, patches, batch_cap);
  std::vector<std::uint8_t> out(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) out[i] = masks[i] == 0 ? 1 : 0;
  return out;
}

}  // namespace arithlab::model
