#ifndef TRIAN_MODEL_HPP
#define TRIAN_MODEL_HPP

#include <cassert>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trian/config.hpp"
#include "trian/error.hpp"
#include "trian/featurize.hpp"
#include "trian/rng.hpp"
#include "trian/tensor.hpp"

namespace trian {

// Ordered, named parameter tensors. Registration order fixes both the
// initialization draw order and the checkpoint blob layout.
template <typename T>
class ParamSetT {
 public:
  TensorT<T>& add(const std::string& name, TensorT<T> t) {
    t.set_requires_grad(true);
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
  }

  const std::vector<std::pair<std::string, TensorT<T>>>& items() const { return items_; }
  std::vector<std::pair<std::string, TensorT<T>>>& items() { return items_; }

  TensorT<T>* find(const std::string& name) {
    for (auto& [n, t] : items_)
      if (n == name) return &t;
    return nullptr;
  }

  int64_t count() const {
    int64_t n = 0;
    for (const auto& [_, t] : items_) n += t.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : items_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, TensorT<T>>> items_;
};

namespace detail {

template <typename T>
void check_attention_rows(const TensorT<T>& alpha) {
#ifndef NDEBUG
  int n = alpha.dim(alpha.rank() - 1);
  int64_t rows = alpha.numel() / n;
  for (int64_t r = 0; r < rows; ++r) {
    T s = T(0);
    for (int j = 0; j < n; ++j) s += alpha.values()[r * n + j];
    assert(std::abs(static_cast<double>(s) - 1.0) < 1e-4 && "attention weights must sum to 1");
  }
#else
  (void)alpha;
#endif
}

}  // namespace detail

// ---------------------------------------------------------------------------
// attention primitives
// ---------------------------------------------------------------------------

// Batched sequence attention: each query vector attends over the value rows,
// with scores relu(W1 q)^T relu(W1 v_i). queries is [B, Lq, d] or [B, d]
// (one query per batch row); values [B, Lv, d]; value_mask [B, Lv].
template <typename T>
TensorT<T> seq_attention_batch(const TensorT<T>& queries, const TensorT<T>& values,
                               const BoolMask& value_mask, const TensorT<T>& w1) {
  bool single = queries.rank() == 2;
  int B = values.dim(0), Lv = values.dim(1), d = values.dim(2);
  int att = w1.dim(0);
  TensorT<T> q3 = single ? reshape(queries, {B, 1, queries.dim(1)}) : queries;
  int Lq = q3.dim(1);
  int dq = q3.dim(2);
  if (dq != w1.dim(1) || d != w1.dim(1))
    throw ShapeError("seq_attention: W1 " + shape_str(w1.shape()) +
                     " does not project query/value width " + std::to_string(dq) + "/" +
                     std::to_string(d));
  auto qp = relu(reshape(matmul(reshape(q3, {B * Lq, dq}), w1, false, true), {B, Lq, att}));
  auto vp = relu(reshape(matmul(reshape(values, {B * Lv, d}), w1, false, true), {B, Lv, att}));
  auto alpha = masked_softmax(bmm(qp, vp, false, true), value_mask);  // [B, Lq, Lv]
  detail::check_attention_rows(alpha);
  auto out = bmm(alpha, values);  // [B, Lq, d]
  return single ? reshape(out, {B, d}) : out;
}

// Single-instance form: one query u [d] over values V [n, d].
template <typename T>
TensorT<T> seq_attention(const TensorT<T>& u, const TensorT<T>& v,
                         const std::vector<uint8_t>& mask, const TensorT<T>& w1) {
  int n = v.dim(0), d = v.dim(1);
  BoolMask m{{1, n}, mask};
  auto q = reshape(u, {1, u.dim(0)});
  auto vals = reshape(v, {1, n, d});
  return reshape(seq_attention_batch(q, vals, m, w1), {d});
}

// Batched self-attention summary: scores w2^T u_i. rows [B, L, d] -> [B, d].
template <typename T>
TensorT<T> self_attention_batch(const TensorT<T>& rows, const BoolMask& mask,
                                const TensorT<T>& w2) {
  int B = rows.dim(0), L = rows.dim(1), d = rows.dim(2);
  if (w2.rank() != 1 || w2.dim(0) != d)
    throw ShapeError("self_attention: W2 " + shape_str(w2.shape()) + " vs rows " +
                     shape_str(rows.shape()));
  auto scores = reshape(matmul(reshape(rows, {B * L, d}), reshape(w2, {d, 1})), {B, L});
  auto alpha = masked_softmax(scores, mask);
  detail::check_attention_rows(alpha);
  return reshape(bmm(reshape(alpha, {B, 1, L}), rows), {B, d});
}

template <typename T>
TensorT<T> self_attention(const TensorT<T>& rows, const std::vector<uint8_t>& mask,
                          const TensorT<T>& w2) {
  int n = rows.dim(0), d = rows.dim(1);
  BoolMask m{{1, n}, mask};
  return reshape(self_attention_batch(reshape(rows, {1, n, d}), m, w2), {d});
}

// ---------------------------------------------------------------------------
// BiLSTM
// ---------------------------------------------------------------------------

template <typename T>
struct LstmDirParamsT {
  TensorT<T> wx;  // [4h, d], gate order i, f, g, o
  TensorT<T> wh;  // [4h, h]
  TensorT<T> b;   // [4h]
};

template <typename T>
struct BiLstmParamsT {
  LstmDirParamsT<T> fwd;
  LstmDirParamsT<T> bwd;
  int hidden = 0;
};

// One direction. Padded steps carry hidden/cell state through unchanged and
// emit zero outputs, so trailing pads never influence real positions.
template <typename T>
std::vector<TensorT<T>> lstm_direction(const TensorT<T>& x, const BoolMask& mask,
                                       const LstmDirParamsT<T>& p, int h, bool reverse) {
  int B = x.dim(0), L = x.dim(1), d = x.dim(2);
  auto h_prev = TensorT<T>::zeros({B, h});
  auto c_prev = TensorT<T>::zeros({B, h});
  std::vector<TensorT<T>> outputs(static_cast<size_t>(L));
  for (int step = 0; step < L; ++step) {
    int t = reverse ? L - 1 - step : step;
    auto xt = reshape(slice(x, 1, t, 1), {B, d});
    auto pre = add_bias(add(matmul(xt, p.wx, false, true), matmul(h_prev, p.wh, false, true)),
                        p.b);  // [B, 4h]
    auto gate_i = sigmoid(slice(pre, 1, 0, h));
    auto gate_f = sigmoid(slice(pre, 1, h, h));
    auto gate_g = tanh(slice(pre, 1, 2 * h, h));
    auto gate_o = sigmoid(slice(pre, 1, 3 * h, h));
    auto c_cand = add(mul(gate_f, c_prev), mul(gate_i, gate_g));
    auto h_cand = mul(gate_o, tanh(c_cand));

    std::vector<T> live(static_cast<size_t>(B)), padded(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) {
      bool real = mask.v[static_cast<size_t>(b) * L + t] != 0;
      live[static_cast<size_t>(b)] = real ? T(1) : T(0);
      padded[static_cast<size_t>(b)] = real ? T(0) : T(1);
    }
    auto h_out = scale_rows(h_cand, live);
    c_prev = add(scale_rows(c_cand, live), scale_rows(c_prev, padded));
    h_prev = add(h_out, scale_rows(h_prev, padded));
    outputs[static_cast<size_t>(t)] = reshape(h_out, {B, 1, h});
  }
  return outputs;
}

// [B, L, d] -> [B, L, 2h]: forward and backward passes concatenated per step.
template <typename T>
TensorT<T> bilstm(const TensorT<T>& x, const BoolMask& mask, const BiLstmParamsT<T>& p) {
  auto f = lstm_direction(x, mask, p.fwd, p.hidden, false);
  auto b = lstm_direction(x, mask, p.bwd, p.hidden, true);
  std::vector<TensorT<T>> steps;
  steps.reserve(f.size());
  for (size_t t = 0; t < f.size(); ++t) steps.push_back(concat<T>({f[t], b[t]}, 2));
  return concat(steps, 1);
}

// ---------------------------------------------------------------------------
// TriAN
// ---------------------------------------------------------------------------

enum class Side { kPassage, kQuestion, kAnswer };

// The three-way attentive network. One instance is single-threaded during
// training; a frozen instance (no tape active) may serve forward() from many
// threads.
template <typename T>
class TriANModelT {
 public:
  // rng == nullptr leaves every parameter zero (checkpoint loading path).
  explicit TriANModelT(ModelConfig cfg, Rng* rng = nullptr) : cfg_(std::move(cfg)) {
    cfg_.validate();
    for (const auto& [name, shape] : expected_param_shapes(cfg_)) params_.add(name, TensorT<T>::zeros(shape));
    if (rng) initialize(*rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamSetT<T>& params() { return params_; }
  const ParamSetT<T>& params() const { return params_; }
  int64_t param_count() const { return params_.count(); }

  TensorT<T>& param(const std::string& name) {
    auto* p = params_.find(name);
    if (!p) throw CheckpointError("unknown parameter '" + name + "'");
    return *p;
  }

  // Parameter names and shapes derivable from the config alone; shared by
  // construction and checkpoint verification.
  static std::vector<std::pair<std::string, Shape>> expected_param_shapes(const ModelConfig& c) {
    std::vector<std::pair<std::string, Shape>> out;
    int two_h = 2 * c.hidden;
    out.emplace_back("word_emb", Shape{c.vocab_size, c.glove_dim});
    if (c.use_pos) out.emplace_back("pos_emb", Shape{c.pos_vocab_size, c.pos_dim});
    if (c.use_ner) out.emplace_back("ner_emb", Shape{c.ner_vocab_size, c.ner_dim});
    if (c.use_conceptnet) out.emplace_back("rel_emb", Shape{c.rel_vocab_size, c.rel_dim});
    for (int layer = 1; layer <= c.num_attention_layers; ++layer) {
      std::string lp = "l" + std::to_string(layer) + ".";
      // Layer 1 attends over raw word vectors; layer 2 treats BiLSTM outputs
      // as the new input representation.
      int unit = layer == 1 ? c.glove_dim : two_h;
      int base = layer == 1 ? c.input_width() : two_h;
      if (c.use_pq_attention) out.emplace_back(lp + "att_pq.w1", Shape{unit, unit});
      if (c.use_pa_attention) out.emplace_back(lp + "att_pa.w1", Shape{unit, unit});
      if (c.use_qa_attention) out.emplace_back(lp + "att_qa.w1", Shape{unit, unit});
      int q_in = base;
      int p_in = base + (c.use_pq_attention ? unit : 0);
      int a_in = base + (c.use_pa_attention ? unit : 0) + (c.use_qa_attention ? unit : 0);
      for (auto [tag, d_in] : {std::pair<const char*, int>{"lstm_q", q_in},
                               {"lstm_p", p_in},
                               {"lstm_a", a_in}}) {
        for (const char* dir : {"fwd", "bwd"}) {
          out.emplace_back(lp + tag + "." + dir + ".wx", Shape{4 * c.hidden, d_in});
          out.emplace_back(lp + tag + "." + dir + ".wh", Shape{4 * c.hidden, c.hidden});
          out.emplace_back(lp + tag + "." + dir + ".b", Shape{4 * c.hidden});
        }
      }
    }
    out.emplace_back("att_out.w1", Shape{two_h, two_h});
    out.emplace_back("self_q.w2", Shape{two_h});
    out.emplace_back("self_a.w2", Shape{two_h});
    out.emplace_back("w3", Shape{two_h, two_h});
    out.emplace_back("w4", Shape{two_h, two_h});
    return out;
  }

  // Replaces the word-embedding table (e.g. with loaded GloVe rows).
  void set_word_embeddings(const std::vector<float>& table) {
    auto& emb = param("word_emb");
    if (table.size() != emb.values().size())
      throw ShapeError("word embedding table size " + std::to_string(table.size()) +
                       " does not match " + shape_str(emb.shape()));
    for (size_t i = 0; i < table.size(); ++i) emb.values()[i] = static_cast<T>(table[i]);
  }

  // Eq. 1 concatenation for one side, [B, L, d_in]. Ablated components are
  // omitted entirely, shrinking the width.
  TensorT<T> input_representation(const Batch& batch, Side side) const {
    const SeqBatch& s = seq(batch, side);
    return assemble_input(s, embedding_lookup(param_c("word_emb"), s.tokens));
  }

  // Probabilities y in (0, 1), shape [B]. Dropout draws from `rng` only in
  // train mode; eval mode is a pure function of parameters and batch.
  TensorT<T> forward(const Batch& batch, bool train, Rng* rng = nullptr) const {
    if (train && !rng) throw ContractError("forward: train mode requires an RNG");
    const SeqBatch& sp = batch.passage;
    const SeqBatch& sq = batch.question;
    const SeqBatch& sa = batch.answer;

    auto glove_p = embedding_lookup(param_c("word_emb"), sp.tokens);
    auto glove_q = embedding_lookup(param_c("word_emb"), sq.tokens);
    auto glove_a = embedding_lookup(param_c("word_emb"), sa.tokens);

    TensorT<T> rep_p = assemble_input(sp, glove_p);
    TensorT<T> rep_q = assemble_input(sq, glove_q);
    TensorT<T> rep_a = assemble_input(sa, glove_a);

    TensorT<T> hp, hq, ha;
    for (int layer = 1; layer <= cfg_.num_attention_layers; ++layer) {
      std::string lp = "l" + std::to_string(layer) + ".";
      // Word-level attentions run over the raw unit vectors for this layer:
      // GloVe rows in layer 1, previous BiLSTM outputs in layer 2.
      const TensorT<T>& unit_p = layer == 1 ? glove_p : hp;
      const TensorT<T>& unit_q = layer == 1 ? glove_q : hq;
      const TensorT<T>& unit_a = layer == 1 ? glove_a : ha;
      const TensorT<T>& base_p = layer == 1 ? rep_p : hp;
      const TensorT<T>& base_q = layer == 1 ? rep_q : hq;
      const TensorT<T>& base_a = layer == 1 ? rep_a : ha;

      TensorT<T> in_p = base_p;
      if (cfg_.use_pq_attention)
        in_p = concat<T>({base_p, seq_attention_batch(unit_p, unit_q, sq.mask,
                                                      param_c(lp + "att_pq.w1"))},
                         2);
      std::vector<TensorT<T>> a_parts{base_a};
      if (cfg_.use_pa_attention)
        a_parts.push_back(
            seq_attention_batch(unit_a, unit_p, sp.mask, param_c(lp + "att_pa.w1")));
      if (cfg_.use_qa_attention)
        a_parts.push_back(
            seq_attention_batch(unit_a, unit_q, sq.mask, param_c(lp + "att_qa.w1")));
      TensorT<T> in_a = a_parts.size() == 1 ? base_a : concat(a_parts, 2);
      TensorT<T> in_q = base_q;

      if (train) {
        in_p = dropout(in_p, cfg_.dropout, true, *rng);
        in_q = dropout(in_q, cfg_.dropout, true, *rng);
        in_a = dropout(in_a, cfg_.dropout, true, *rng);
      }

      hq = bilstm(in_q, sq.mask, lstm_params(lp + "lstm_q"));
      hp = bilstm(in_p, sp.mask, lstm_params(lp + "lstm_p"));
      ha = bilstm(in_a, sa.mask, lstm_params(lp + "lstm_a"));

      if (train) {
        hq = dropout(hq, cfg_.dropout, true, *rng);
        hp = dropout(hp, cfg_.dropout, true, *rng);
        ha = dropout(ha, cfg_.dropout, true, *rng);
      }
    }

    auto q_vec = self_attention_batch(hq, sq.mask, param_c("self_q.w2"));
    auto a_vec = self_attention_batch(ha, sa.mask, param_c("self_a.w2"));
    auto p_vec = seq_attention_batch(q_vec, hp, sp.mask, param_c("att_out.w1"));

    auto s1 = sum_last(mul(matmul(p_vec, param_c("w3")), a_vec));  // p^T W3 a
    auto s2 = sum_last(mul(matmul(q_vec, param_c("w4")), a_vec));  // q^T W4 a
    return sigmoid(add(s1, s2));
  }

 private:
  void initialize(Rng& rng) {
    for (auto& [name, t] : params_.items()) {
      if (name == "word_emb") {
        t.fill_normal(rng, 0.0, 0.1);
        for (int j = 0; j < cfg_.glove_dim; ++j) t.values()[static_cast<size_t>(j)] = T(0);
      } else if (name == "pos_emb" || name == "ner_emb" || name == "rel_emb") {
        t.fill_normal(rng, 0.0, 0.1);
      } else if (name.ends_with(".b")) {
        // Gate biases zero except forget gate at 1.
        std::fill(t.values().begin(), t.values().end(), T(0));
        int h = cfg_.hidden;
        for (int j = h; j < 2 * h; ++j) t.values()[static_cast<size_t>(j)] = T(1);
      } else {
        int fan_in = t.rank() == 2 ? t.dim(1) : t.dim(0);
        double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        t.fill_uniform(rng, -bound, bound);
      }
    }
  }

  const SeqBatch& seq(const Batch& batch, Side side) const {
    switch (side) {
      case Side::kPassage: return batch.passage;
      case Side::kQuestion: return batch.question;
      default: return batch.answer;
    }
  }

  const TensorT<T>& param_c(const std::string& name) const {
    auto* p = const_cast<ParamSetT<T>&>(params_).find(name);
    if (!p) throw CheckpointError("unknown parameter '" + name + "'");
    return *p;
  }

  BiLstmParamsT<T> lstm_params(const std::string& prefix) const {
    BiLstmParamsT<T> p;
    p.fwd = {param_c(prefix + ".fwd.wx"), param_c(prefix + ".fwd.wh"), param_c(prefix + ".fwd.b")};
    p.bwd = {param_c(prefix + ".bwd.wx"), param_c(prefix + ".bwd.wh"), param_c(prefix + ".bwd.b")};
    p.hidden = cfg_.hidden;
    return p;
  }

  TensorT<T> assemble_input(const SeqBatch& s, const TensorT<T>& glove) const {
    std::vector<TensorT<T>> parts{glove};
    if (cfg_.use_pos) parts.push_back(embedding_lookup(param_c("pos_emb"), s.pos));
    if (cfg_.use_ner) parts.push_back(embedding_lookup(param_c("ner_emb"), s.ner));
    if (cfg_.use_conceptnet) parts.push_back(embedding_lookup(param_c("rel_emb"), s.rel));
    if (cfg_.use_features)
      parts.push_back(TensorT<T>::template from_other<float>({s.batch, s.len, 2}, s.feat));
    return parts.size() == 1 ? parts[0] : concat(parts, 2);
  }

  ModelConfig cfg_;
  ParamSetT<T> params_;
};

using TriANModel = TriANModelT<float>;

// Argmax over candidate probabilities; ties resolve to the lowest index.
inline int predict_group(const std::vector<double>& probabilities) {
  if (probabilities.empty())
    throw ContractError("predict_group: group has no candidates");
  int best = 0;
  for (int i = 1; i < static_cast<int>(probabilities.size()); ++i)
    if (probabilities[static_cast<size_t>(i)] > probabilities[static_cast<size_t>(best)])
      best = i;
  return best;
}

}  // namespace trian

#endif  // TRIAN_MODEL_HPP
