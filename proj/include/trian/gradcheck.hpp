#ifndef TRIAN_GRADCHECK_HPP
#define TRIAN_GRADCHECK_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "trian/featurize.hpp"
#include "trian/model.hpp"
#include "trian/optim.hpp"
#include "trian/rng.hpp"
#include "trian/tensor.hpp"

namespace trian {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int64_t coords_checked = 0;
};

// Central finite differences against backward(). fn() must rebuild the graph
// from the leaves' current values and return a scalar. Error metric per
// coordinate: |analytic - fd| / max(1, |analytic|, |fd|).
template <typename T, typename Fn>
GradCheckResult gradient_check(Fn&& fn, std::vector<TensorT<T>> leaves, double h = 1e-5) {
  std::vector<std::vector<T>> analytic;
  {
    for (auto& l : leaves) {
      l.set_requires_grad(true);
      l.ensure_grad();
      l.zero_grad();
    }
    TapeT<T> tape;
    auto loss = fn();
    tape.backward(loss);
    for (auto& l : leaves) {
      l.ensure_grad();
      analytic.push_back(l.grad());
    }
  }

  GradCheckResult res;
  NoGradT<T> guard;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& vals = leaves[li].values();
    for (size_t i = 0; i < vals.size(); ++i) {
      T orig = vals[i];
      vals[i] = orig + static_cast<T>(h);
      double fp = static_cast<double>(fn().item());
      vals[i] = orig - static_cast<T>(h);
      double fm = static_cast<double>(fn().item());
      vals[i] = orig;
      double fd = (fp - fm) / (2.0 * h);
      double an = static_cast<double>(analytic[li][i]);
      double err = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
      res.max_rel_error = std::max(res.max_rel_error, err);
      ++res.coords_checked;
    }
  }
  return res;
}

// Micro-architecture settings for desk-scale gradient checks.
inline ModelConfig micro_config() {
  ModelConfig c;
  c.glove_dim = 4;
  c.pos_dim = 2;
  c.ner_dim = 2;
  c.rel_dim = 2;
  c.hidden = 3;
  c.dropout = 0.0;
  c.vocab_size = 8;
  c.pos_vocab_size = 3;
  c.ner_vocab_size = 3;
  c.rel_vocab_size = 3;
  return c;
}

// Hand-built 2-example batch within micro_config()'s index ranges; second
// example has shorter sequences so padding paths are exercised.
inline Batch micro_batch() {
  auto seq = [](std::vector<int32_t> toks, std::vector<int32_t> tags,
                std::vector<uint8_t> mask, std::vector<float> feat) {
    SeqBatch s;
    s.batch = 2;
    s.len = static_cast<int>(toks.size()) / 2;
    Shape bl{s.batch, s.len};
    s.tokens = {bl, toks};
    s.pos = {bl, tags};
    s.ner = {bl, tags};
    s.rel = {bl, std::vector<int32_t>(toks.size(), 1)};
    s.feat = std::move(feat);
    s.mask = {bl, std::move(mask)};
    return s;
  };
  Batch b;
  b.passage = seq({2, 3, 4, 5, 6, 0}, {1, 2, 1, 2, 1, 0}, {1, 1, 1, 1, 1, 0},
                  {0.5f, 1.0f, 0.7f, 0.0f, 0.1f, 1.0f, 0.9f, 0.0f, 0.3f, 1.0f, 0.0f, 0.0f});
  b.question = seq({3, 7, 5, 0}, {2, 1, 1, 0}, {1, 1, 1, 0},
                   {0.2f, 0.0f, 0.8f, 1.0f, 0.4f, 0.0f, 0.0f, 0.0f});
  b.answer = seq({4, 2, 6, 0}, {1, 1, 2, 0}, {1, 1, 1, 0},
                 {0.6f, 1.0f, 0.2f, 0.0f, 0.5f, 1.0f, 0.0f, 0.0f});
  b.labels = {1.0f, 0.0f};
  b.group_ids = {"g0", "g0"};
  b.example_ids = {"g0_a", "g0_b"};
  return b;
}

// Full-network check: every parameter of a micro TriAN against central
// finite differences through forward + BCE loss.
inline GradCheckResult model_gradient_check(uint64_t seed, int num_attention_layers = 1,
                                            double h = 1e-5) {
  ModelConfig cfg = micro_config();
  cfg.num_attention_layers = num_attention_layers;
  Rng rng(seed);
  TriANModelT<double> model(cfg, &rng);
  Batch batch = micro_batch();
  std::vector<TensorT<double>> leaves;
  for (auto& [_, t] : model.params().items()) leaves.push_back(t);
  auto fn = [&model, &batch]() {
    return bce_loss(model.forward(batch, /*train=*/false), batch.labels);
  };
  return gradient_check<double>(fn, std::move(leaves), h);
}

// Per-op finite-difference suite over random small instances.
inline std::vector<std::pair<std::string, GradCheckResult>> op_gradient_checks(uint64_t seed,
                                                                               double h = 1e-5) {
  using DT = TensorT<double>;
  std::vector<std::pair<std::string, GradCheckResult>> out;
  Rng rng(seed);

  auto rand_tensor = [&rng](Shape shape, double lo = -1.0, double hi = 1.0) {
    auto t = DT::zeros(std::move(shape));
    t.fill_uniform(rng, lo, hi);
    return t;
  };
  // Fixed projection makes any output a scalar without killing structure.
  auto project = [&rng](const DT& x) {
    auto r = DT::zeros(x.shape());
    Rng local(17);
    r.fill_uniform(local, -1.0, 1.0);
    return sum(mul(x, r));
  };

  {
    auto a = rand_tensor({3, 4});
    auto b = rand_tensor({4, 2});
    out.emplace_back("matmul", gradient_check<double>(
                                   [&]() { return project(matmul(a, b)); }, {a, b}, h));
  }
  {
    auto a = rand_tensor({2, 3, 4});
    auto b = rand_tensor({2, 4, 2});
    out.emplace_back("bmm", gradient_check<double>([&]() { return project(bmm(a, b)); },
                                                   {a, b}, h));
  }
  {
    auto a = rand_tensor({2, 3, 4});
    auto b = rand_tensor({2, 5, 4});
    out.emplace_back("bmm_trans", gradient_check<double>(
                                      [&]() { return project(bmm(a, b, false, true)); },
                                      {a, b}, h));
  }
  {
    auto s = rand_tensor({2, 3, 4});
    BoolMask mask{{2, 4}, {1, 1, 1, 0, 1, 0, 1, 1}};
    out.emplace_back("masked_softmax", gradient_check<double>(
                                           [&]() { return project(masked_softmax(s, mask)); },
                                           {s}, h));
  }
  {
    auto a = rand_tensor({3, 4});
    auto b = rand_tensor({3, 4});
    out.emplace_back("add_mul_sub", gradient_check<double>(
                                        [&]() { return project(mul(add(a, b), sub(a, b))); },
                                        {a, b}, h));
  }
  {
    auto a = rand_tensor({2, 3});
    out.emplace_back("relu", gradient_check<double>([&]() { return project(relu(a)); }, {a}, h));
  }
  {
    auto a = rand_tensor({2, 3});
    out.emplace_back("sigmoid",
                     gradient_check<double>([&]() { return project(sigmoid(a)); }, {a}, h));
  }
  {
    auto a = rand_tensor({2, 3});
    out.emplace_back("tanh", gradient_check<double>([&]() { return project(tanh(a)); }, {a}, h));
  }
  {
    auto a = rand_tensor({2, 3}, 0.5, 2.0);
    out.emplace_back("log", gradient_check<double>([&]() { return project(log(a)); }, {a}, h));
  }
  {
    auto a = rand_tensor({4, 3});
    auto b = rand_tensor({2, 3});
    auto c = rand_tensor({1, 3});
    out.emplace_back("concat_slice",
                     gradient_check<double>(
                         [&]() {
                           auto cat = concat<double>({a, b, c}, 0);
                           return project(slice(cat, 0, 2, 4));
                         },
                         {a, b, c}, h));
  }
  {
    auto a = rand_tensor({2, 6});
    out.emplace_back("reshape_sum_last",
                     gradient_check<double>(
                         [&]() { return project(sum_last(reshape(a, {2, 3, 2}))); }, {a}, h));
  }
  {
    auto a = rand_tensor({4, 3});
    auto bias = rand_tensor({3});
    out.emplace_back("add_bias", gradient_check<double>(
                                     [&]() { return project(add_bias(a, bias)); }, {a, bias}, h));
  }
  {
    auto a = rand_tensor({3, 4});
    std::vector<double> rows{0.0, 0.5, 2.0};
    out.emplace_back("scale_rows", gradient_check<double>(
                                       [&]() { return project(scale_rows(a, rows)); }, {a}, h));
  }
  {
    auto table = rand_tensor({5, 3});
    IndexArray idx{{2, 2}, {0, 3, 3, 4}};
    out.emplace_back("embedding_lookup",
                     gradient_check<double>(
                         [&]() { return project(embedding_lookup(table, idx)); }, {table}, h));
  }
  {
    auto a = rand_tensor({6});
    // Values away from the clamp edges so the FD step stays inside.
    out.emplace_back("clamp", gradient_check<double>(
                                  [&]() { return project(clamp(a, -0.9, 0.9)); }, {a}, h));
  }
  {
    auto a = rand_tensor({5});
    // Fresh generator per evaluation keeps the mask identical across FD runs.
    out.emplace_back("dropout", gradient_check<double>(
                                    [&]() {
                                      Rng local(99);
                                      return project(dropout(a, 0.4, true, local));
                                    },
                                    {a}, h));
  }
  {
    auto y = rand_tensor({4}, 0.05, 0.95);
    std::vector<float> labels{1.0f, 0.0f, 1.0f, 0.0f};
    out.emplace_back("bce_loss",
                     gradient_check<double>([&]() { return bce_loss(y, labels); }, {y}, h));
  }
  {
    auto q = rand_tensor({2, 3, 4});
    auto v = rand_tensor({2, 3, 4});
    auto w1 = rand_tensor({4, 4});
    BoolMask mask{{2, 3}, {1, 1, 0, 1, 1, 1}};
    out.emplace_back("seq_attention",
                     gradient_check<double>(
                         [&]() { return project(seq_attention_batch(q, v, mask, w1)); },
                         {q, v, w1}, h));
  }
  {
    auto u = rand_tensor({2, 3, 4});
    auto w2 = rand_tensor({4});
    BoolMask mask{{2, 3}, {1, 1, 1, 1, 0, 0}};
    out.emplace_back("self_attention",
                     gradient_check<double>(
                         [&]() { return project(self_attention_batch(u, mask, w2)); },
                         {u, w2}, h));
  }
  {
    auto x = rand_tensor({2, 3, 4});
    LstmDirParamsT<double> p{rand_tensor({8, 4}), rand_tensor({8, 2}), rand_tensor({8})};
    BiLstmParamsT<double> bp{p, {rand_tensor({8, 4}), rand_tensor({8, 2}), rand_tensor({8})}, 2};
    BoolMask mask{{2, 3}, {1, 1, 1, 1, 1, 0}};
    out.emplace_back("bilstm",
                     gradient_check<double>(
                         [&]() { return project(bilstm(x, mask, bp)); },
                         {x, bp.fwd.wx, bp.fwd.wh, bp.fwd.b, bp.bwd.wx, bp.bwd.wh, bp.bwd.b}, h));
  }
  return out;
}

}  // namespace trian

#endif  // TRIAN_GRADCHECK_HPP
