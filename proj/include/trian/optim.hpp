#ifndef TRIAN_OPTIM_HPP
#define TRIAN_OPTIM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "trian/corpus.hpp"
#include "trian/error.hpp"
#include "trian/featurize.hpp"
#include "trian/model.hpp"
#include "trian/rng.hpp"
#include "trian/tensor.hpp"

namespace trian {

// ---------------------------------------------------------------------------
// schedule
// ---------------------------------------------------------------------------

struct TrainPlan {
  int epochs = 50;
  int batch_size = 32;
  double clip_norm = 10.0;
  std::vector<int> lr_halving_epochs{10, 15};
  double lr = 2e-3;
  int tunable_top_k = 10;
  uint64_t seed = 1;
  int pretrain_epochs = 10;
  int ensemble_members = 9;

  void validate() const {
    if (epochs < 0) throw ConfigError("plan: epochs must be >= 0");
    if (batch_size <= 0) throw ConfigError("plan: batch_size must be positive");
    if (clip_norm <= 0) throw ConfigError("plan: clip_norm must be positive");
    if (!std::is_sorted(lr_halving_epochs.begin(), lr_halving_epochs.end()))
      throw ConfigError("plan: lr_halving_epochs must be sorted");
  }
};

// The rate is halved at the END of each listed epoch: epoch 10 still runs at
// the base rate, epoch 11 at half.
inline double lr_at_epoch(const TrainPlan& plan, int epoch) {
  if (epoch < 1) throw ContractError("lr_at_epoch: epochs are 1-based");
  double lr = plan.lr;
  for (int h : plan.lr_halving_epochs)
    if (epoch > h) lr *= 0.5;
  return lr;
}

// ---------------------------------------------------------------------------
// loss
// ---------------------------------------------------------------------------

// Mean binary cross entropy; probabilities are clamped to [1e-7, 1 - 1e-7]
// before the logs.
template <typename T>
TensorT<T> bce_loss(const TensorT<T>& y, const std::vector<float>& labels) {
  if (y.rank() != 1 || static_cast<size_t>(y.dim(0)) != labels.size())
    throw ShapeError("bce_loss: probabilities " + shape_str(y.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  std::vector<T> pos(labels.size()), neg_(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0.0f && labels[i] != 1.0f)
      throw ContractError("bce_loss: label " + std::to_string(labels[i]) +
                          " at position " + std::to_string(i) + " is not 0 or 1");
    pos[i] = static_cast<T>(labels[i]);
    neg_[i] = static_cast<T>(1.0f - labels[i]);
  }
  auto y_true = TensorT<T>::from({y.dim(0)}, std::move(pos));
  auto y_false = TensorT<T>::from({y.dim(0)}, std::move(neg_));
  auto yc = clamp(y, static_cast<T>(1e-7), static_cast<T>(1.0 - 1e-7));
  auto term = add(mul(y_true, log(yc)), mul(y_false, log(add_scalar(neg(yc), T(1)))));
  return neg(mean(term));
}

// ---------------------------------------------------------------------------
// gradient clipping
// ---------------------------------------------------------------------------

// Joint L2 norm over every parameter gradient; everything is scaled by the
// same factor when the cap is exceeded. Returns the applied scale.
template <typename T>
double clip_gradients(ParamSetT<T>& params, double max_norm) {
  double sq = 0.0;
  for (auto& [_, t] : params.items()) {
    if (!t.has_grad()) continue;
    for (T g : t.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return 1.0;
  double scale = max_norm / norm;
  for (auto& [_, t] : params.items()) {
    if (!t.has_grad()) continue;
    for (T& g : t.grad()) g = static_cast<T>(static_cast<double>(g) * scale);
  }
  return scale;
}

// ---------------------------------------------------------------------------
// Adamax
// ---------------------------------------------------------------------------

// m <- b1 m + (1-b1) g ; u <- max(b2 u, |g|) ; theta <- theta - lr/(1-b1^t) * m/(u+eps).
// Coordinates whose gradients are zeroed before step() stay bitwise constant.
template <typename T>
class AdamaxT {
 public:
  AdamaxT(ParamSetT<T>& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
          double eps = 1e-8)
      : params_(&params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& [_, t] : params.items()) {
      m_.emplace_back(t.values().size(), T(0));
      u_.emplace_back(t.values().size(), T(0));
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int64_t step_count() const { return t_; }

  void step() {
    ++t_;
    beta1_pow_ *= beta1_;
    double lr_corr = lr_ / (1.0 - beta1_pow_);
    size_t pi = 0;
    for (auto& [_, t] : params_->items()) {
      t.ensure_grad();
      auto& g = t.grad();
      auto& m = m_[pi];
      auto& u = u_[pi];
      ++pi;
      for (size_t i = 0; i < g.size(); ++i) {
        m[i] = static_cast<T>(beta1_ * m[i] + (1.0 - beta1_) * g[i]);
        u[i] = std::max(static_cast<T>(beta2_ * u[i]), static_cast<T>(std::abs(g[i])));
        t.values()[i] -= static_cast<T>(lr_corr * static_cast<double>(m[i]) /
                                        (static_cast<double>(u[i]) + eps_));
      }
    }
  }

 private:
  ParamSetT<T>* params_;
  double lr_, beta1_, beta2_, eps_;
  double beta1_pow_ = 1.0;
  int64_t t_ = 0;
  std::vector<std::vector<T>> m_, u_;
};

// ---------------------------------------------------------------------------
// partial embedding freezing
// ---------------------------------------------------------------------------

// Keeps all word-embedding rows outside the top-k frequency set frozen by
// zeroing their gradient rows between backward and step. Tag/relation
// embeddings are untouched.
class EmbeddingFreeze {
 public:
  EmbeddingFreeze(int vocab_rows, std::vector<int> tunable_rows)
      : tunable_(static_cast<size_t>(vocab_rows), 0) {
    for (int r : tunable_rows) tunable_.at(static_cast<size_t>(r)) = 1;
  }

  static EmbeddingFreeze from_top_k(const Vocabulary& vocab, int k) {
    return EmbeddingFreeze(vocab.size(), top_k_tunable(vocab, k));
  }

  int tunable_count() const {
    return static_cast<int>(std::count(tunable_.begin(), tunable_.end(), 1));
  }

  template <typename T>
  void apply(TensorT<T>& word_emb) const {
    if (!word_emb.has_grad()) return;
    int dim = word_emb.dim(1);
    auto& g = word_emb.grad();
    for (size_t row = 0; row < tunable_.size(); ++row)
      if (!tunable_[row]) std::fill_n(g.begin() + row * dim, dim, T(0));
  }

 private:
  std::vector<uint8_t> tunable_;
};

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

struct GroupResult {
  std::string group_id;
  std::vector<std::string> example_ids;
  std::vector<double> probabilities;
  std::vector<int> labels;  // -1 when absent
  int predicted = 0;
};

// Eval-mode probabilities for every example, in batch order.
template <typename T>
std::vector<double> predict_probabilities(const TriANModelT<T>& model,
                                          const std::vector<Batch>& batches) {
  NoGradT<T> guard;
  std::vector<double> out;
  for (const auto& batch : batches) {
    auto y = model.forward(batch, false);
    for (T v : y.values()) out.push_back(static_cast<double>(v));
  }
  return out;
}

// Reassembles per-example probabilities into groups. Batches must be in eval
// order (no shuffling), where a group's candidates are contiguous.
inline std::vector<GroupResult> group_results(const std::vector<Batch>& batches,
                                              const std::vector<double>& probabilities) {
  std::vector<GroupResult> out;
  size_t i = 0;
  for (const auto& batch : batches) {
    for (int b = 0; b < batch.size(); ++b, ++i) {
      if (out.empty() || out.back().group_id != batch.group_ids[static_cast<size_t>(b)]) {
        out.push_back({batch.group_ids[static_cast<size_t>(b)], {}, {}, {}, 0});
      }
      auto& g = out.back();
      g.example_ids.push_back(batch.example_ids[static_cast<size_t>(b)]);
      g.probabilities.push_back(probabilities.at(i));
      g.labels.push_back(static_cast<int>(batch.labels[static_cast<size_t>(b)]));
    }
  }
  for (auto& g : out) g.predicted = predict_group(g.probabilities);
  return out;
}

// Fraction of groups whose chosen candidate carries label 1.
inline double group_accuracy(const std::vector<GroupResult>& groups) {
  if (groups.empty()) throw ContractError("group_accuracy: no groups");
  int correct = 0;
  for (const auto& g : groups) {
    for (int l : g.labels)
      if (l < 0)
        throw ContractError("group_accuracy: group '" + g.group_id + "' has unlabeled candidates");
    correct += g.labels[static_cast<size_t>(g.predicted)] == 1 ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(groups.size());
}

template <typename T>
double evaluate_accuracy(const TriANModelT<T>& model, const std::vector<Batch>& batches) {
  return group_accuracy(group_results(batches, predict_probabilities(model, batches)));
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct EpochMetric {
  int epoch = 0;
  std::string stage;  // "pretrain" or "finetune"
  double lr = 0.0;
  double train_loss = 0.0;
  double dev_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::vector<EpochMetric> trace;
  double best_dev_accuracy = -1.0;
  int best_epoch = 0;
};

namespace detail {

template <typename T>
std::vector<std::vector<T>> snapshot_params(const TriANModelT<T>& model) {
  std::vector<std::vector<T>> out;
  for (const auto& [_, t] : model.params().items()) out.push_back(t.values());
  return out;
}

template <typename T>
void restore_params(TriANModelT<T>& model, const std::vector<std::vector<T>>& snap) {
  size_t i = 0;
  for (auto& [_, t] : model.params().items()) t.values() = snap[i++];
}

}  // namespace detail

// Two-stage recipe: an optional pretrain stage on auxiliary data, then
// fine-tuning on the target data with a fresh optimizer and schedule. The
// model ends at the best-dev fine-tune epoch (initialization when epochs is
// zero or no dev data is given).
template <typename T>
TrainResult train(TriANModelT<T>& model, const TrainPlan& plan,
                  const std::vector<FeaturizedExample>& train_examples,
                  const std::vector<FeaturizedExample>& pretrain_examples,
                  const std::vector<Batch>& dev_batches, const EmbeddingFreeze& freeze,
                  Rng& rng, std::ostream* log = nullptr) {
  plan.validate();
  TrainResult result;
  auto best_snapshot = detail::snapshot_params(model);
  bool have_best = false;

  auto run_stage = [&](const std::string& stage, const std::vector<FeaturizedExample>& examples,
                       int epochs, bool select_best) {
    AdamaxT<T> opt(model.params(), plan.lr);
    auto& word_emb = model.param("word_emb");
    for (int epoch = 1; epoch <= epochs; ++epoch) {
      opt.set_lr(lr_at_epoch(plan, epoch));
      auto batches = make_batches(examples, plan.batch_size, /*shuffle=*/true, rng);
      double loss_sum = 0.0;
      int64_t n_examples = 0;
      for (size_t bi = 0; bi < batches.size(); ++bi) {
        const Batch& batch = batches[bi];
        model.params().zero_grad();
        TapeT<T> tape;
        auto y = model.forward(batch, /*train=*/true, &rng);
        auto loss = bce_loss(y, batch.labels);
        double lv = static_cast<double>(loss.item());
        if (!std::isfinite(lv))
          throw ContractError("training diverged: loss is not finite (stage=" + stage +
                              ", epoch=" + std::to_string(epoch) +
                              ", batch=" + std::to_string(bi) + ")");
        tape.backward(loss);
        freeze.apply(word_emb);
        clip_gradients(model.params(), plan.clip_norm);
        opt.step();
        loss_sum += lv * batch.size();
        n_examples += batch.size();
      }

      EpochMetric m;
      m.epoch = epoch;
      m.stage = stage;
      m.lr = opt.lr();
      m.train_loss = n_examples > 0 ? loss_sum / static_cast<double>(n_examples) : 0.0;
      if (!dev_batches.empty()) {
        m.dev_accuracy = evaluate_accuracy(model, dev_batches);
        if (select_best && m.dev_accuracy > result.best_dev_accuracy) {
          result.best_dev_accuracy = m.dev_accuracy;
          result.best_epoch = epoch;
          best_snapshot = detail::snapshot_params(model);
          have_best = true;
        }
      }
      result.trace.push_back(m);
      if (log)
        *log << stage << " epoch " << epoch << ": lr=" << m.lr << " loss=" << m.train_loss
             << (std::isnan(m.dev_accuracy) ? std::string()
                                            : " dev_acc=" + std::to_string(m.dev_accuracy))
             << '\n';
    }
  };

  if (!pretrain_examples.empty()) run_stage("pretrain", pretrain_examples, plan.pretrain_epochs,
                                            /*select_best=*/false);
  run_stage("finetune", train_examples, plan.epochs, /*select_best=*/true);

  if (have_best) detail::restore_params(model, best_snapshot);
  return result;
}

}  // namespace trian

#endif  // TRIAN_OPTIM_HPP
