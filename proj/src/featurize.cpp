#include "trian/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "trian/error.hpp"

namespace trian {

std::vector<int32_t> relation_ids(const TokenSeq& tokens,
                                  const std::vector<const TokenSeq*>& context,
                                  const KnowledgeIndex& index, Rng& rng) {
  // Distinct context words, lowercased, in sequence order.
  std::vector<std::string> ctx_words;
  std::unordered_set<std::string> seen;
  for (const auto* seq : context)
    for (const auto& tok : *seq) {
      std::string w = lowercase(tok.text);
      if (seen.insert(w).second) ctx_words.push_back(std::move(w));
    }

  std::vector<int32_t> out;
  out.reserve(tokens.size());
  for (const auto& tok : tokens) {
    std::string w = lowercase(tok.text);
    std::vector<int32_t> candidates;
    for (const auto& c : ctx_words)
      for (int rid : index.relations(w, c))
        if (std::find(candidates.begin(), candidates.end(), rid) == candidates.end())
          candidates.push_back(rid);
    if (candidates.empty()) {
      out.push_back(0);
    } else if (candidates.size() == 1) {
      out.push_back(candidates[0]);
    } else {
      out.push_back(candidates[rng.below(candidates.size())]);
    }
  }
  return out;
}

std::vector<float> handcrafted_features(const TokenSeq& tokens, const TokenSeq& ctx_a,
                                        const TokenSeq& ctx_b, const FrequencyTable& freq,
                                        const Stopwords& stopwords) {
  std::unordered_set<std::string> ctx;
  for (const auto* seq : {&ctx_a, &ctx_b})
    for (const auto& tok : *seq) ctx.insert(lowercase(tok.text));

  std::vector<float> out;
  out.reserve(tokens.size() * 2);
  for (const auto& tok : tokens) {
    std::string w = lowercase(tok.text);
    if (stopwords.contains(w)) {
      out.push_back(0.0f);
      out.push_back(0.0f);
      continue;
    }
    out.push_back(static_cast<float>(std::log1p(static_cast<double>(freq.count(w)))));
    out.push_back(ctx.count(w) ? 1.0f : 0.0f);
  }
  return out;
}

SeqFeat Featurizer::featurize_seq(const TokenSeq& seq, const TokenSeq& ctx_a,
                                  const TokenSeq& ctx_b, Rng& rng) const {
  SeqFeat f;
  f.tokens.reserve(seq.size());
  f.pos.reserve(seq.size());
  f.ner.reserve(seq.size());
  for (const auto& tok : seq) {
    f.tokens.push_back(words_->lookup(tok.text));
    f.pos.push_back(pos_tags_->lookup(tok.pos));
    f.ner.push_back(ner_tags_->lookup(tok.ner));
  }
  if (index_) {
    f.rel = relation_ids(seq, {&ctx_a, &ctx_b}, *index_, rng);
  } else {
    f.rel.assign(seq.size(), 0);
  }
  static const FrequencyTable kEmptyFreq;
  static const Stopwords kEmptyStop;
  f.feat = handcrafted_features(seq, ctx_a, ctx_b, freq_ ? *freq_ : kEmptyFreq,
                                stopwords_ ? *stopwords_ : kEmptyStop);
  return f;
}

FeaturizedExample Featurizer::featurize(const Example& ex, Rng& rng) const {
  FeaturizedExample out;
  out.group_id = ex.group_id;
  out.example_id = ex.example_id;
  out.label = ex.label;
  out.passage = featurize_seq(ex.passage, ex.question, ex.answer, rng);
  out.question = featurize_seq(ex.question, ex.passage, ex.answer, rng);
  out.answer = featurize_seq(ex.answer, ex.passage, ex.question, rng);
  return out;
}

std::vector<FeaturizedExample> Featurizer::featurize_groups(
    const std::vector<QuestionGroup>& groups, Rng& rng) const {
  std::vector<FeaturizedExample> out;
  for (const auto& g : groups)
    for (const auto& ex : g.examples) out.push_back(featurize(ex, rng));
  return out;
}

namespace {

SeqBatch pack(const std::vector<const SeqFeat*>& seqs) {
  SeqBatch b;
  b.batch = static_cast<int>(seqs.size());
  b.len = 0;
  for (const auto* s : seqs) b.len = std::max(b.len, s->len());
  Shape bl{b.batch, b.len};
  b.tokens = {bl, std::vector<int32_t>(static_cast<size_t>(b.batch) * b.len, 0)};
  b.pos = {bl, std::vector<int32_t>(static_cast<size_t>(b.batch) * b.len, 0)};
  b.ner = {bl, std::vector<int32_t>(static_cast<size_t>(b.batch) * b.len, 0)};
  b.rel = {bl, std::vector<int32_t>(static_cast<size_t>(b.batch) * b.len, 0)};
  b.feat.assign(static_cast<size_t>(b.batch) * b.len * 2, 0.0f);
  b.mask = {bl, std::vector<uint8_t>(static_cast<size_t>(b.batch) * b.len, 0)};
  for (int i = 0; i < b.batch; ++i) {
    const SeqFeat& s = *seqs[static_cast<size_t>(i)];
    size_t row = static_cast<size_t>(i) * b.len;
    for (int t = 0; t < s.len(); ++t) {
      b.tokens.v[row + t] = s.tokens[static_cast<size_t>(t)];
      b.pos.v[row + t] = s.pos[static_cast<size_t>(t)];
      b.ner.v[row + t] = s.ner[static_cast<size_t>(t)];
      b.rel.v[row + t] = s.rel[static_cast<size_t>(t)];
      b.feat[(row + t) * 2] = s.feat[static_cast<size_t>(t) * 2];
      b.feat[(row + t) * 2 + 1] = s.feat[static_cast<size_t>(t) * 2 + 1];
      b.mask.v[row + t] = 1;
    }
  }
  return b;
}

}  // namespace

std::vector<Batch> make_batches(std::vector<FeaturizedExample> examples, int batch_size,
                                bool shuffle, Rng& rng) {
  if (batch_size <= 0) throw ConfigError("make_batches: batch_size must be positive");
  std::vector<size_t> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle) rng.shuffle(order);

  std::vector<Batch> out;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
    size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
    Batch batch;
    std::vector<const SeqFeat*> p, q, a;
    for (size_t i = start; i < end; ++i) {
      const FeaturizedExample& ex = examples[order[i]];
      p.push_back(&ex.passage);
      q.push_back(&ex.question);
      a.push_back(&ex.answer);
      batch.labels.push_back(static_cast<float>(ex.label));
      batch.group_ids.push_back(ex.group_id);
      batch.example_ids.push_back(ex.example_id);
    }
    batch.passage = pack(p);
    batch.question = pack(q);
    batch.answer = pack(a);
    out.push_back(std::move(batch));
  }
  return out;
}

std::vector<Batch> make_batches(const std::vector<QuestionGroup>& groups,
                                const Featurizer& featurizer, int batch_size, bool shuffle,
                                Rng& rng) {
  return make_batches(featurizer.featurize_groups(groups, rng), batch_size, shuffle, rng);
}

}  // namespace trian
