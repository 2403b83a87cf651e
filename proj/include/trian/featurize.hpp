#ifndef TRIAN_FEATURIZE_HPP
#define TRIAN_FEATURIZE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "trian/corpus.hpp"
#include "trian/rng.hpp"
#include "trian/tensor.hpp"

namespace trian {

// Numeric view of one token sequence.
struct SeqFeat {
  std::vector<int32_t> tokens;
  std::vector<int32_t> pos;
  std::vector<int32_t> ner;
  std::vector<int32_t> rel;
  std::vector<float> feat;  // [len x 2]: log term frequency, co-occurrence

  int len() const { return static_cast<int>(tokens.size()); }
};

// One example after vocabulary/relation/feature resolution. Relation
// tie-breaks are drawn here, once per run.
struct FeaturizedExample {
  std::string group_id;
  std::string example_id;
  int label = -1;
  SeqFeat passage;
  SeqFeat question;
  SeqFeat answer;
};

// Padded, masked arrays for a set of examples. Row-major [B x L] per kind.
struct SeqBatch {
  int batch = 0;
  int len = 0;
  IndexArray tokens;
  IndexArray pos;
  IndexArray ner;
  IndexArray rel;
  std::vector<float> feat;  // [B x L x 2]
  BoolMask mask;
};

struct Batch {
  SeqBatch passage;
  SeqBatch question;
  SeqBatch answer;
  std::vector<float> labels;  // -1 entries when absent
  std::vector<std::string> group_ids;
  std::vector<std::string> example_ids;

  int size() const { return passage.batch; }
};

// One relation id per token: relations between the token and ANY context
// word are collected (distinct, first-seen order); none -> 0, several -> one
// chosen uniformly from the run RNG.
std::vector<int32_t> relation_ids(const TokenSeq& tokens,
                                  const std::vector<const TokenSeq*>& context,
                                  const KnowledgeIndex& index, Rng& rng);

// [len x 2] per-token features: ln(1 + corpus count) and a binary
// co-occurrence flag against the two context sequences. Both are suppressed
// to 0 for stopwords. Matching is lowercase.
std::vector<float> handcrafted_features(const TokenSeq& tokens, const TokenSeq& ctx_a,
                                        const TokenSeq& ctx_b, const FrequencyTable& freq,
                                        const Stopwords& stopwords);

// Resolves tokens/tags against vocabularies and computes relation ids and
// handcrafted features. Context conventions: passage tokens see
// question+answer, question tokens see passage+answer, answer tokens see
// passage+question.
class Featurizer {
 public:
  Featurizer(const Vocabulary* words, const Vocabulary* pos_tags, const Vocabulary* ner_tags,
             const KnowledgeIndex* index, const FrequencyTable* freq,
             const Stopwords* stopwords)
      : words_(words),
        pos_tags_(pos_tags),
        ner_tags_(ner_tags),
        index_(index),
        freq_(freq),
        stopwords_(stopwords) {}

  FeaturizedExample featurize(const Example& ex, Rng& rng) const;
  std::vector<FeaturizedExample> featurize_groups(const std::vector<QuestionGroup>& groups,
                                                  Rng& rng) const;

 private:
  SeqFeat featurize_seq(const TokenSeq& seq, const TokenSeq& ctx_a, const TokenSeq& ctx_b,
                        Rng& rng) const;

  const Vocabulary* words_;
  const Vocabulary* pos_tags_;
  const Vocabulary* ner_tags_;
  const KnowledgeIndex* index_;      // may be null: every relation id is 0
  const FrequencyTable* freq_;       // may be null: counts are 0
  const Stopwords* stopwords_;       // may be null: nothing suppressed
};

// Pads each sequence kind to its per-batch max length and sets masks.
// Shuffling permutes examples (training); without it, file order is kept so
// evaluation sees groups contiguously.
std::vector<Batch> make_batches(std::vector<FeaturizedExample> examples, int batch_size,
                                bool shuffle, Rng& rng);

// Convenience: featurize + batch in one call.
std::vector<Batch> make_batches(const std::vector<QuestionGroup>& groups,
                                const Featurizer& featurizer, int batch_size, bool shuffle,
                                Rng& rng);

}  // namespace trian

#endif  // TRIAN_FEATURIZE_HPP
