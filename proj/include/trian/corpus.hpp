#ifndef TRIAN_CORPUS_HPP
#define TRIAN_CORPUS_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "trian/rng.hpp"

namespace trian {

struct Token {
  std::string text;
  std::string pos;
  std::string ner;
};

using TokenSeq = std::vector<Token>;

// One (passage, question, candidate answer) instance.
struct Example {
  std::string group_id;
  std::string example_id;
  TokenSeq passage;
  TokenSeq question;
  TokenSeq answer;
  int label = -1;  // 0/1, -1 when absent (predict-time data)

  bool has_label() const { return label >= 0; }
};

// Candidate answers sharing one passage and question. Accuracy is per group.
struct QuestionGroup {
  std::string group_id;
  std::vector<Example> examples;
};

int64_t total_examples(const std::vector<QuestionGroup>& groups);

// Token -> index map. Index 0 is padding, index 1 is unknown; corpus tokens
// start at 2 in first-occurrence order. Frequencies come from the build split.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();

  // Adds one observation of `token`, assigning an index on first sight.
  int add(const std::string& token);

  int lookup(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int index) const;
  int64_t count(const std::string& token) const;
  int64_t count_at(int index) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  // Serialized as one token per line starting at index 2 (pad/unk implicit).
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::unordered_map<std::string, int> index_;
  std::vector<std::string> tokens_;
  std::vector<int64_t> counts_;
};

Vocabulary build_vocab(const std::vector<QuestionGroup>& groups, int64_t min_count = 1);
Vocabulary build_tag_vocab(const std::vector<QuestionGroup>& groups, bool ner);

// Indices of the k most frequent real tokens; ties break toward the earlier
// first occurrence (lower index). k larger than the vocabulary warns and
// returns everything.
std::vector<int> top_k_tunable(const Vocabulary& vocab, int k);

// Unordered lowercase word pair -> ConceptNet-style relation ids.
// Relation id 0 is reserved for "no relation"; real relations get dense ids
// in first-seen order starting at 1.
class KnowledgeIndex {
 public:
  KnowledgeIndex();

  // TSV "relation<TAB>term1<TAB>term2". Terms are lowercased; duplicate
  // edges are dropped.
  static KnowledgeIndex from_tsv(const std::string& path);

  // Symmetric lookup; empty when the pair has no edge.
  const std::vector<int>& relations(const std::string& a, const std::string& b) const;

  int relation_id(const std::string& name) const;  // 0 when unknown
  const std::string& relation_name(int id) const { return relation_names_[static_cast<size_t>(id)]; }
  int relation_count() const { return static_cast<int>(relation_names_.size()); }
  int64_t edge_count() const { return edge_count_; }

  // JSON round-trip preserving relation-id assignment.
  void save(const std::string& path) const;
  static KnowledgeIndex load(const std::string& path);

 private:
  int intern_relation(const std::string& name);
  void add_edge(const std::string& relation, const std::string& term1,
                const std::string& term2);

  std::unordered_map<std::string, std::vector<int>> pairs_;
  std::unordered_map<std::string, int> relation_ids_;
  std::vector<std::string> relation_names_;
  int64_t edge_count_ = 0;
};

// Lowercase word -> corpus count; absent words count 0.
class FrequencyTable {
 public:
  FrequencyTable() = default;

  // TSV "word<TAB>count".
  static FrequencyTable from_tsv(const std::string& path);

  int64_t count(const std::string& lowercase_word) const;
  void set(const std::string& word, int64_t count);
  size_t size() const { return counts_.size(); }
  void save(const std::string& path) const;

 private:
  std::unordered_map<std::string, int64_t> counts_;
};

class Stopwords {
 public:
  Stopwords() = default;
  static Stopwords from_file(const std::string& path);  // one lowercase word per line

  bool contains(const std::string& lowercase_word) const;
  void insert(const std::string& word);
  size_t size() const { return words_.size(); }
  void save(const std::string& path) const;

 private:
  std::unordered_set<std::string> words_;
};

// JSONL loader. Each line is one candidate answer:
//   {"group_id", "example_id", "passage", "question", "answer", "label"?}
// where each sequence is [[text, pos, ner], ...] or a plain string (then the
// whitespace fallback tokenizer assigns pos "X" and ner "O"). With
// require_labels, a missing label is a schema error; otherwise label stays -1.
// Groups preserve file order; a warning stream receives label-count notices.
std::vector<QuestionGroup> load_dataset(const std::string& path, bool require_labels,
                                        std::ostream* warnings = nullptr);

struct EmbeddingTable {
  int dim = 0;
  std::vector<float> weights;  // [vocab.size() x dim]
  double coverage = 0.0;       // fraction of real vocab tokens found in the file
};

// Text format "word v1 ... v_dim" per line. Rows present in the file are
// copied; missing vocabulary rows are sampled N(0, 0.1^2); the padding row is
// all-zero.
EmbeddingTable load_embeddings(const std::string& path, int dim, const Vocabulary& vocab,
                               Rng& rng);

// Random table for runs without a pretrained-vector file: same init as the
// missing-row path of load_embeddings.
EmbeddingTable random_embeddings(int dim, const Vocabulary& vocab, Rng& rng);

std::string lowercase(const std::string& s);

}  // namespace trian

#endif  // TRIAN_CORPUS_HPP
