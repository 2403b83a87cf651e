#include "trian/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "trian/error.hpp"

namespace trian {

using json = nlohmann::json;

namespace {

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path);
  return in;
}

std::string pair_key(const std::string& a, const std::string& b) {
  // Unordered pair: canonical ordering makes lookups symmetric.
  return a <= b ? a + "\t" + b : b + "\t" + a;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return out;
}

}  // namespace

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

int64_t total_examples(const std::vector<QuestionGroup>& groups) {
  int64_t n = 0;
  for (const auto& g : groups) n += static_cast<int64_t>(g.examples.size());
  return n;
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
  tokens_ = {"<pad>", "<unk>"};
  counts_ = {0, 0};
}

int Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it == index_.end()) {
    int id = static_cast<int>(tokens_.size());
    index_.emplace(token, id);
    tokens_.push_back(token);
    counts_.push_back(1);
    return id;
  }
  counts_[static_cast<size_t>(it->second)] += 1;
  return it->second;
}

int Vocabulary::lookup(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.count(token) > 0;
}

const std::string& Vocabulary::token(int index) const {
  return tokens_.at(static_cast<size_t>(index));
}

int64_t Vocabulary::count(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? 0 : counts_[static_cast<size_t>(it->second)];
}

int64_t Vocabulary::count_at(int index) const {
  return counts_.at(static_cast<size_t>(index));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write file: " + path);
  for (size_t i = 2; i < tokens_.size(); ++i)
    out << tokens_[i] << '\t' << counts_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  auto in = open_or_throw(path);
  Vocabulary v;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != 2)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 2 columns, got " +
                       std::to_string(cols.size()));
    int id = static_cast<int>(v.tokens_.size());
    v.index_.emplace(cols[0], id);
    v.tokens_.push_back(cols[0]);
    v.counts_.push_back(std::stoll(cols[1]));
  }
  return v;
}

Vocabulary build_vocab(const std::vector<QuestionGroup>& groups, int64_t min_count) {
  Vocabulary counting;
  for (const auto& g : groups)
    for (const auto& ex : g.examples)
      for (const auto* seq : {&ex.passage, &ex.question, &ex.answer})
        for (const auto& tok : *seq) counting.add(tok.text);
  if (min_count <= 1) return counting;
  Vocabulary filtered;
  for (int i = 2; i < counting.size(); ++i) {
    if (counting.count_at(i) >= min_count) {
      const std::string& t = counting.token(i);
      for (int64_t c = 0; c < counting.count_at(i); ++c) filtered.add(t);
    }
  }
  return filtered;
}

Vocabulary build_tag_vocab(const std::vector<QuestionGroup>& groups, bool ner) {
  Vocabulary v;
  for (const auto& g : groups)
    for (const auto& ex : g.examples)
      for (const auto* seq : {&ex.passage, &ex.question, &ex.answer})
        for (const auto& tok : *seq) v.add(ner ? tok.ner : tok.pos);
  return v;
}

std::vector<int> top_k_tunable(const Vocabulary& vocab, int k) {
  std::vector<int> ids;
  for (int i = 2; i < vocab.size(); ++i) ids.push_back(i);
  std::stable_sort(ids.begin(), ids.end(), [&vocab](int a, int b) {
    if (vocab.count_at(a) != vocab.count_at(b)) return vocab.count_at(a) > vocab.count_at(b);
    return a < b;  // tie: earlier first occurrence
  });
  if (k < 0) k = 0;
  if (k > static_cast<int>(ids.size())) {
    std::cerr << "warning: top_k_tunable: k=" << k << " exceeds vocabulary size "
              << ids.size() << "; returning all tunable indices\n";
    k = static_cast<int>(ids.size());
  }
  ids.resize(static_cast<size_t>(k));
  return ids;
}

// ---------------------------------------------------------------------------
// KnowledgeIndex
// ---------------------------------------------------------------------------

KnowledgeIndex::KnowledgeIndex() { relation_names_ = {"<no-relation>"}; }

int KnowledgeIndex::intern_relation(const std::string& name) {
  auto it = relation_ids_.find(name);
  if (it != relation_ids_.end()) return it->second;
  int id = static_cast<int>(relation_names_.size());
  relation_ids_.emplace(name, id);
  relation_names_.push_back(name);
  return id;
}

void KnowledgeIndex::add_edge(const std::string& relation, const std::string& term1,
                              const std::string& term2) {
  int rid = intern_relation(relation);
  auto& rels = pairs_[pair_key(lowercase(term1), lowercase(term2))];
  if (std::find(rels.begin(), rels.end(), rid) == rels.end()) {
    rels.push_back(rid);
    ++edge_count_;
  }
}

KnowledgeIndex KnowledgeIndex::from_tsv(const std::string& path) {
  auto in = open_or_throw(path);
  KnowledgeIndex idx;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != 3)
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected 3 tab-separated columns, got " +
                       std::to_string(cols.size()));
    idx.add_edge(cols[0], cols[1], cols[2]);
  }
  return idx;
}

const std::vector<int>& KnowledgeIndex::relations(const std::string& a,
                                                  const std::string& b) const {
  static const std::vector<int> kEmpty;
  auto it = pairs_.find(pair_key(lowercase(a), lowercase(b)));
  return it == pairs_.end() ? kEmpty : it->second;
}

int KnowledgeIndex::relation_id(const std::string& name) const {
  auto it = relation_ids_.find(name);
  return it == relation_ids_.end() ? 0 : it->second;
}

void KnowledgeIndex::save(const std::string& path) const {
  json j;
  j["relations"] = std::vector<std::string>(relation_names_.begin() + 1, relation_names_.end());
  // Sorted pair keys keep the file byte-stable across runs.
  std::vector<std::string> keys;
  keys.reserve(pairs_.size());
  for (const auto& [k, _] : pairs_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  json edges = json::array();
  for (const auto& k : keys) {
    auto tab = k.find('\t');
    edges.push_back({k.substr(0, tab), k.substr(tab + 1), pairs_.at(k)});
  }
  j["edges"] = std::move(edges);
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write file: " + path);
  out << j.dump() << '\n';
}

KnowledgeIndex KnowledgeIndex::load(const std::string& path) {
  auto in = open_or_throw(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  KnowledgeIndex idx;
  for (const auto& name : j.at("relations")) idx.intern_relation(name.get<std::string>());
  for (const auto& e : j.at("edges")) {
    std::vector<int> rels = e.at(2).get<std::vector<int>>();
    idx.pairs_[pair_key(e.at(0).get<std::string>(), e.at(1).get<std::string>())] = rels;
    idx.edge_count_ += static_cast<int64_t>(rels.size());
  }
  return idx;
}

// ---------------------------------------------------------------------------
// FrequencyTable / Stopwords
// ---------------------------------------------------------------------------

FrequencyTable FrequencyTable::from_tsv(const std::string& path) {
  auto in = open_or_throw(path);
  FrequencyTable t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != 2)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 2 columns, got " +
                       std::to_string(cols.size()));
    try {
      t.counts_[cols[0]] = std::stoll(cols[1]);
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": bad count '" + cols[1] + "'");
    }
  }
  return t;
}

int64_t FrequencyTable::count(const std::string& lowercase_word) const {
  auto it = counts_.find(lowercase_word);
  return it == counts_.end() ? 0 : it->second;
}

void FrequencyTable::set(const std::string& word, int64_t count) { counts_[word] = count; }

void FrequencyTable::save(const std::string& path) const {
  std::vector<std::pair<std::string, int64_t>> rows(counts_.begin(), counts_.end());
  std::sort(rows.begin(), rows.end());
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write file: " + path);
  for (const auto& [w, c] : rows) out << w << '\t' << c << '\n';
}

Stopwords Stopwords::from_file(const std::string& path) {
  auto in = open_or_throw(path);
  Stopwords s;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) s.words_.insert(line);
  }
  return s;
}

bool Stopwords::contains(const std::string& lowercase_word) const {
  return words_.count(lowercase_word) > 0;
}

void Stopwords::insert(const std::string& word) { words_.insert(word); }

void Stopwords::save(const std::string& path) const {
  std::vector<std::string> rows(words_.begin(), words_.end());
  std::sort(rows.begin(), rows.end());
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write file: " + path);
  for (const auto& w : rows) out << w << '\n';
}

// ---------------------------------------------------------------------------
// Dataset loader
// ---------------------------------------------------------------------------

namespace {

TokenSeq parse_sequence(const json& field, const std::string& path, int line_no,
                        const char* name) {
  TokenSeq seq;
  if (field.is_string()) {
    // Whitespace fallback: no tagger ran, so emit placeholder tags.
    std::istringstream ss(field.get<std::string>());
    std::string word;
    while (ss >> word) seq.push_back({word, "X", "O"});
  } else if (field.is_array()) {
    for (const auto& t : field) {
      if (!t.is_array() || t.size() != 3 || !t[0].is_string() || !t[1].is_string() ||
          !t[2].is_string())
        throw SchemaError(path + ":" + std::to_string(line_no) + ": field '" + name +
                          "' entries must be [text, pos, ner] string triples");
      seq.push_back({t[0].get<std::string>(), t[1].get<std::string>(), t[2].get<std::string>()});
    }
  } else {
    throw SchemaError(path + ":" + std::to_string(line_no) + ": field '" + name +
                      "' must be a token array or a string");
  }
  if (seq.empty())
    throw SchemaError(path + ":" + std::to_string(line_no) + ": field '" + name +
                      "' must be non-empty");
  return seq;
}

std::string require_string(const json& obj, const char* key, const std::string& path,
                           int line_no) {
  if (!obj.contains(key))
    throw SchemaError(path + ":" + std::to_string(line_no) + ": missing field '" + key + "'");
  if (!obj.at(key).is_string())
    throw SchemaError(path + ":" + std::to_string(line_no) + ": field '" + key +
                      "' must be a string");
  return obj.at(key).get<std::string>();
}

}  // namespace

std::vector<QuestionGroup> load_dataset(const std::string& path, bool require_labels,
                                        std::ostream* warnings) {
  auto in = open_or_throw(path);
  std::vector<QuestionGroup> groups;
  std::unordered_map<std::string, size_t> group_pos;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }

    Example ex;
    ex.group_id = require_string(obj, "group_id", path, line_no);
    ex.example_id = require_string(obj, "example_id", path, line_no);
    for (const char* key : {"passage", "question", "answer"})
      if (!obj.contains(key))
        throw SchemaError(path + ":" + std::to_string(line_no) + ": missing field '" +
                          key + "'");
    ex.passage = parse_sequence(obj.at("passage"), path, line_no, "passage");
    ex.question = parse_sequence(obj.at("question"), path, line_no, "question");
    ex.answer = parse_sequence(obj.at("answer"), path, line_no, "answer");

    if (obj.contains("label")) {
      if (!obj.at("label").is_number_integer())
        throw SchemaError(path + ":" + std::to_string(line_no) + ": field 'label' must be 0 or 1");
      int label = obj.at("label").get<int>();
      if (label != 0 && label != 1)
        throw SchemaError(path + ":" + std::to_string(line_no) + ": field 'label' must be 0 or 1, got " +
                          std::to_string(label));
      ex.label = label;
    } else if (require_labels) {
      throw SchemaError(path + ":" + std::to_string(line_no) + ": missing field 'label'");
    }

    auto it = group_pos.find(ex.group_id);
    if (it == group_pos.end()) {
      group_pos.emplace(ex.group_id, groups.size());
      groups.push_back({ex.group_id, {std::move(ex)}});
    } else {
      groups[it->second].examples.push_back(std::move(ex));
    }
  }

  // Exactly one positive candidate is expected in labeled data; tolerate
  // deviations so evaluation-only files still load.
  for (const auto& g : groups) {
    bool labeled = true;
    int positives = 0;
    for (const auto& ex : g.examples) {
      if (!ex.has_label()) labeled = false;
      positives += ex.label == 1 ? 1 : 0;
    }
    if (labeled && positives != 1 && warnings)
      *warnings << "warning: group '" << g.group_id << "' has " << positives
                << " positive labels (expected 1)\n";
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

EmbeddingTable random_embeddings(int dim, const Vocabulary& vocab, Rng& rng) {
  EmbeddingTable t;
  t.dim = dim;
  t.weights.assign(static_cast<size_t>(vocab.size()) * dim, 0.0f);
  for (int i = 1; i < vocab.size(); ++i)  // padding row stays zero
    for (int j = 0; j < dim; ++j)
      t.weights[static_cast<size_t>(i) * dim + j] = static_cast<float>(rng.normal(0.0, 0.1));
  t.coverage = 0.0;
  return t;
}

EmbeddingTable load_embeddings(const std::string& path, int dim, const Vocabulary& vocab,
                               Rng& rng) {
  // Start from the random init, then overwrite rows found in the file; the
  // draw count stays fixed so later RNG consumers see a stable stream.
  EmbeddingTable t = random_embeddings(dim, vocab, rng);
  auto in = open_or_throw(path);
  std::string line;
  int line_no = 0;
  std::vector<bool> covered(static_cast<size_t>(vocab.size()), false);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    int row = vocab.contains(word) ? vocab.lookup(word) : -1;
    std::vector<float> vec;
    vec.reserve(static_cast<size_t>(dim));
    double v;
    while (ss >> v) vec.push_back(static_cast<float>(v));
    if (static_cast<int>(vec.size()) != dim)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(dim) + " values, got " + std::to_string(vec.size()));
    if (row >= 2) {
      std::copy(vec.begin(), vec.end(), t.weights.begin() + static_cast<size_t>(row) * dim);
      covered[static_cast<size_t>(row)] = true;
    }
  }
  int real = vocab.size() - 2;
  int hit = static_cast<int>(std::count(covered.begin(), covered.end(), true));
  t.coverage = real > 0 ? static_cast<double>(hit) / real : 0.0;
  return t;
}

}  // namespace trian
