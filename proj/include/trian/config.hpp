#ifndef TRIAN_CONFIG_HPP
#define TRIAN_CONFIG_HPP

#include <string>

#include <json.hpp>

#include "trian/error.hpp"

namespace trian {

// Architecture hyperparameters. Parameter shapes are derivable from this
// struct alone, so it is the complete checkpoint header.
struct ModelConfig {
  int glove_dim = 300;
  int pos_dim = 12;
  int ner_dim = 8;
  int rel_dim = 10;
  int n_handcrafted = 2;
  int hidden = 96;
  double dropout = 0.4;
  int num_attention_layers = 1;

  // Ablation switches; disabled components are omitted from concatenations
  // (layer widths shrink), mirroring ablation retraining.
  bool use_conceptnet = true;
  bool use_pos = true;
  bool use_ner = true;
  bool use_features = true;
  bool use_pq_attention = true;
  bool use_pa_attention = true;
  bool use_qa_attention = true;

  // Embedding-table row counts, fixed by the training corpus.
  int vocab_size = 2;
  int pos_vocab_size = 2;
  int ner_vocab_size = 2;
  int rel_vocab_size = 1;

  // Width of one token's input representation (Eq. 1 concatenation).
  int input_width() const {
    return glove_dim + (use_pos ? pos_dim : 0) + (use_ner ? ner_dim : 0) +
           (use_conceptnet ? rel_dim : 0) + (use_features ? n_handcrafted : 0);
  }

  void validate() const {
    auto positive = [](int v, const char* name) {
      if (v <= 0) throw ConfigError(std::string("config: ") + name + " must be positive");
    };
    positive(glove_dim, "glove_dim");
    positive(pos_dim, "pos_dim");
    positive(ner_dim, "ner_dim");
    positive(rel_dim, "rel_dim");
    positive(n_handcrafted, "n_handcrafted");
    positive(hidden, "hidden");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ConfigError("config: dropout must be in [0, 1), got " + std::to_string(dropout));
    if (num_attention_layers != 1 && num_attention_layers != 2)
      throw ConfigError("config: num_attention_layers must be 1 or 2, got " +
                        std::to_string(num_attention_layers));
    if (vocab_size < 2 || pos_vocab_size < 2 || ner_vocab_size < 2)
      throw ConfigError("config: vocabulary sizes must include pad and unk rows");
    if (rel_vocab_size < 1)
      throw ConfigError("config: rel_vocab_size must include the no-relation row");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"glove_dim", glove_dim},
                          {"pos_dim", pos_dim},
                          {"ner_dim", ner_dim},
                          {"rel_dim", rel_dim},
                          {"n_handcrafted", n_handcrafted},
                          {"hidden", hidden},
                          {"dropout", dropout},
                          {"num_attention_layers", num_attention_layers},
                          {"use_conceptnet", use_conceptnet},
                          {"use_pos", use_pos},
                          {"use_ner", use_ner},
                          {"use_features", use_features},
                          {"use_pq_attention", use_pq_attention},
                          {"use_pa_attention", use_pa_attention},
                          {"use_qa_attention", use_qa_attention},
                          {"vocab_size", vocab_size},
                          {"pos_vocab_size", pos_vocab_size},
                          {"ner_vocab_size", ner_vocab_size},
                          {"rel_vocab_size", rel_vocab_size}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.glove_dim = j.value("glove_dim", c.glove_dim);
    c.pos_dim = j.value("pos_dim", c.pos_dim);
    c.ner_dim = j.value("ner_dim", c.ner_dim);
    c.rel_dim = j.value("rel_dim", c.rel_dim);
    c.n_handcrafted = j.value("n_handcrafted", c.n_handcrafted);
    c.hidden = j.value("hidden", c.hidden);
    c.dropout = j.value("dropout", c.dropout);
    c.num_attention_layers = j.value("num_attention_layers", c.num_attention_layers);
    c.use_conceptnet = j.value("use_conceptnet", c.use_conceptnet);
    c.use_pos = j.value("use_pos", c.use_pos);
    c.use_ner = j.value("use_ner", c.use_ner);
    c.use_features = j.value("use_features", c.use_features);
    c.use_pq_attention = j.value("use_pq_attention", c.use_pq_attention);
    c.use_pa_attention = j.value("use_pa_attention", c.use_pa_attention);
    c.use_qa_attention = j.value("use_qa_attention", c.use_qa_attention);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.pos_vocab_size = j.value("pos_vocab_size", c.pos_vocab_size);
    c.ner_vocab_size = j.value("ner_vocab_size", c.ner_vocab_size);
    c.rel_vocab_size = j.value("rel_vocab_size", c.rel_vocab_size);
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace trian

#endif  // TRIAN_CONFIG_HPP
