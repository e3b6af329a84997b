#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hynt/config.hpp"
#include "hynt/ingest.hpp"
#include "hynt/kg.hpp"
#include "hynt/tensor.hpp"

namespace hynt {

struct HyntConfig {
  int d = 256;               // embedding width
  int context_layers = 2;    // blocks in the context stack
  int context_heads = 4;
  int context_ffn = 0;       // 0 = 2 * d
  int prediction_layers = 2;
  int prediction_heads = 4;
  int prediction_ffn = 0;    // 0 = 2 * d
  real dropout_rate = real(0.1);
  real label_smoothing = real(0.1);
  real lambda_rel = real(1);   // weight on the relation loss
  real lambda_num = real(1);   // weight on the numeric loss

  enum class Encoding { Projection, Hadamard };
  enum class PredictionHead { Transformer, Linear };
  Encoding encoding = Encoding::Projection;
  PredictionHead prediction_head = PredictionHead::Transformer;

  // Resolves defaulted FFN widths, then checks all invariants.
  void finalize();

  static HyntConfig from_ini(IniReader& reader);
  void to_ini(IniFile& file) const;
};

// Which slot of a fact is masked for prediction.
enum class Slot { Head, TripletRelation, Tail, QualifierRelation, QualifierValue };

struct MaskSpec {
  Slot slot = Slot::Head;
  int qualifier_index = -1;  // used by the qualifier slots
};

enum class SlotKind { DiscreteEntity, Relation, Numeric };

// Derives the prediction-head routing for a masked slot; validates that the
// slot exists on the fact.
SlotKind slot_kind_of(const HyperFact& fact, const MaskSpec& mask);

struct TransformerLayerParams {
  Tensor wq, wk, wv, wo;      // d x d
  Tensor ln1_gain, ln1_bias;  // d x 1
  Tensor w1, b1;              // ffn x d, ffn x 1
  Tensor w2, b2;              // d x ffn, d x 1
  Tensor ln2_gain, ln2_bias;  // d x 1
};

// Every learnable tensor, shaped as documented next to each field. The last
// entity-table row is the entity mask; the last relation-table row is the
// relation mask, which also owns numeric affine rows so a literal stays
// embeddable when its relation is masked.
struct Parameters {
  Tensor entity_table;   // (num_entities + 1) x d
  Tensor relation_table; // (num_relations + 1) x d
  Tensor num_weight;     // (num_relations + 1) x d, affine slope per relation
  Tensor num_bias;       // (num_relations + 1) x d, affine offset per relation
  Tensor m_num;          // 1 x 1, mask stand-in for a numeric value
  Tensor w_tri;          // d x 3d
  Tensor w_qual;         // d x 2d
  Tensor p_tri, p_qual;  // context positions, d x 1
  // Prediction positions, d x 1 each.
  Tensor p_hat_tri, p_hat_h, p_hat_r, p_hat_t;
  Tensor p_hat_qual, p_hat_q, p_hat_v;
  std::vector<TransformerLayerParams> context_stack;
  std::vector<TransformerLayerParams> prediction_stack;  // transformer head mode
  Tensor pred_lin_tri;   // d x 4d, linear head mode
  Tensor pred_lin_qual;  // d x 3d, linear head mode
  Tensor ent_head_w;     // num_entities x d (not tied to entity_table)
  Tensor ent_head_b;     // num_entities x 1
  Tensor rel_head_w;     // num_relations x d
  Tensor rel_head_b;     // num_relations x 1
  Tensor num_head_w;     // num_relations x d, readout slope per relation
  Tensor num_head_b;     // num_relations x 1
};

// Grouped head outputs of one batched forward; index lists map group columns
// back to positions in the submitted batch.
struct ForwardOutputs {
  Tensor entity_logits;    // num_entities x B_ent
  std::vector<int> entity_batch_index;
  Tensor relation_logits;  // num_relations x B_rel
  std::vector<int> relation_batch_index;
  Tensor numeric_pred;     // 1 x B_num, normalized value space
  std::vector<int> numeric_batch_index;
  std::vector<int> numeric_relation;  // governing relation per numeric column
};

// Readout for one fact/mask pair in eval mode.
struct SlotPrediction {
  SlotKind kind = SlotKind::DiscreteEntity;
  Tensor entity_probs;    // num_entities x 1 when kind == DiscreteEntity
  Tensor relation_probs;  // num_relations x 1 when kind == Relation
  real numeric_value = real(0);  // normalized space when kind == Numeric
};

class Model {
 public:
  Model(HyntConfig config, int num_entities, int num_relations, Rng& init_rng);

  const HyntConfig& config() const { return config_; }
  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }
  int num_entities() const { return num_entities_; }
  int num_relations() const { return num_relations_; }
  int mask_entity_id() const { return num_entities_; }
  int mask_relation_id() const { return num_relations_; }

  // Stable name -> tensor listing; drives initialization order, the
  // optimizer's parameter list, and checkpoint layout.
  std::vector<std::pair<std::string, Tensor>> named_parameters();

  // ---- Granular pieces (single-column convention: d x 1 tensors) ----

  // Discrete(id) -> table row (mask id allowed); Numeric(v) -> v * w_r + b_r
  // under the governing relation (-1 = absent, an error for numeric refs).
  Tensor embed_entity(const EntityRef& ref, int governing_relation) const;
  // Mask stand-in for a numeric value: m_num * w_r + b_r.
  Tensor embed_masked_numeric(int governing_relation) const;

  Tensor encode_triplet(const Tensor& h, const Tensor& r, const Tensor& t) const;
  Tensor encode_qualifier(const Tensor& q, const Tensor& v) const;

  // Runs the context stack over [x_tri | x_qual...] with shared qualifier
  // positions; returns all 1 + k output columns.
  Tensor context_forward(const Tensor& x_tri, const std::vector<Tensor>& x_quals, bool train,
                         Rng* dropout_rng) const;

  // Runs the prediction stack over [z | components...]; triplet targets take
  // 3 component vectors (h, r, t), qualifier targets take 2 (q, v).
  Tensor prediction_forward(const Tensor& ctx, const std::vector<Tensor>& components,
                            bool triplet_target, bool train, Rng* dropout_rng) const;

  Tensor entity_logits(const Tensor& m) const;        // num_entities x cols(m)
  Tensor relation_logits(const Tensor& m) const;      // num_relations x cols(m)
  Tensor entity_distribution(const Tensor& m) const;  // softmax of the above
  Tensor relation_distribution(const Tensor& m) const;
  // w_r . m + b_r per column, under the given governing relations.
  Tensor numeric_value(const Tensor& m, const std::vector<int>& relations) const;

  // ---- Whole-model paths ----

  // Batched forward over facts with one masked slot each. Facts sharing a
  // batch never attend to each other (attention runs per instance).
  ForwardOutputs forward_batch(const std::vector<const HyperFact*>& facts,
                               const std::vector<MaskSpec>& masks, bool train,
                               Rng* dropout_rng) const;

  // Convenience single-fact eval readout (probabilities / normalized value).
  SlotPrediction predict_slot(const HyperFact& fact, const MaskSpec& mask) const;

 private:
  HyntConfig config_;
  int num_entities_ = 0;
  int num_relations_ = 0;
  Parameters params_;

  Tensor run_stack(Tensor x, const std::vector<Segment>& segments,
                   const std::vector<TransformerLayerParams>& stack, int heads, bool train,
                   Rng* dropout_rng) const;
};

// ---- Checkpoint assembly ----

// Directory layout: tensors.bin, config.ini, vocab.txt, norm.txt,
// manifest.txt. Sufficient to reload and predict with no other inputs.
void save_model_checkpoint(const std::string& dir, Model& model, const Vocabulary& vocab,
                           const NormalizationTable& norm);

struct LoadedModel {
  HyntConfig config;
  Vocabulary vocabulary;
  NormalizationTable normalization;
  std::unique_ptr<Model> model;
};

LoadedModel load_model_checkpoint(const std::string& dir);

}  // namespace hynt
