#include "hynt/model.hpp"

#include <cmath>

#include "hynt/checkpoint.hpp"
#include <filesystem>
#include <fstream>
#include <sstream>

namespace hynt {

namespace {

constexpr real kInitStd = real(0.02);
constexpr real kMaskNumericInit = real(0.5);  // mid-range of normalized values

// One slot of the mixed entity-column assembly.
struct EmbedSlot {
  enum class Tag { Discrete, Numeric, MaskedNumeric };
  Tag tag = Tag::Discrete;
  int id = 0;          // entity row (Discrete)
  real value = 0;      // literal (Numeric)
  int relation = -1;   // affine row for the numeric forms
};

EmbedSlot discrete_slot(int id) { return {EmbedSlot::Tag::Discrete, id, 0, -1}; }
EmbedSlot numeric_slot(real v, int relation) {
  return {EmbedSlot::Tag::Numeric, 0, v, relation};
}
EmbedSlot masked_numeric_slot(int relation) {
  return {EmbedSlot::Tag::MaskedNumeric, 0, 0, relation};
}

}  // namespace

void HyntConfig::finalize() {
  if (context_ffn == 0) context_ffn = 2 * d;
  if (prediction_ffn == 0) prediction_ffn = 2 * d;
  if (d <= 0 || context_layers <= 0 || context_heads <= 0 || context_ffn <= 0 ||
      prediction_layers <= 0 || prediction_heads <= 0 || prediction_ffn <= 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (d % context_heads != 0 || d % prediction_heads != 0) {
    throw ConfigError("embedding width " + std::to_string(d) +
                      " must be divisible by the head counts");
  }
  if (dropout_rate < real(0) || dropout_rate >= real(1)) {
    throw ConfigError("dropout rate must be in [0, 1)");
  }
  if (label_smoothing < real(0) || label_smoothing >= real(1)) {
    throw ConfigError("label smoothing must be in [0, 1)");
  }
  if (!(lambda_rel >= real(0)) || !(lambda_num >= real(0)) || !std::isfinite(lambda_rel) ||
      !std::isfinite(lambda_num)) {
    throw ConfigError("loss weights must be finite and nonnegative");
  }
}

HyntConfig HyntConfig::from_ini(IniReader& reader) {
  HyntConfig cfg;
  cfg.d = static_cast<int>(reader.get_int("model", "d", cfg.d));
  cfg.context_layers = static_cast<int>(reader.get_int("model", "context_layers", cfg.context_layers));
  cfg.context_heads = static_cast<int>(reader.get_int("model", "context_heads", cfg.context_heads));
  cfg.context_ffn = static_cast<int>(reader.get_int("model", "context_ffn", cfg.context_ffn));
  cfg.prediction_layers =
      static_cast<int>(reader.get_int("model", "prediction_layers", cfg.prediction_layers));
  cfg.prediction_heads =
      static_cast<int>(reader.get_int("model", "prediction_heads", cfg.prediction_heads));
  cfg.prediction_ffn = static_cast<int>(reader.get_int("model", "prediction_ffn", cfg.prediction_ffn));
  cfg.dropout_rate = static_cast<real>(reader.get_real("model", "dropout", cfg.dropout_rate));
  cfg.label_smoothing =
      static_cast<real>(reader.get_real("model", "label_smoothing", cfg.label_smoothing));
  cfg.lambda_rel = static_cast<real>(reader.get_real("model", "lambda_rel", cfg.lambda_rel));
  cfg.lambda_num = static_cast<real>(reader.get_real("model", "lambda_num", cfg.lambda_num));
  std::string enc = reader.get_string("model", "encoding", "projection");
  if (enc == "projection") {
    cfg.encoding = Encoding::Projection;
  } else if (enc == "hadamard") {
    cfg.encoding = Encoding::Hadamard;
  } else {
    throw ConfigError("model.encoding must be 'projection' or 'hadamard', got '" + enc + "'");
  }
  std::string head = reader.get_string("model", "prediction_head", "transformer");
  if (head == "transformer") {
    cfg.prediction_head = PredictionHead::Transformer;
  } else if (head == "linear") {
    cfg.prediction_head = PredictionHead::Linear;
  } else {
    throw ConfigError("model.prediction_head must be 'transformer' or 'linear', got '" + head + "'");
  }
  cfg.finalize();
  return cfg;
}

void HyntConfig::to_ini(IniFile& file) const {
  auto put_int = [&](const char* key, int v) { file.set("model", key, std::to_string(v)); };
  auto put_real = [&](const char* key, real v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", static_cast<double>(v));
    file.set("model", key, buf);
  };
  put_int("d", d);
  put_int("context_layers", context_layers);
  put_int("context_heads", context_heads);
  put_int("context_ffn", context_ffn);
  put_int("prediction_layers", prediction_layers);
  put_int("prediction_heads", prediction_heads);
  put_int("prediction_ffn", prediction_ffn);
  put_real("dropout", dropout_rate);
  put_real("label_smoothing", label_smoothing);
  put_real("lambda_rel", lambda_rel);
  put_real("lambda_num", lambda_num);
  file.set("model", "encoding", encoding == Encoding::Projection ? "projection" : "hadamard");
  file.set("model", "prediction_head",
           prediction_head == PredictionHead::Transformer ? "transformer" : "linear");
}

SlotKind slot_kind_of(const HyperFact& fact, const MaskSpec& mask) {
  auto check_qualifier = [&]() {
    if (mask.qualifier_index < 0 ||
        mask.qualifier_index >= static_cast<int>(fact.qualifiers.size())) {
      throw DataError("mask names qualifier " + std::to_string(mask.qualifier_index) +
                      " but the fact has " + std::to_string(fact.qualifiers.size()));
    }
  };
  switch (mask.slot) {
    case Slot::Head:
      return SlotKind::DiscreteEntity;
    case Slot::TripletRelation:
      return SlotKind::Relation;
    case Slot::Tail:
      return fact.triplet.tail.is_numeric() ? SlotKind::Numeric : SlotKind::DiscreteEntity;
    case Slot::QualifierRelation:
      check_qualifier();
      return SlotKind::Relation;
    case Slot::QualifierValue:
      check_qualifier();
      return fact.qualifiers[static_cast<std::size_t>(mask.qualifier_index)].value.is_numeric()
                 ? SlotKind::Numeric
                 : SlotKind::DiscreteEntity;
  }
  throw DataError("unreachable mask slot");
}

// ---- Construction -----------------------------------------------------------

Model::Model(HyntConfig config, int num_entities, int num_relations, Rng& init_rng)
    : config_(config), num_entities_(num_entities), num_relations_(num_relations) {
  config_.finalize();
  if (num_entities <= 0 || num_relations <= 0) {
    throw ConfigError("model needs at least one entity and one relation");
  }
  const int d = config_.d;

  auto weight = [&](int rows, int cols) {
    return Tensor::randn(rows, cols, init_rng, kInitStd, true);
  };
  auto zeros = [&](int rows, int cols) { return Tensor::zeros(rows, cols, true); };
  auto ones = [&](int rows, int cols) { return Tensor::full(rows, cols, real(1), true); };

  Parameters& p = params_;
  p.entity_table = weight(num_entities + 1, d);
  p.relation_table = weight(num_relations + 1, d);
  p.num_weight = weight(num_relations + 1, d);
  p.num_bias = weight(num_relations + 1, d);
  p.m_num = Tensor::from_data(1, 1, {kMaskNumericInit}, true);
  p.w_tri = weight(d, 3 * d);
  p.w_qual = weight(d, 2 * d);
  p.p_tri = weight(d, 1);
  p.p_qual = weight(d, 1);
  p.p_hat_tri = weight(d, 1);
  p.p_hat_h = weight(d, 1);
  p.p_hat_r = weight(d, 1);
  p.p_hat_t = weight(d, 1);
  p.p_hat_qual = weight(d, 1);
  p.p_hat_q = weight(d, 1);
  p.p_hat_v = weight(d, 1);

  auto make_stack = [&](int layers, int ffn) {
    std::vector<TransformerLayerParams> stack;
    stack.reserve(static_cast<std::size_t>(layers));
    for (int l = 0; l < layers; ++l) {
      TransformerLayerParams layer;
      layer.wq = weight(d, d);
      layer.wk = weight(d, d);
      layer.wv = weight(d, d);
      layer.wo = weight(d, d);
      layer.ln1_gain = ones(d, 1);
      layer.ln1_bias = zeros(d, 1);
      layer.w1 = weight(ffn, d);
      layer.b1 = zeros(ffn, 1);
      layer.w2 = weight(d, ffn);
      layer.b2 = zeros(d, 1);
      layer.ln2_gain = ones(d, 1);
      layer.ln2_bias = zeros(d, 1);
      stack.push_back(std::move(layer));
    }
    return stack;
  };
  p.context_stack = make_stack(config_.context_layers, config_.context_ffn);
  p.prediction_stack = make_stack(config_.prediction_layers, config_.prediction_ffn);
  p.pred_lin_tri = weight(d, 4 * d);
  p.pred_lin_qual = weight(d, 3 * d);
  p.ent_head_w = weight(num_entities, d);
  p.ent_head_b = zeros(num_entities, 1);
  p.rel_head_w = weight(num_relations, d);
  p.rel_head_b = zeros(num_relations, 1);
  p.num_head_w = weight(num_relations, d);
  p.num_head_b = zeros(num_relations, 1);
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  Parameters& p = params_;
  out.emplace_back("entity_table", p.entity_table);
  out.emplace_back("relation_table", p.relation_table);
  out.emplace_back("num_weight", p.num_weight);
  out.emplace_back("num_bias", p.num_bias);
  out.emplace_back("m_num", p.m_num);
  out.emplace_back("w_tri", p.w_tri);
  out.emplace_back("w_qual", p.w_qual);
  out.emplace_back("p_tri", p.p_tri);
  out.emplace_back("p_qual", p.p_qual);
  out.emplace_back("p_hat_tri", p.p_hat_tri);
  out.emplace_back("p_hat_h", p.p_hat_h);
  out.emplace_back("p_hat_r", p.p_hat_r);
  out.emplace_back("p_hat_t", p.p_hat_t);
  out.emplace_back("p_hat_qual", p.p_hat_qual);
  out.emplace_back("p_hat_q", p.p_hat_q);
  out.emplace_back("p_hat_v", p.p_hat_v);
  auto add_stack = [&](const char* prefix, std::vector<TransformerLayerParams>& stack) {
    for (std::size_t l = 0; l < stack.size(); ++l) {
      auto name = [&](const char* field) {
        return std::string(prefix) + "." + std::to_string(l) + "." + field;
      };
      TransformerLayerParams& layer = stack[l];
      out.emplace_back(name("wq"), layer.wq);
      out.emplace_back(name("wk"), layer.wk);
      out.emplace_back(name("wv"), layer.wv);
      out.emplace_back(name("wo"), layer.wo);
      out.emplace_back(name("ln1_gain"), layer.ln1_gain);
      out.emplace_back(name("ln1_bias"), layer.ln1_bias);
      out.emplace_back(name("w1"), layer.w1);
      out.emplace_back(name("b1"), layer.b1);
      out.emplace_back(name("w2"), layer.w2);
      out.emplace_back(name("b2"), layer.b2);
      out.emplace_back(name("ln2_gain"), layer.ln2_gain);
      out.emplace_back(name("ln2_bias"), layer.ln2_bias);
    }
  };
  add_stack("context", p.context_stack);
  add_stack("prediction", p.prediction_stack);
  out.emplace_back("pred_lin_tri", p.pred_lin_tri);
  out.emplace_back("pred_lin_qual", p.pred_lin_qual);
  out.emplace_back("ent_head_w", p.ent_head_w);
  out.emplace_back("ent_head_b", p.ent_head_b);
  out.emplace_back("rel_head_w", p.rel_head_w);
  out.emplace_back("rel_head_b", p.rel_head_b);
  out.emplace_back("num_head_w", p.num_head_w);
  out.emplace_back("num_head_b", p.num_head_b);
  return out;
}

// ---- Embedding and encoding --------------------------------------------------

namespace {

bool is_identity_perm(const std::vector<int>& perm) {
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] != static_cast<int>(i)) return false;
  }
  return true;
}

Tensor maybe_permute(Tensor pool, const std::vector<int>& perm) {
  if (is_identity_perm(perm) && pool.cols() == static_cast<int>(perm.size())) return pool;
  return select_cols(pool, perm);
}

}  // namespace

// Mixed discrete/numeric/masked-numeric columns assembled from per-kind pools,
// then permuted into slot order.
static Tensor assemble_entity_columns(const Parameters& p, const std::vector<EmbedSlot>& slots) {
  std::vector<int> disc_ids, num_rels, masked_rels;
  std::vector<real> num_values;
  std::vector<int> pool_index(slots.size());
  std::vector<int> pool_kind(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const EmbedSlot& s = slots[i];
    switch (s.tag) {
      case EmbedSlot::Tag::Discrete:
        pool_kind[i] = 0;
        pool_index[i] = static_cast<int>(disc_ids.size());
        disc_ids.push_back(s.id);
        break;
      case EmbedSlot::Tag::Numeric:
        if (s.relation < 0) throw NumericError("numeric entity without a governing relation");
        pool_kind[i] = 1;
        pool_index[i] = static_cast<int>(num_rels.size());
        num_rels.push_back(s.relation);
        num_values.push_back(s.value);
        break;
      case EmbedSlot::Tag::MaskedNumeric:
        if (s.relation < 0) throw NumericError("numeric entity without a governing relation");
        pool_kind[i] = 2;
        pool_index[i] = static_cast<int>(masked_rels.size());
        masked_rels.push_back(s.relation);
        break;
    }
  }
  std::vector<Tensor> pools;
  int pool_offset[3] = {-1, -1, -1};
  int next = 0;
  if (!disc_ids.empty()) {
    pool_offset[0] = next;
    pools.push_back(embed_rows(p.entity_table, disc_ids));
    next += static_cast<int>(disc_ids.size());
  }
  if (!num_rels.empty()) {
    pool_offset[1] = next;
    Tensor w = embed_rows(p.num_weight, num_rels);
    Tensor b = embed_rows(p.num_bias, num_rels);
    pools.push_back(add(colwise_scale(w, num_values), b));
    next += static_cast<int>(num_rels.size());
  }
  if (!masked_rels.empty()) {
    pool_offset[2] = next;
    Tensor w = embed_rows(p.num_weight, masked_rels);
    Tensor b = embed_rows(p.num_bias, masked_rels);
    pools.push_back(add(mul_scalar_tensor(w, p.m_num), b));
    next += static_cast<int>(masked_rels.size());
  }
  Tensor pool = pools.size() == 1 ? pools.front() : concat_cols(pools);
  std::vector<int> perm(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    perm[i] = pool_offset[pool_kind[i]] + pool_index[i];
  }
  return maybe_permute(std::move(pool), perm);
}

Tensor Model::embed_entity(const EntityRef& ref, int governing_relation) const {
  if (ref.is_numeric()) {
    return assemble_entity_columns(
        params_, {numeric_slot(static_cast<real>(ref.value), governing_relation)});
  }
  if (ref.entity_id < 0 || ref.entity_id > mask_entity_id()) {
    throw NumericError("entity id out of range for embedding: " + std::to_string(ref.entity_id));
  }
  return embed_rows(params_.entity_table, {ref.entity_id});
}

Tensor Model::embed_masked_numeric(int governing_relation) const {
  return assemble_entity_columns(params_, {masked_numeric_slot(governing_relation)});
}

namespace {

Tensor encode_triplet_columns(const Parameters& p, HyntConfig::Encoding mode, const Tensor& h,
                              const Tensor& r, const Tensor& t) {
  if (mode == HyntConfig::Encoding::Hadamard) return mul(mul(h, r), t);
  return matmul(p.w_tri, concat_rows({h, r, t}));
}

Tensor encode_qualifier_columns(const Parameters& p, HyntConfig::Encoding mode, const Tensor& q,
                                const Tensor& v) {
  if (mode == HyntConfig::Encoding::Hadamard) return mul(q, v);
  return matmul(p.w_qual, concat_rows({q, v}));
}

}  // namespace

Tensor Model::encode_triplet(const Tensor& h, const Tensor& r, const Tensor& t) const {
  return encode_triplet_columns(params_, config_.encoding, h, r, t);
}

Tensor Model::encode_qualifier(const Tensor& q, const Tensor& v) const {
  return encode_qualifier_columns(params_, config_.encoding, q, v);
}

// ---- Transformer stacks --------------------------------------------------------

Tensor Model::run_stack(Tensor x, const std::vector<Segment>& segments,
                        const std::vector<TransformerLayerParams>& stack, int heads, bool train,
                        Rng* dropout_rng) const {
  const int d = config_.d;
  const int head_dim = d / heads;
  const real scale = real(1) / std::sqrt(static_cast<real>(head_dim));
  const real rate = config_.dropout_rate;
  for (const TransformerLayerParams& layer : stack) {
    Tensor q = matmul(layer.wq, x);
    Tensor k = matmul(layer.wk, x);
    Tensor v = matmul(layer.wv, x);
    Tensor mixed;
    if (heads == 1) {
      mixed = segment_attention(q, k, v, segments, scale);
    } else {
      std::vector<Tensor> head_outputs;
      head_outputs.reserve(static_cast<std::size_t>(heads));
      for (int h = 0; h < heads; ++h) {
        head_outputs.push_back(segment_attention(slice_rows(q, h * head_dim, head_dim),
                                                 slice_rows(k, h * head_dim, head_dim),
                                                 slice_rows(v, h * head_dim, head_dim), segments,
                                                 scale));
      }
      mixed = concat_rows(head_outputs);
    }
    Tensor attn_out = matmul(layer.wo, mixed);
    x = layer_norm(add(x, dropout(attn_out, rate, train, dropout_rng)), layer.ln1_gain,
                   layer.ln1_bias);
    Tensor hidden = relu(add_col_broadcast(matmul(layer.w1, x), layer.b1));
    Tensor ffn_out = add_col_broadcast(matmul(layer.w2, hidden), layer.b2);
    x = layer_norm(add(x, dropout(ffn_out, rate, train, dropout_rng)), layer.ln2_gain,
                   layer.ln2_bias);
  }
  return x;
}

Tensor Model::context_forward(const Tensor& x_tri, const std::vector<Tensor>& x_quals, bool train,
                              Rng* dropout_rng) const {
  std::vector<Tensor> cols = {x_tri};
  cols.insert(cols.end(), x_quals.begin(), x_quals.end());
  Tensor x = cols.size() == 1 ? cols.front() : concat_cols(cols);
  std::vector<int> kinds(cols.size(), 1);
  kinds[0] = 0;
  Tensor positions = select_cols(concat_cols({params_.p_tri, params_.p_qual}), kinds);
  x = add(x, positions);
  return run_stack(std::move(x), {Segment{0, static_cast<int>(cols.size())}},
                   params_.context_stack, config_.context_heads, train, dropout_rng);
}

Tensor Model::prediction_forward(const Tensor& ctx, const std::vector<Tensor>& components,
                                 bool triplet_target, bool train, Rng* dropout_rng) const {
  const std::size_t expected = triplet_target ? 3 : 2;
  if (components.size() != expected) {
    throw NumericError("prediction_forward: expected " + std::to_string(expected) +
                       " component vectors, got " + std::to_string(components.size()));
  }
  std::vector<Tensor> cols = {ctx};
  cols.insert(cols.end(), components.begin(), components.end());
  Tensor x = concat_cols(cols);
  Tensor position_pool =
      triplet_target
          ? concat_cols({params_.p_hat_tri, params_.p_hat_h, params_.p_hat_r, params_.p_hat_t})
          : concat_cols({params_.p_hat_qual, params_.p_hat_q, params_.p_hat_v});
  std::vector<int> kinds(cols.size());
  for (std::size_t i = 0; i < kinds.size(); ++i) kinds[i] = static_cast<int>(i);
  x = add(x, select_cols(position_pool, kinds));
  return run_stack(std::move(x), {Segment{0, static_cast<int>(cols.size())}},
                   params_.prediction_stack, config_.prediction_heads, train, dropout_rng);
}

// ---- Heads ------------------------------------------------------------------

Tensor Model::entity_logits(const Tensor& m) const {
  return add_col_broadcast(matmul(params_.ent_head_w, m), params_.ent_head_b);
}

Tensor Model::relation_logits(const Tensor& m) const {
  return add_col_broadcast(matmul(params_.rel_head_w, m), params_.rel_head_b);
}

Tensor Model::entity_distribution(const Tensor& m) const { return softmax_cols(entity_logits(m)); }

Tensor Model::relation_distribution(const Tensor& m) const {
  return softmax_cols(relation_logits(m));
}

Tensor Model::numeric_value(const Tensor& m, const std::vector<int>& relations) const {
  for (int r : relations) {
    if (r < 0 || r >= num_relations_) {
      throw NumericError("numeric head: relation id out of range: " + std::to_string(r));
    }
  }
  Tensor w = row_select(params_.num_head_w, relations);  // B x d
  Tensor b = transpose(row_select(params_.num_head_b, relations));  // 1 x B
  return add(rows_dot_cols(w, m), b);
}

// ---- Whole-model batched forward ------------------------------------------------

ForwardOutputs Model::forward_batch(const std::vector<const HyperFact*>& facts,
                                    const std::vector<MaskSpec>& masks, bool train,
                                    Rng* dropout_rng) const {
  const int batch = static_cast<int>(facts.size());
  if (batch == 0 || masks.size() != facts.size()) {
    throw NumericError("forward_batch: facts and masks must be nonempty and aligned");
  }

  // Slot descriptors after mask substitution.
  std::vector<SlotKind> kinds(static_cast<std::size_t>(batch));
  std::vector<int> head_ids(static_cast<std::size_t>(batch));
  std::vector<int> rel_ids(static_cast<std::size_t>(batch));
  std::vector<EmbedSlot> tail_slots(static_cast<std::size_t>(batch));
  std::vector<int> qual_rel_ids;
  std::vector<EmbedSlot> qual_val_slots;
  std::vector<Segment> segments(static_cast<std::size_t>(batch));
  std::vector<int> tri_position(static_cast<std::size_t>(batch));
  std::vector<int> qual_base(static_cast<std::size_t>(batch));  // flat index of qualifier 0

  int next_col = 0;
  for (int i = 0; i < batch; ++i) {
    const HyperFact& fact = *facts[static_cast<std::size_t>(i)];
    const MaskSpec& mask = masks[static_cast<std::size_t>(i)];
    kinds[static_cast<std::size_t>(i)] = slot_kind_of(fact, mask);

    const bool head_masked = mask.slot == Slot::Head;
    const bool rel_masked = mask.slot == Slot::TripletRelation;
    const bool tail_masked = mask.slot == Slot::Tail;
    head_ids[static_cast<std::size_t>(i)] =
        head_masked ? mask_entity_id() : fact.triplet.head.entity_id;
    const int rel = rel_masked ? mask_relation_id() : fact.triplet.relation_id;
    rel_ids[static_cast<std::size_t>(i)] = rel;
    const EntityRef& tail = fact.triplet.tail;
    if (tail_masked) {
      tail_slots[static_cast<std::size_t>(i)] =
          tail.is_numeric() ? masked_numeric_slot(rel) : discrete_slot(mask_entity_id());
    } else if (tail.is_numeric()) {
      tail_slots[static_cast<std::size_t>(i)] = numeric_slot(static_cast<real>(tail.value), rel);
    } else {
      tail_slots[static_cast<std::size_t>(i)] = discrete_slot(tail.entity_id);
    }

    qual_base[static_cast<std::size_t>(i)] = static_cast<int>(qual_rel_ids.size());
    for (int j = 0; j < static_cast<int>(fact.qualifiers.size()); ++j) {
      const Qualifier& q = fact.qualifiers[static_cast<std::size_t>(j)];
      const bool q_rel_masked = mask.slot == Slot::QualifierRelation && mask.qualifier_index == j;
      const bool q_val_masked = mask.slot == Slot::QualifierValue && mask.qualifier_index == j;
      const int q_rel = q_rel_masked ? mask_relation_id() : q.relation_id;
      qual_rel_ids.push_back(q_rel);
      if (q_val_masked) {
        qual_val_slots.push_back(q.value.is_numeric() ? masked_numeric_slot(q_rel)
                                                      : discrete_slot(mask_entity_id()));
      } else if (q.value.is_numeric()) {
        qual_val_slots.push_back(numeric_slot(static_cast<real>(q.value.value), q_rel));
      } else {
        qual_val_slots.push_back(discrete_slot(q.value.entity_id));
      }
    }

    const int width = 1 + static_cast<int>(fact.qualifiers.size());
    segments[static_cast<std::size_t>(i)] = Segment{next_col, width};
    tri_position[static_cast<std::size_t>(i)] = next_col;
    next_col += width;
  }
  const int total_quals = static_cast<int>(qual_rel_ids.size());

  // Component embedding pools (batch order).
  std::vector<EmbedSlot> head_slots(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) {
    head_slots[static_cast<std::size_t>(i)] = discrete_slot(head_ids[static_cast<std::size_t>(i)]);
  }
  Tensor h_cols = assemble_entity_columns(params_, head_slots);
  Tensor r_cols = embed_rows(params_.relation_table, rel_ids);
  Tensor t_cols = assemble_entity_columns(params_, tail_slots);
  Tensor tri_cols = encode_triplet_columns(params_, config_.encoding, h_cols, r_cols, t_cols);

  Tensor q_cols, v_cols, qual_cols;
  if (total_quals > 0) {
    q_cols = embed_rows(params_.relation_table, qual_rel_ids);
    v_cols = assemble_entity_columns(params_, qual_val_slots);
    qual_cols = encode_qualifier_columns(params_, config_.encoding, q_cols, v_cols);
  }

  // Context input: instance-major interleave of triplet and qualifier columns.
  Tensor x0;
  std::vector<int> position_kind(static_cast<std::size_t>(next_col), 1);
  if (total_quals == 0) {
    x0 = tri_cols;
    for (int i = 0; i < batch; ++i) position_kind[static_cast<std::size_t>(i)] = 0;
  } else {
    std::vector<int> perm(static_cast<std::size_t>(next_col));
    for (int i = 0; i < batch; ++i) {
      const Segment seg = segments[static_cast<std::size_t>(i)];
      perm[static_cast<std::size_t>(seg.start)] = i;
      position_kind[static_cast<std::size_t>(seg.start)] = 0;
      for (int j = 1; j < seg.length; ++j) {
        perm[static_cast<std::size_t>(seg.start + j)] =
            batch + qual_base[static_cast<std::size_t>(i)] + (j - 1);
      }
    }
    x0 = maybe_permute(concat_cols({tri_cols, qual_cols}), perm);
  }
  x0 = add(x0, select_cols(concat_cols({params_.p_tri, params_.p_qual}), position_kind));
  Tensor ctx =
      run_stack(std::move(x0), segments, params_.context_stack, config_.context_heads, train,
                dropout_rng);

  // Prediction groups: triplet-slot targets (4 columns) and qualifier-slot
  // targets (3 columns), each batched with per-instance segments.
  std::vector<int> tri_group, qual_group;
  for (int i = 0; i < batch; ++i) {
    const Slot slot = masks[static_cast<std::size_t>(i)].slot;
    if (slot == Slot::Head || slot == Slot::TripletRelation || slot == Slot::Tail) {
      tri_group.push_back(i);
    } else {
      qual_group.push_back(i);
    }
  }

  Tensor tri_masked_cols;  // d x |tri_group|
  if (!tri_group.empty()) {
    const int n = static_cast<int>(tri_group.size());
    std::vector<int> ctx_sel(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) {
      ctx_sel[static_cast<std::size_t>(a)] = tri_position[static_cast<std::size_t>(tri_group[a])];
    }
    std::vector<int> batch_sel(tri_group.begin(), tri_group.end());
    Tensor z = select_cols(ctx, ctx_sel);
    Tensor hs = select_cols(h_cols, batch_sel);
    Tensor rs = select_cols(r_cols, batch_sel);
    Tensor ts = select_cols(t_cols, batch_sel);
    if (config_.prediction_head == HyntConfig::PredictionHead::Linear) {
      tri_masked_cols = matmul(params_.pred_lin_tri, concat_rows({z, hs, rs, ts}));
    } else {
      std::vector<int> perm(static_cast<std::size_t>(4 * n));
      std::vector<int> pos_kind(static_cast<std::size_t>(4 * n));
      std::vector<Segment> segs(static_cast<std::size_t>(n));
      for (int a = 0; a < n; ++a) {
        for (int c = 0; c < 4; ++c) {
          perm[static_cast<std::size_t>(4 * a + c)] = c * n + a;
          pos_kind[static_cast<std::size_t>(4 * a + c)] = c;
        }
        segs[static_cast<std::size_t>(a)] = Segment{4 * a, 4};
      }
      Tensor z0 = select_cols(concat_cols({z, hs, rs, ts}), perm);
      Tensor positions = select_cols(
          concat_cols({params_.p_hat_tri, params_.p_hat_h, params_.p_hat_r, params_.p_hat_t}),
          pos_kind);
      Tensor zout = run_stack(add(z0, positions), segs, params_.prediction_stack,
                              config_.prediction_heads, train, dropout_rng);
      std::vector<int> masked_pos(static_cast<std::size_t>(n));
      for (int a = 0; a < n; ++a) {
        const Slot slot = masks[static_cast<std::size_t>(tri_group[a])].slot;
        const int offset = slot == Slot::Head ? 1 : slot == Slot::TripletRelation ? 2 : 3;
        masked_pos[static_cast<std::size_t>(a)] = 4 * a + offset;
      }
      tri_masked_cols = select_cols(zout, masked_pos);
    }
  }

  Tensor qual_masked_cols;  // d x |qual_group|
  if (!qual_group.empty()) {
    const int n = static_cast<int>(qual_group.size());
    std::vector<int> ctx_sel(static_cast<std::size_t>(n)), flat_sel(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) {
      const int i = qual_group[static_cast<std::size_t>(a)];
      const int j = masks[static_cast<std::size_t>(i)].qualifier_index;
      ctx_sel[static_cast<std::size_t>(a)] = tri_position[static_cast<std::size_t>(i)] + 1 + j;
      flat_sel[static_cast<std::size_t>(a)] = qual_base[static_cast<std::size_t>(i)] + j;
    }
    Tensor z = select_cols(ctx, ctx_sel);
    Tensor qs = select_cols(q_cols, flat_sel);
    Tensor vs = select_cols(v_cols, flat_sel);
    if (config_.prediction_head == HyntConfig::PredictionHead::Linear) {
      qual_masked_cols = matmul(params_.pred_lin_qual, concat_rows({z, qs, vs}));
    } else {
      std::vector<int> perm(static_cast<std::size_t>(3 * n));
      std::vector<int> pos_kind(static_cast<std::size_t>(3 * n));
      std::vector<Segment> segs(static_cast<std::size_t>(n));
      for (int a = 0; a < n; ++a) {
        for (int c = 0; c < 3; ++c) {
          perm[static_cast<std::size_t>(3 * a + c)] = c * n + a;
          pos_kind[static_cast<std::size_t>(3 * a + c)] = c;
        }
        segs[static_cast<std::size_t>(a)] = Segment{3 * a, 3};
      }
      Tensor z0 = select_cols(concat_cols({z, qs, vs}), perm);
      Tensor positions = select_cols(
          concat_cols({params_.p_hat_qual, params_.p_hat_q, params_.p_hat_v}), pos_kind);
      Tensor zout = run_stack(add(z0, positions), segs, params_.prediction_stack,
                              config_.prediction_heads, train, dropout_rng);
      std::vector<int> masked_pos(static_cast<std::size_t>(n));
      for (int a = 0; a < n; ++a) {
        const Slot slot = masks[static_cast<std::size_t>(qual_group[a])].slot;
        masked_pos[static_cast<std::size_t>(a)] = 3 * a + (slot == Slot::QualifierRelation ? 1 : 2);
      }
      qual_masked_cols = select_cols(zout, masked_pos);
    }
  }

  // Route each instance's masked column to its head, grouped by slot kind.
  // Column c of the combined pool is tri_group[c] or qual_group[c - nA].
  const int n_tri = static_cast<int>(tri_group.size());
  Tensor combined = !tri_group.empty() && !qual_group.empty()
                        ? concat_cols({tri_masked_cols, qual_masked_cols})
                        : (!tri_group.empty() ? tri_masked_cols : qual_masked_cols);
  std::vector<int> pool_col_of_batch(static_cast<std::size_t>(batch), -1);
  for (int a = 0; a < n_tri; ++a) pool_col_of_batch[static_cast<std::size_t>(tri_group[a])] = a;
  for (std::size_t a = 0; a < qual_group.size(); ++a) {
    pool_col_of_batch[static_cast<std::size_t>(qual_group[a])] = n_tri + static_cast<int>(a);
  }

  ForwardOutputs out;
  std::vector<int> ent_sel, rel_sel, num_sel;
  for (int i = 0; i < batch; ++i) {
    switch (kinds[static_cast<std::size_t>(i)]) {
      case SlotKind::DiscreteEntity:
        ent_sel.push_back(pool_col_of_batch[static_cast<std::size_t>(i)]);
        out.entity_batch_index.push_back(i);
        break;
      case SlotKind::Relation:
        rel_sel.push_back(pool_col_of_batch[static_cast<std::size_t>(i)]);
        out.relation_batch_index.push_back(i);
        break;
      case SlotKind::Numeric: {
        num_sel.push_back(pool_col_of_batch[static_cast<std::size_t>(i)]);
        out.numeric_batch_index.push_back(i);
        const HyperFact& fact = *facts[static_cast<std::size_t>(i)];
        const MaskSpec& mask = masks[static_cast<std::size_t>(i)];
        const int governing =
            mask.slot == Slot::Tail
                ? fact.triplet.relation_id
                : fact.qualifiers[static_cast<std::size_t>(mask.qualifier_index)].relation_id;
        out.numeric_relation.push_back(governing);
        break;
      }
    }
  }
  if (!ent_sel.empty()) out.entity_logits = entity_logits(select_cols(combined, ent_sel));
  if (!rel_sel.empty()) out.relation_logits = relation_logits(select_cols(combined, rel_sel));
  if (!num_sel.empty()) {
    out.numeric_pred = numeric_value(select_cols(combined, num_sel), out.numeric_relation);
  }
  return out;
}

SlotPrediction Model::predict_slot(const HyperFact& fact, const MaskSpec& mask) const {
  NoGradGuard guard;
  ForwardOutputs fw = forward_batch({&fact}, {mask}, /*train=*/false, nullptr);
  SlotPrediction result;
  if (!fw.entity_batch_index.empty()) {
    result.kind = SlotKind::DiscreteEntity;
    result.entity_probs = softmax_cols(fw.entity_logits);
  } else if (!fw.relation_batch_index.empty()) {
    result.kind = SlotKind::Relation;
    result.relation_probs = softmax_cols(fw.relation_logits);
  } else {
    result.kind = SlotKind::Numeric;
    result.numeric_value = fw.numeric_pred.values()[0];
  }
  return result;
}

// ---- Checkpoint assembly -----------------------------------------------------

void save_model_checkpoint(const std::string& dir, Model& model, const Vocabulary& vocab,
                           const NormalizationTable& norm) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_tensor_file((fs::path(dir) / "tensors.bin").string(), model.named_parameters());

  IniFile cfg;
  model.config().to_ini(cfg);
  cfg.set("model", "num_entities", std::to_string(model.num_entities()));
  cfg.set("model", "num_relations", std::to_string(model.num_relations()));
  cfg.write_file((fs::path(dir) / "config.ini").string());

  std::ofstream vocab_out((fs::path(dir) / "vocab.txt").string(), std::ios::binary);
  if (!vocab_out) throw DataError("checkpoint: cannot write vocab.txt in " + dir);
  vocab.save(vocab_out);

  std::ofstream norm_out((fs::path(dir) / "norm.txt").string(), std::ios::binary);
  if (!norm_out) throw DataError("checkpoint: cannot write norm.txt in " + dir);
  norm.save(norm_out, vocab);

  std::ofstream manifest((fs::path(dir) / "manifest.txt").string(), std::ios::binary);
  if (!manifest) throw DataError("checkpoint: cannot write manifest.txt in " + dir);
  manifest << "format hynt-checkpoint-1\n"
           << "files tensors.bin config.ini vocab.txt norm.txt\n"
           << "tensors " << model.named_parameters().size() << "\n";
}

LoadedModel load_model_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  LoadedModel loaded;

  if (!fs::exists(fs::path(dir) / "manifest.txt"))
    throw DataError("no checkpoint at '" + dir + "'");
  IniFile cfg = IniFile::parse_file((fs::path(dir) / "config.ini").string());
  IniReader reader(cfg);
  loaded.config = HyntConfig::from_ini(reader);
  const int num_entities = static_cast<int>(reader.get_int("model", "num_entities", -1));
  const int num_relations = static_cast<int>(reader.get_int("model", "num_relations", -1));
  reader.finish();
  if (num_entities <= 0 || num_relations <= 0) {
    throw DataError("checkpoint config is missing entity/relation counts: " + dir);
  }

  std::ifstream vocab_in((fs::path(dir) / "vocab.txt").string());
  if (!vocab_in) throw DataError("checkpoint: cannot open vocab.txt in " + dir);
  loaded.vocabulary = Vocabulary::load(vocab_in);
  if (loaded.vocabulary.num_entities() != num_entities ||
      loaded.vocabulary.num_relations() != num_relations) {
    throw DataError("checkpoint vocab does not match the recorded model shape: " + dir);
  }

  std::ifstream norm_in((fs::path(dir) / "norm.txt").string());
  if (!norm_in) throw DataError("checkpoint: cannot open norm.txt in " + dir);
  loaded.normalization = NormalizationTable::load(norm_in, loaded.vocabulary);

  Rng throwaway(0);
  loaded.model = std::make_unique<Model>(loaded.config, num_entities, num_relations, throwaway);
  NamedTensorList stored = load_tensor_file((fs::path(dir) / "tensors.bin").string());
  auto live = loaded.model->named_parameters();
  if (stored.size() != live.size()) {
    throw DataError("checkpoint tensor count does not match the model: " + dir);
  }
  for (std::size_t i = 0; i < live.size(); ++i) {
    if (stored[i].first != live[i].first) {
      throw DataError("checkpoint tensor order mismatch at '" + stored[i].first + "': " + dir);
    }
    if (stored[i].second.rows() != live[i].second.rows() ||
        stored[i].second.cols() != live[i].second.cols()) {
      throw DataError("checkpoint tensor shape mismatch at '" + stored[i].first + "': " + dir);
    }
    live[i].second.raw_values() = stored[i].second.values();
  }
  return loaded;
}

}  // namespace hynt
