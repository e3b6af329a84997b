#include "hynt/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace hynt {

TrainInstance instance_for_slot(const HyperFact& fact, int fact_index, const MaskSpec& mask) {
  TrainInstance inst;
  inst.fact = &fact;
  inst.fact_index = fact_index;
  inst.mask = mask;
  inst.kind = slot_kind_of(fact, mask);
  switch (mask.slot) {
    case Slot::Head:
      inst.target_id = fact.triplet.head.entity_id;
      break;
    case Slot::TripletRelation:
      inst.target_id = fact.triplet.relation_id;
      break;
    case Slot::Tail:
      if (fact.triplet.tail.is_numeric()) {
        inst.target_value = static_cast<real>(fact.triplet.tail.value);
      } else {
        inst.target_id = fact.triplet.tail.entity_id;
      }
      break;
    case Slot::QualifierRelation:
      inst.target_id = fact.qualifiers[static_cast<std::size_t>(mask.qualifier_index)].relation_id;
      break;
    case Slot::QualifierValue: {
      const EntityRef& v = fact.qualifiers[static_cast<std::size_t>(mask.qualifier_index)].value;
      if (v.is_numeric()) {
        inst.target_value = static_cast<real>(v.value);
      } else {
        inst.target_id = v.entity_id;
      }
      break;
    }
  }
  return inst;
}

namespace {

// Surviving maskable slots of one fact under the filter, in slot order.
std::vector<MaskSpec> surviving_slots(const HyperFact& fact, const InstanceFilter& filter) {
  std::vector<MaskSpec> slots;
  slots.push_back({Slot::Head, -1});
  if (filter.mask_relations) slots.push_back({Slot::TripletRelation, -1});
  if (fact.triplet.tail.is_numeric()) {
    if (filter.mask_numeric_values) slots.push_back({Slot::Tail, -1});
  } else {
    slots.push_back({Slot::Tail, -1});
  }
  for (int j = 0; j < static_cast<int>(fact.qualifiers.size()); ++j) {
    if (filter.mask_relations) slots.push_back({Slot::QualifierRelation, j});
    const bool numeric = fact.qualifiers[static_cast<std::size_t>(j)].value.is_numeric();
    if (numeric ? filter.mask_numeric_values : filter.mask_qualifier_entities) {
      slots.push_back({Slot::QualifierValue, j});
    }
  }
  return slots;
}

}  // namespace

std::vector<TrainInstance> enumerate_instances(const std::vector<HyperFact>& facts,
                                               const InstanceFilter& filter) {
  std::vector<TrainInstance> instances;
  for (int i = 0; i < static_cast<int>(facts.size()); ++i) {
    const HyperFact& fact = facts[static_cast<std::size_t>(i)];
    for (const MaskSpec& mask : surviving_slots(fact, filter)) {
      instances.push_back(instance_for_slot(fact, i, mask));
    }
  }
  return instances;
}

std::vector<TrainInstance> sample_instances(const std::vector<HyperFact>& facts,
                                            const InstanceFilter& filter, Rng& rng) {
  std::vector<TrainInstance> instances;
  instances.reserve(facts.size());
  for (int i = 0; i < static_cast<int>(facts.size()); ++i) {
    const HyperFact& fact = facts[static_cast<std::size_t>(i)];
    std::vector<MaskSpec> slots = surviving_slots(fact, filter);
    const std::size_t pick = static_cast<std::size_t>(rng.bounded(slots.size()));
    instances.push_back(instance_for_slot(fact, i, slots[pick]));
  }
  return instances;
}

LossBreakdown joint_loss(const HyntConfig& config, const ForwardOutputs& outputs,
                         const std::vector<TrainInstance>& batch) {
  LossBreakdown out;
  Tensor total;
  auto accumulate = [&](Tensor term, real weight) {
    Tensor weighted = weight == real(1) ? term : scale(term, weight);
    total = total.defined() ? add(total, weighted) : weighted;
  };

  if (!outputs.entity_batch_index.empty()) {
    std::vector<int> targets;
    targets.reserve(outputs.entity_batch_index.size());
    for (int i : outputs.entity_batch_index) {
      targets.push_back(batch[static_cast<std::size_t>(i)].target_id);
    }
    Tensor ce = cross_entropy_smoothed(outputs.entity_logits, targets, config.label_smoothing);
    out.entity = static_cast<double>(ce.scalar());
    out.n_entity = static_cast<std::int64_t>(targets.size());
    accumulate(ce, real(1));
  }
  if (!outputs.relation_batch_index.empty()) {
    std::vector<int> targets;
    targets.reserve(outputs.relation_batch_index.size());
    for (int i : outputs.relation_batch_index) {
      targets.push_back(batch[static_cast<std::size_t>(i)].target_id);
    }
    Tensor ce = cross_entropy_smoothed(outputs.relation_logits, targets, config.label_smoothing);
    out.relation = static_cast<double>(ce.scalar());
    out.n_relation = static_cast<std::int64_t>(targets.size());
    if (config.lambda_rel > real(0)) accumulate(ce, config.lambda_rel);
  }
  if (!outputs.numeric_batch_index.empty()) {
    std::vector<real> targets;
    targets.reserve(outputs.numeric_batch_index.size());
    for (int i : outputs.numeric_batch_index) {
      targets.push_back(batch[static_cast<std::size_t>(i)].target_value);
    }
    Tensor se = mse(outputs.numeric_pred, targets);
    out.numeric = static_cast<double>(se.scalar());
    out.n_numeric = static_cast<std::int64_t>(targets.size());
    if (config.lambda_num > real(0)) accumulate(se, config.lambda_num);
  }
  // total stays undefined when every present category carries zero weight
  // (e.g. an all-numeric batch under lambda_num = 0); such a batch holds no
  // training signal and the loop skips its update step.
  out.total = total;
  return out;
}

namespace {

std::string csv_value(double v, std::int64_t count) {
  if (count == 0) return "";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void write_log_row(std::ostream& out, const ValidationPoint& p) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", p.lr);
  out << p.epoch << "," << buf;
  std::snprintf(buf, sizeof(buf), "%.9g", p.loss_total);
  out << "," << buf;
  std::snprintf(buf, sizeof(buf), "%.9g", p.loss_entity);
  out << "," << buf;
  std::snprintf(buf, sizeof(buf), "%.9g", p.loss_relation);
  out << "," << buf;
  std::snprintf(buf, sizeof(buf), "%.9g", p.loss_numeric);
  out << "," << buf;
  out << "," << csv_value(p.val_link_mrr, p.val_link_count)
      << "," << csv_value(p.val_rel_mrr, p.val_rel_count)
      << "," << csv_value(p.val_rmse, p.val_num_count) << "\n";
}

constexpr const char* kLogHeader =
    "epoch,lr,loss_total,loss_entity,loss_relation,loss_numeric,"
    "val_link_mrr,val_rel_mrr,val_rmse\n";

}  // namespace

void write_train_log_csv(std::ostream& out, const std::vector<ValidationPoint>& log) {
  out << kLogHeader;
  for (const ValidationPoint& p : log) write_log_row(out, p);
}

TrainResult train(Model& model, const Dataset& dataset, const NormalizationTable& norm,
                  const TrainOptions& options) {
  if (options.epochs <= 0) throw ConfigError("training needs a positive epoch count");
  if (options.batch_size <= 0) throw ConfigError("training needs a positive batch size");
  if (options.validate_every <= 0) throw ConfigError("validate_every must be positive");
  if (dataset.train.empty()) throw DataError("training split is empty");

  namespace fs = std::filesystem;
  TrainResult result;
  std::ofstream log_file;
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    result.best_dir = (fs::path(options.out_dir) / "best").string();
    result.last_dir = (fs::path(options.out_dir) / "last").string();
    result.log_path = (fs::path(options.out_dir) / "train_log.csv").string();
    log_file.open(result.log_path, std::ios::binary | std::ios::trunc);
    if (!log_file) throw DataError("cannot write training log: " + result.log_path);
    log_file << kLogHeader;
  }

  const std::vector<HyperFact>& val_split =
      dataset.valid.empty() ? dataset.train : dataset.valid;
  FilterIndex filters;
  if (options.val_mode == RankMode::Filtered) filters = FilterIndex::build(dataset);
  const FilterIndex* filter_ptr = options.val_mode == RankMode::Filtered ? &filters : nullptr;

  std::vector<Tensor> param_tensors;
  for (auto& [name, tensor] : model.named_parameters()) param_tensors.push_back(tensor);
  Adam adam(param_tensors, options.adam);

  Rng root(options.seed);
  std::vector<TrainInstance> instances;
  if (options.strategy == MaskStrategy::Enumerate) {
    instances = enumerate_instances(dataset.train, options.filter);
    if (instances.empty()) throw DataError("instance filter removed every training slot");
  }

  const HyntConfig& config = model.config();
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    if (options.strategy == MaskStrategy::Sample) {
      Rng sampler = root.fork(static_cast<std::uint64_t>(4 * epoch));
      instances = sample_instances(dataset.train, options.filter, sampler);
    }
    Rng shuffler = root.fork(static_cast<std::uint64_t>(4 * epoch + 1));
    Rng dropper = root.fork(static_cast<std::uint64_t>(4 * epoch + 2));
    std::vector<int> order(instances.size());
    std::iota(order.begin(), order.end(), 0);
    shuffler.shuffle(order);

    const real lr = options.schedule.lr_at(static_cast<double>(epoch));
    double ent_sum = 0, rel_sum = 0, num_sum = 0;
    std::int64_t ent_n = 0, rel_n = 0, num_n = 0;

    const int n = static_cast<int>(instances.size());
    for (int start = 0, batch_no = 0; start < n; start += options.batch_size, ++batch_no) {
      const int len = std::min(options.batch_size, n - start);
      std::vector<const HyperFact*> facts(static_cast<std::size_t>(len));
      std::vector<MaskSpec> masks(static_cast<std::size_t>(len));
      std::vector<TrainInstance> batch(static_cast<std::size_t>(len));
      for (int b = 0; b < len; ++b) {
        const TrainInstance& inst =
            instances[static_cast<std::size_t>(order[static_cast<std::size_t>(start + b)])];
        batch[static_cast<std::size_t>(b)] = inst;
        facts[static_cast<std::size_t>(b)] = inst.fact;
        masks[static_cast<std::size_t>(b)] = inst.mask;
      }
      try {
        Tape tape;
        ForwardOutputs outputs = model.forward_batch(facts, masks, /*train=*/true, &dropper);
        LossBreakdown loss = joint_loss(config, outputs, batch);
        if (loss.total.defined()) {
          tape.backward(loss.total);
          adam.step(lr);
        }
        ent_sum += loss.entity * static_cast<double>(loss.n_entity);
        rel_sum += loss.relation * static_cast<double>(loss.n_relation);
        num_sum += loss.numeric * static_cast<double>(loss.n_numeric);
        ent_n += loss.n_entity;
        rel_n += loss.n_relation;
        num_n += loss.n_numeric;
      } catch (const NumericError& e) {
        std::ostringstream ids;
        for (int b = 0; b < std::min(len, 8); ++b) {
          if (b) ids << " ";
          ids << batch[static_cast<std::size_t>(b)].fact_index;
        }
        throw NumericError("training aborted at epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(batch_no + 1) + " (facts " + ids.str() +
                           "): " + e.what());
      }
    }

    const double ent_mean = ent_n ? ent_sum / static_cast<double>(ent_n) : 0;
    const double rel_mean = rel_n ? rel_sum / static_cast<double>(rel_n) : 0;
    const double num_mean = num_n ? num_sum / static_cast<double>(num_n) : 0;
    const double total = ent_mean + static_cast<double>(config.lambda_rel) * rel_mean +
                         static_cast<double>(config.lambda_num) * num_mean;
    if (epoch == 0) result.initial_loss = total;
    result.final_loss = total;

    const bool last_epoch = epoch == options.epochs - 1;
    if ((epoch + 1) % options.validate_every == 0 || last_epoch) {
      EvalReport report = evaluate(model, val_split, filter_ptr, norm, options.eval_batch_size);
      ValidationPoint point;
      point.epoch = epoch + 1;
      point.lr = static_cast<double>(lr);
      point.loss_total = total;
      point.loss_entity = ent_mean;
      point.loss_relation = rel_mean;
      point.loss_numeric = num_mean;
      point.val_link_mrr = report.link_all.mrr;
      point.val_link_count = report.link_all.count;
      point.val_rel_mrr = report.relation_all.mrr;
      point.val_rel_count = report.relation_all.count;
      point.val_rmse = report.numeric_all.rmse_normalized;
      point.val_num_count = report.numeric_all.count;
      result.log.push_back(point);
      if (log_file.is_open()) {
        write_log_row(log_file, point);
        log_file.flush();
      }
      if (options.progress) {
        char line[200];
        std::snprintf(line, sizeof(line),
                      "epoch %4d  lr %.3g  loss %.6f  val link MRR %.4f  rel MRR %.4f  rmse %.4f\n",
                      point.epoch, point.lr, point.loss_total, point.val_link_mrr,
                      point.val_rel_mrr, point.val_rmse);
        (*options.progress) << line << std::flush;
      }
      if (point.val_link_mrr > result.best_val_link_mrr) {
        result.best_val_link_mrr = point.val_link_mrr;
        result.best_epoch = point.epoch;
        if (!options.out_dir.empty()) {
          save_model_checkpoint(result.best_dir, model, dataset.vocabulary, norm);
        }
      }
    }
  }

  if (!options.out_dir.empty()) {
    save_model_checkpoint(result.last_dir, model, dataset.vocabulary, norm);
  }
  return result;
}

}  // namespace hynt
