#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hynt/eval.hpp"
#include "hynt/model.hpp"
#include "hynt/optim.hpp"

namespace hynt {

// One masked training example: a fact, the hidden slot, and the recoverable
// target (entity id, relation id, or normalized value by slot kind).
struct TrainInstance {
  const HyperFact* fact = nullptr;
  int fact_index = -1;  // position in the training split, for diagnostics
  MaskSpec mask;
  SlotKind kind = SlotKind::DiscreteEntity;
  int target_id = -1;
  real target_value = real(0);
};

// Reads the masked slot's content back out of the fact.
TrainInstance instance_for_slot(const HyperFact& fact, int fact_index, const MaskSpec& mask);

// Which slot families produce masked instances; switching one off removes
// its instances from training entirely (the ablation rows).
struct InstanceFilter {
  bool mask_relations = true;           // triplet + qualifier relation slots
  bool mask_numeric_values = true;      // numeric tails and qualifier values
  bool mask_qualifier_entities = true;  // discrete qualifier values
};

enum class MaskStrategy { Enumerate, Sample };

// Enumerate: every surviving maskable slot of every fact (3 + 2k before
// filtering). Sample: one uniformly chosen surviving slot per fact.
std::vector<TrainInstance> enumerate_instances(const std::vector<HyperFact>& facts,
                                               const InstanceFilter& filter);
std::vector<TrainInstance> sample_instances(const std::vector<HyperFact>& facts,
                                            const InstanceFilter& filter, Rng& rng);

// Joint objective over one forward: mean smoothed cross-entropy on entity
// slots + lambda_rel * same on relation slots + lambda_num * mean squared
// error on numeric slots. Absent categories contribute nothing.
struct LossBreakdown {
  Tensor total;  // scalar, attached to the active tape
  double entity = 0, relation = 0, numeric = 0;  // per-category means
  std::int64_t n_entity = 0, n_relation = 0, n_numeric = 0;
};

LossBreakdown joint_loss(const HyntConfig& config, const ForwardOutputs& outputs,
                         const std::vector<TrainInstance>& batch);

struct TrainOptions {
  int epochs = 300;
  int batch_size = 256;
  std::uint64_t seed = 0;
  int validate_every = 10;
  MaskStrategy strategy = MaskStrategy::Enumerate;
  InstanceFilter filter;
  AdamConfig adam;
  CosineRestartSchedule schedule;
  RankMode val_mode = RankMode::Filtered;
  int eval_batch_size = 512;
  // Run directory for best/, last/, and train_log.csv; empty = keep results
  // in memory only.
  std::string out_dir;
  std::ostream* progress = nullptr;  // optional one-line-per-validation feed
};

// One CSV log row, written at every validation point.
struct ValidationPoint {
  int epoch = 0;  // 1-based in logs
  double lr = 0;
  double loss_total = 0, loss_entity = 0, loss_relation = 0, loss_numeric = 0;
  double val_link_mrr = 0, val_rel_mrr = 0, val_rmse = 0;
  std::int64_t val_link_count = 0, val_rel_count = 0, val_num_count = 0;
};

struct TrainResult {
  int best_epoch = -1;  // 1-based
  double best_val_link_mrr = -1;
  std::vector<ValidationPoint> log;
  double initial_loss = 0;  // epoch-mean total of the first epoch
  double final_loss = 0;    // epoch-mean total of the last epoch
  std::string best_dir, last_dir, log_path;
};

void write_train_log_csv(std::ostream& out, const std::vector<ValidationPoint>& log);

// Deterministic, single-threaded training loop. Validates on the validation
// split (falling back to the training split when it is empty), keeps the
// best checkpoint by validation link MRR (ties keep the earlier epoch), and
// always writes the final state as the last checkpoint.
TrainResult train(Model& model, const Dataset& dataset, const NormalizationTable& norm,
                  const TrainOptions& options);

}  // namespace hynt
