#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "hynt/eval.hpp"
#include "hynt/ingest.hpp"
#include "hynt/model.hpp"
#include "hynt/training.hpp"

namespace fs = std::filesystem;
using namespace hynt;

namespace {

// ---------------------------------------------------------------------------
// Run configuration: one INI file covering the model, the training loop, the
// optimizer, and the run's paths. Every key has a default; unknown keys are
// rejected so a typo never silently trains the wrong experiment.
// ---------------------------------------------------------------------------

struct RunConfig {
  HyntConfig model;
  TrainOptions train;
  std::string data_dir;
  std::string out_dir;
};

MaskStrategy parse_strategy(const std::string& s) {
  if (s == "enumerate") return MaskStrategy::Enumerate;
  if (s == "sample") return MaskStrategy::Sample;
  throw ConfigError("train.strategy must be 'enumerate' or 'sample', got '" + s + "'");
}

RankMode parse_rank_mode(const std::string& s) {
  if (s == "filtered") return RankMode::Filtered;
  if (s == "raw") return RankMode::Raw;
  throw ConfigError("ranking mode must be 'filtered' or 'raw', got '" + s + "'");
}

ReportScope parse_scope(const std::string& s) {
  if (s == "tri") return ReportScope::Tri;
  if (s == "all") return ReportScope::Both;
  throw ConfigError("scope must be 'tri' or 'all', got '" + s + "'");
}

RunConfig load_run_config(const std::string& path) {
  IniFile file;
  if (!path.empty()) file = IniFile::parse_file(path);
  IniReader reader(file);
  RunConfig rc;
  rc.model = HyntConfig::from_ini(reader);

  TrainOptions& t = rc.train;
  t.epochs = static_cast<int>(reader.get_int("train", "epochs", t.epochs));
  t.batch_size = static_cast<int>(reader.get_int("train", "batch_size", t.batch_size));
  t.seed = static_cast<std::uint64_t>(reader.get_int("train", "seed", static_cast<std::int64_t>(t.seed)));
  t.validate_every = static_cast<int>(reader.get_int("train", "validate_every", t.validate_every));
  t.eval_batch_size = static_cast<int>(reader.get_int("train", "eval_batch_size", t.eval_batch_size));
  t.strategy = parse_strategy(reader.get_string("train", "strategy", "enumerate"));
  t.val_mode = parse_rank_mode(reader.get_string("train", "val_mode", "filtered"));
  t.filter.mask_relations = reader.get_bool("train", "mask_relations", true);
  t.filter.mask_numeric_values = reader.get_bool("train", "mask_numeric_values", true);
  t.filter.mask_qualifier_entities = reader.get_bool("train", "mask_qualifier_entities", true);

  t.schedule.base_lr = static_cast<real>(reader.get_real("optim", "lr", t.schedule.base_lr));
  t.schedule.min_lr = static_cast<real>(reader.get_real("optim", "min_lr", t.schedule.min_lr));
  t.schedule.period = reader.get_real("optim", "period", t.schedule.period);
  t.schedule.t_mult = reader.get_real("optim", "t_mult", t.schedule.t_mult);
  t.adam.beta1 = static_cast<real>(reader.get_real("optim", "beta1", t.adam.beta1));
  t.adam.beta2 = static_cast<real>(reader.get_real("optim", "beta2", t.adam.beta2));
  t.adam.eps = static_cast<real>(reader.get_real("optim", "eps", t.adam.eps));

  rc.data_dir = reader.get_string("data", "dir", "");
  rc.out_dir = reader.get_string("run", "out", "");
  reader.finish();
  return rc;
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// The frozen copy written into the run directory; loading it back through
// load_run_config reproduces the resolved settings exactly.
IniFile freeze_run_config(const RunConfig& rc) {
  IniFile file;
  rc.model.to_ini(file);
  const TrainOptions& t = rc.train;
  file.set("train", "epochs", std::to_string(t.epochs));
  file.set("train", "batch_size", std::to_string(t.batch_size));
  file.set("train", "seed", std::to_string(t.seed));
  file.set("train", "validate_every", std::to_string(t.validate_every));
  file.set("train", "eval_batch_size", std::to_string(t.eval_batch_size));
  file.set("train", "strategy", t.strategy == MaskStrategy::Enumerate ? "enumerate" : "sample");
  file.set("train", "val_mode", t.val_mode == RankMode::Filtered ? "filtered" : "raw");
  file.set("train", "mask_relations", t.filter.mask_relations ? "true" : "false");
  file.set("train", "mask_numeric_values", t.filter.mask_numeric_values ? "true" : "false");
  file.set("train", "mask_qualifier_entities", t.filter.mask_qualifier_entities ? "true" : "false");
  file.set("optim", "lr", fmt_real(t.schedule.base_lr));
  file.set("optim", "min_lr", fmt_real(t.schedule.min_lr));
  file.set("optim", "period", fmt_real(t.schedule.period));
  file.set("optim", "t_mult", fmt_real(t.schedule.t_mult));
  file.set("optim", "beta1", fmt_real(t.adam.beta1));
  file.set("optim", "beta2", fmt_real(t.adam.beta2));
  file.set("optim", "eps", fmt_real(t.adam.eps));
  file.set("data", "dir", rc.data_dir);
  file.set("run", "out", rc.out_dir);
  return file;
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw DataError("cannot create directory '" + path + "': " + ec.message());
}

// ---------------------------------------------------------------------------
// Dataset directories: train.txt / valid.txt / test.txt in the fact-file
// grammar plus an informational spec.ini. Values on disk are raw.
// ---------------------------------------------------------------------------

Dataset load_dataset_dir(const std::string& dir, Vocabulary* frozen_vocab) {
  Dataset ds;
  if (frozen_vocab) ds.vocabulary = *frozen_vocab;
  const VocabMode mode = frozen_vocab ? VocabMode::Frozen : VocabMode::Build;
  const fs::path root(dir);
  if (!fs::exists(root / "train.txt"))
    throw DataError("no train.txt under '" + dir + "'");
  ds.train = parse_fact_file((root / "train.txt").string(), ds.vocabulary, mode).facts;
  if (fs::exists(root / "valid.txt"))
    ds.valid = parse_fact_file((root / "valid.txt").string(), ds.vocabulary, mode).facts;
  if (fs::exists(root / "test.txt"))
    ds.test = parse_fact_file((root / "test.txt").string(), ds.vocabulary, mode).facts;
  return ds;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string out;
  SyntheticSpec spec;
};

int cmd_gen_data(const GenDataArgs& args) {
  SyntheticDataset synth = generate_synthetic(args.spec);
  ensure_dir(args.out);
  const fs::path root(args.out);
  const Dataset& ds = synth.dataset;
  write_fact_file((root / "train.txt").string(), ds.train, ds.vocabulary);
  write_fact_file((root / "valid.txt").string(), ds.valid, ds.vocabulary);
  write_fact_file((root / "test.txt").string(), ds.test, ds.vocabulary);

  IniFile manifest;
  const SyntheticSpec& s = args.spec;
  manifest.set("synthetic", "entities", std::to_string(s.num_entities));
  manifest.set("synthetic", "discrete_relations", std::to_string(s.num_discrete_relations));
  manifest.set("synthetic", "numeric_relations", std::to_string(s.num_numeric_relations));
  manifest.set("synthetic", "facts", std::to_string(s.num_facts));
  manifest.set("synthetic", "max_qualifiers", std::to_string(s.max_qualifiers));
  manifest.set("synthetic", "noise", fmt_real(s.noise_scale));
  manifest.set("synthetic", "numeric_fraction", fmt_real(s.numeric_fraction));
  manifest.set("synthetic", "seed", std::to_string(s.seed));
  manifest.set("split", "train", fmt_real(s.ratios.train));
  manifest.set("split", "valid", fmt_real(s.ratios.valid));
  manifest.set("split", "test", fmt_real(s.ratios.test));
  manifest.write_file((root / "spec.ini").string());

  std::cout << "wrote " << (root / "train.txt").string() << " (" << ds.train.size() << " facts)\n"
            << "wrote " << (root / "valid.txt").string() << " (" << ds.valid.size() << " facts)\n"
            << "wrote " << (root / "test.txt").string() << " (" << ds.test.size() << " facts)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::string data_dir;
  std::string out_dir;
  bool quiet = false;
  // Optional flag overrides; <0 / empty means "not given".
  int epochs = -1, batch_size = -1, d = -1, validate_every = -1;
  std::int64_t seed = -1;
  bool seed_given = false;
  double lr = -1, dropout = -1;
  std::string encoding, prediction_head, strategy;
  std::vector<std::string> no_mask;
};

int cmd_train(const TrainArgs& args) {
  RunConfig rc = load_run_config(args.config_path);
  if (!args.data_dir.empty()) rc.data_dir = args.data_dir;
  if (!args.out_dir.empty()) rc.out_dir = args.out_dir;
  if (args.epochs >= 0) rc.train.epochs = args.epochs;
  if (args.batch_size >= 0) rc.train.batch_size = args.batch_size;
  if (args.validate_every >= 0) rc.train.validate_every = args.validate_every;
  if (args.seed_given) rc.train.seed = static_cast<std::uint64_t>(args.seed);
  if (args.d >= 0) rc.model.d = args.d;
  if (args.lr >= 0) rc.train.schedule.base_lr = static_cast<real>(args.lr);
  if (args.dropout >= 0) rc.model.dropout_rate = static_cast<real>(args.dropout);
  if (!args.encoding.empty()) {
    if (args.encoding == "projection") {
      rc.model.encoding = HyntConfig::Encoding::Projection;
    } else if (args.encoding == "hadamard") {
      rc.model.encoding = HyntConfig::Encoding::Hadamard;
    } else {
      throw ConfigError("--encoding must be 'projection' or 'hadamard', got '" + args.encoding + "'");
    }
  }
  if (!args.prediction_head.empty()) {
    if (args.prediction_head == "transformer") {
      rc.model.prediction_head = HyntConfig::PredictionHead::Transformer;
    } else if (args.prediction_head == "linear") {
      rc.model.prediction_head = HyntConfig::PredictionHead::Linear;
    } else {
      throw ConfigError("--prediction-head must be 'transformer' or 'linear', got '" +
                        args.prediction_head + "'");
    }
  }
  if (!args.strategy.empty()) rc.train.strategy = parse_strategy(args.strategy);
  for (const std::string& family : args.no_mask) {
    if (family == "R") {
      rc.train.filter.mask_relations = false;
    } else if (family == "V_N") {
      rc.train.filter.mask_numeric_values = false;
    } else if (family == "E_qual") {
      rc.train.filter.mask_qualifier_entities = false;
    } else {
      throw ConfigError("--no-mask takes R, V_N, or E_qual, got '" + family + "'");
    }
  }
  rc.model.finalize();

  if (rc.data_dir.empty())
    throw ConfigError("no dataset directory: pass --data or set [data] dir in the config");
  if (rc.out_dir.empty())
    throw ConfigError("no run directory: pass --out or set [run] out in the config");

  Dataset dataset = load_dataset_dir(rc.data_dir, nullptr);
  NormalizationTable norm = compute_normalization(dataset.train, dataset.vocabulary);
  normalize_dataset(dataset, norm);
  norm.applied = true;

  // Freeze the resolved configuration up front so even an aborted run keeps
  // its provenance.
  ensure_dir(rc.out_dir);
  freeze_run_config(rc).write_file((fs::path(rc.out_dir) / "config.ini").string());

  rc.train.out_dir = rc.out_dir;
  rc.train.progress = args.quiet ? nullptr : &std::cout;

  Rng boot(rc.train.seed);
  Rng init_rng = boot.fork(0x696e6974);  // initialization stream, disjoint from the loop's forks
  Model model(rc.model, dataset.vocabulary.num_entities(), dataset.vocabulary.num_relations(),
              init_rng);

  if (!args.quiet) {
    std::cout << "training on " << dataset.train.size() << " facts ("
              << dataset.vocabulary.num_entities() << " entities, "
              << dataset.vocabulary.num_relations() << " relations, d=" << rc.model.d << ")\n";
  }
  TrainResult result = train(model, dataset, norm, rc.train);

  char mrr[32];
  std::snprintf(mrr, sizeof(mrr), "%.4f", result.best_val_link_mrr);
  std::cout << "best epoch " << result.best_epoch << " (val link MRR " << mrr << ")\n"
            << "checkpoints: " << result.best_dir << " " << result.last_dir << "\n"
            << "log: " << result.log_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data_dir;
  std::string split = "test";
  std::string mode = "filtered";
  std::string scope = "all";
  std::string out_csv;
  int batch_size = 512;
};

int cmd_eval(const EvalArgs& args) {
  const RankMode mode = parse_rank_mode(args.mode);
  const ReportScope scope = parse_scope(args.scope);
  if (args.split != "train" && args.split != "valid" && args.split != "test")
    throw ConfigError("--split must be train, valid, or test, got '" + args.split + "'");

  LoadedModel loaded = load_model_checkpoint(args.checkpoint);
  Dataset dataset = load_dataset_dir(args.data_dir, &loaded.vocabulary);
  normalize_dataset(dataset, loaded.normalization);

  const std::vector<HyperFact>* split = &dataset.test;
  if (args.split == "train") split = &dataset.train;
  if (args.split == "valid") split = &dataset.valid;

  FilterIndex filters;
  const FilterIndex* filter_ptr = nullptr;
  if (mode == RankMode::Filtered) {
    filters = FilterIndex::build(dataset);
    filter_ptr = &filters;
  }

  EvalReport report = evaluate(*loaded.model, *split, filter_ptr, loaded.normalization,
                               args.batch_size);
  std::cout << "split: " << args.split << " (" << split->size() << " facts)\n";
  write_report_text(std::cout, report, loaded.vocabulary, scope);

  if (!args.out_csv.empty()) {
    std::ofstream out(args.out_csv);
    if (!out) throw DataError("cannot write report to '" + args.out_csv + "'");
    write_report_csv(out, report, loaded.vocabulary, scope);
    std::cout << "report: " << args.out_csv << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint;
  std::string query;
  int top = 10;
};

std::vector<std::string> split_whitespace(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> tokens;
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

int cmd_predict(const PredictArgs& args) {
  LoadedModel loaded = load_model_checkpoint(args.checkpoint);
  const Vocabulary& vocab = loaded.vocabulary;
  const NormalizationTable& norm = loaded.normalization;
  if (vocab.num_entities() == 0 || vocab.num_relations() == 0)
    throw DataError("checkpoint vocabulary is empty");

  std::vector<std::string> tokens = split_whitespace(args.query);
  if (tokens.size() < 3 || (tokens.size() - 3) % 2 != 0)
    throw DataError("query must read 'head relation tail (qrel qval)*', got " +
                    std::to_string(tokens.size()) + " tokens");

  int mask_pos = -1;
  bool mask_numeric = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] != "?" && tokens[i] != "#?") continue;
    if (mask_pos >= 0) throw ConfigError("query must contain exactly one '?' slot");
    mask_pos = static_cast<int>(i);
    mask_numeric = tokens[i] == "#?";
  }
  if (mask_pos < 0)
    throw ConfigError("query must contain exactly one '?' slot ('#?' for a numeric value)");

  MaskSpec mask;
  const bool value_position = mask_pos == 2 || (mask_pos >= 3 && (mask_pos - 3) % 2 == 1);
  if (mask_numeric && !value_position)
    throw ConfigError("'#?' only marks a tail or qualifier value; use '?' elsewhere");
  if (mask_pos == 0) {
    mask = {Slot::Head, -1};
    tokens[0] = vocab.entity_name(0);
  } else if (mask_pos == 1) {
    mask = {Slot::TripletRelation, -1};
    tokens[1] = vocab.relation_name(0);
  } else if (mask_pos == 2) {
    mask = {Slot::Tail, -1};
    tokens[2] = mask_numeric ? "#0" : vocab.entity_name(0);
  } else if ((mask_pos - 3) % 2 == 0) {
    mask = {Slot::QualifierRelation, (mask_pos - 3) / 2};
    tokens[static_cast<std::size_t>(mask_pos)] = vocab.relation_name(0);
  } else {
    mask = {Slot::QualifierValue, (mask_pos - 3) / 2};
    tokens[static_cast<std::size_t>(mask_pos)] = mask_numeric ? "#0" : vocab.entity_name(0);
  }

  std::string line;
  for (const std::string& tok : tokens) {
    if (!line.empty()) line += ' ';
    line += tok;
  }
  std::istringstream in(line);
  Vocabulary frozen = vocab;  // Frozen lookups never mutate, but the parser takes a mutable ref.
  ParsedFacts parsed = parse_fact_stream(in, frozen, VocabMode::Frozen, "query");
  if (parsed.facts.size() != 1) throw DataError("query did not parse into a single fact");
  HyperFact fact = parsed.facts[0];

  // Fact files carry raw values; the model works in normalized space. A raw
  // value is rescaled by its relation's range, so a numeric value whose own
  // relation is the open slot has no defined scale.
  if (mask.slot == Slot::TripletRelation && fact.triplet.tail.is_numeric())
    throw DataError("cannot scale the numeric tail while the relation is the open slot");
  if (mask.slot == Slot::QualifierRelation &&
      fact.qualifiers[static_cast<std::size_t>(mask.qualifier_index)].value.is_numeric())
    throw DataError("cannot scale a numeric qualifier value while its relation is the open slot");
  auto normalize_ref = [&](EntityRef& ref, int relation_id) {
    if (!ref.is_numeric()) return;
    if (!norm.has(relation_id))
      throw DataError("relation '" + vocab.relation_name(relation_id) +
                      "' has no numeric range in the checkpoint");
    ref.value = norm.normalize(relation_id, ref.value);
  };
  if (mask.slot != Slot::Tail) normalize_ref(fact.triplet.tail, fact.triplet.relation_id);
  for (std::size_t j = 0; j < fact.qualifiers.size(); ++j) {
    if (mask.slot == Slot::QualifierValue && mask.qualifier_index == static_cast<int>(j)) continue;
    normalize_ref(fact.qualifiers[j].value, fact.qualifiers[j].relation_id);
  }

  SlotPrediction pred = loaded.model->predict_slot(fact, mask);

  if (pred.kind == SlotKind::Numeric) {
    const int rel = mask.slot == Slot::Tail
                        ? fact.triplet.relation_id
                        : fact.qualifiers[static_cast<std::size_t>(mask.qualifier_index)].relation_id;
    if (!norm.has(rel))
      throw DataError("relation '" + vocab.relation_name(rel) +
                      "' has no numeric range in the checkpoint");
    std::printf("%.17g\n", norm.denormalize(rel, pred.numeric_value));
    return 0;
  }

  const Tensor& probs = pred.kind == SlotKind::DiscreteEntity ? pred.entity_probs
                                                              : pred.relation_probs;
  std::vector<int> order(static_cast<std::size_t>(probs.rows()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (probs.at(a, 0) != probs.at(b, 0)) return probs.at(a, 0) > probs.at(b, 0);
    return a < b;
  });
  const int top = std::min<int>(args.top, static_cast<int>(order.size()));
  std::printf("%-5s %-11s %s\n", "rank", "prob", "answer");
  for (int i = 0; i < top; ++i) {
    const int id = order[static_cast<std::size_t>(i)];
    const std::string& name = pred.kind == SlotKind::DiscreteEntity ? vocab.entity_name(id)
                                                                    : vocab.relation_name(id);
    std::printf("%-5d %-11.6f %s\n", i + 1, double(probs.at(id, 0)), name.c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

struct InspectArgs {
  std::string data_dir;
};

int cmd_inspect(const InspectArgs& args) {
  Dataset ds = load_dataset_dir(args.data_dir, nullptr);
  const Vocabulary& vocab = ds.vocabulary;

  std::size_t with_quals = 0, qual_count = 0, numeric_tails = 0, numeric_quals = 0;
  std::unordered_map<int, RelationStats> train_stats;
  auto pool = [&](int rel, double v) {
    auto [it, inserted] = train_stats.try_emplace(rel, RelationStats{v, v, 1});
    if (!inserted) {
      it->second.min = std::min(it->second.min, v);
      it->second.max = std::max(it->second.max, v);
      it->second.count += 1;
    }
  };
  auto scan = [&](const std::vector<HyperFact>& facts, bool is_train) {
    for (const HyperFact& f : facts) {
      if (!f.qualifiers.empty()) ++with_quals;
      qual_count += f.qualifiers.size();
      if (f.triplet.tail.is_numeric()) {
        ++numeric_tails;
        if (is_train) pool(f.triplet.relation_id, f.triplet.tail.value);
      }
      for (const Qualifier& q : f.qualifiers) {
        if (q.value.is_numeric()) {
          ++numeric_quals;
          if (is_train) pool(q.relation_id, q.value.value);
        }
      }
    }
  };
  scan(ds.train, true);
  scan(ds.valid, false);
  scan(ds.test, false);
  const std::size_t total = ds.train.size() + ds.valid.size() + ds.test.size();

  std::printf("%-24s %d\n", "entities", vocab.num_entities());
  std::printf("%-24s %d (%d discrete, %d numeric)\n", "relations", vocab.num_relations(),
              vocab.num_relations() - vocab.num_numeric_relations(),
              vocab.num_numeric_relations());
  std::printf("%-24s %zu\n", "train facts", ds.train.size());
  std::printf("%-24s %zu\n", "valid facts", ds.valid.size());
  std::printf("%-24s %zu\n", "test facts", ds.test.size());
  std::printf("%-24s %zu (%.1f%%)\n", "facts with qualifiers", with_quals,
              total ? 100.0 * double(with_quals) / double(total) : 0.0);
  std::printf("%-24s %zu\n", "qualifier instances", qual_count);
  std::printf("%-24s %zu (%zu tails, %zu qualifier values)\n", "numeric literals",
              numeric_tails + numeric_quals, numeric_tails, numeric_quals);
  if (!train_stats.empty()) {
    std::printf("numeric attributes (train raw ranges):\n");
    std::vector<int> rels;
    for (const auto& [rel, stats] : train_stats) rels.push_back(rel);
    std::sort(rels.begin(), rels.end());
    for (int rel : rels) {
      const RelationStats& s = train_stats.at(rel);
      std::printf("  %-22s count %-6lld min %-12.6g max %-12.6g\n",
                  vocab.relation_name(rel).c_str(), static_cast<long long>(s.count), s.min, s.max);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hynt: representation learning over hyper-relational facts with numeric literals"};
  app.require_subcommand(1);

  GenDataArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset directory");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--seed", gen.spec.seed, "generator seed");
  gen_cmd->add_option("--facts", gen.spec.num_facts, "total fact count");
  gen_cmd->add_option("--entities", gen.spec.num_entities, "discrete entity count");
  gen_cmd->add_option("--discrete-relations", gen.spec.num_discrete_relations,
                      "discrete relation count (last is the qualifier relation)");
  gen_cmd->add_option("--numeric-relations", gen.spec.num_numeric_relations,
                      "numeric relation count (last is the time relation)");
  gen_cmd->add_option("--max-qualifiers", gen.spec.max_qualifiers, "qualifiers per fact, 0..k");
  gen_cmd->add_option("--noise", gen.spec.noise_scale, "noise scale on planted numeric laws");
  gen_cmd->add_option("--numeric-fraction", gen.spec.numeric_fraction,
                      "share of facts with a numeric tail");
  gen_cmd->add_option("--train-ratio", gen.spec.ratios.train, "train split ratio");
  gen_cmd->add_option("--valid-ratio", gen.spec.ratios.valid, "valid split ratio");
  gen_cmd->add_option("--test-ratio", gen.spec.ratios.test, "test split ratio");

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model and write checkpoints");
  train_cmd->add_option("--config", tr.config_path, "run config (INI)");
  train_cmd->add_option("--data", tr.data_dir, "dataset directory");
  train_cmd->add_option("--out", tr.out_dir, "run output directory");
  train_cmd->add_option("--epochs", tr.epochs, "training epochs");
  train_cmd->add_option("--batch-size", tr.batch_size, "instances per step");
  CLI::Option* seed_opt = train_cmd->add_option("--seed", tr.seed, "training seed");
  train_cmd->add_option("--validate-every", tr.validate_every, "epochs between validations");
  train_cmd->add_option("--d", tr.d, "embedding width");
  train_cmd->add_option("--lr", tr.lr, "base learning rate");
  train_cmd->add_option("--dropout", tr.dropout, "dropout rate");
  train_cmd->add_option("--encoding", tr.encoding, "projection | hadamard");
  train_cmd->add_option("--prediction-head", tr.prediction_head, "transformer | linear");
  train_cmd->add_option("--strategy", tr.strategy, "enumerate | sample");
  train_cmd->add_option("--no-mask", tr.no_mask,
                        "drop a masking family: R, V_N, or E_qual (repeatable)");
  train_cmd->add_flag("--quiet", tr.quiet, "suppress progress lines");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint directory")->required();
  eval_cmd->add_option("--data", ev.data_dir, "dataset directory")->required();
  eval_cmd->add_option("--split", ev.split, "train | valid | test");
  eval_cmd->add_option("--mode", ev.mode, "filtered | raw");
  eval_cmd->add_option("--scope", ev.scope, "tri | all");
  eval_cmd->add_option("--out", ev.out_csv, "also write the report as CSV");
  eval_cmd->add_option("--batch-size", ev.batch_size, "evaluation batch size");

  PredictArgs pr;
  CLI::App* predict_cmd = app.add_subcommand("predict", "answer a single masked query");
  predict_cmd->add_option("--checkpoint", pr.checkpoint, "checkpoint directory")->required();
  predict_cmd->add_option("--query", pr.query,
                          "fact with one '?' slot ('#?' for a numeric value)")->required();
  predict_cmd->add_option("--top", pr.top, "answers to print for discrete slots");

  InspectArgs ins;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "print dataset statistics");
  inspect_cmd->add_option("--data", ins.data_dir, "dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) {
      tr.seed_given = seed_opt->count() > 0;
      return cmd_train(tr);
    }
    if (*eval_cmd) return cmd_eval(ev);
    if (*predict_cmd) return cmd_predict(pr);
    if (*inspect_cmd) return cmd_inspect(ins);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
