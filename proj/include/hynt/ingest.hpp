#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "hynt/kg.hpp"

namespace hynt {

// Per numeric relation min/max over the train split; drives min-max
// normalization of values into [0,1].
struct RelationRange {
  double min = 0.0;
  double max = 0.0;
  bool constant = false;  // single training value (min == max)
};

class NormalizationTable {
 public:
  void set(int relation_id, RelationRange range) { ranges_[relation_id] = range; }
  bool has(int relation_id) const { return ranges_.count(relation_id) > 0; }
  const RelationRange& range(int relation_id) const;

  // v -> (v - min) / (max - min); constant relations map to 0.5. Values
  // outside the training range are not clipped.
  double normalize(int relation_id, double v) const;
  double denormalize(int relation_id, double v) const;
  // Scale factor from normalized error to raw error.
  double span(int relation_id) const;

  bool applied = false;  // whether the owning dataset's values were mapped

  const std::unordered_map<int, RelationRange>& ranges() const { return ranges_; }

  void save(std::ostream& out, const Vocabulary& vocab) const;
  static NormalizationTable load(std::istream& in, const Vocabulary& vocab);

 private:
  std::unordered_map<int, RelationRange> ranges_;
};

enum class VocabMode { Build, Frozen };

struct ParsedFacts {
  std::vector<HyperFact> facts;
  std::size_t duplicates_dropped = 0;
};

// One fact per line: head rel tail (qrel qval)*, whitespace separated.
// Numeric literals carry a '#' sigil and are either reals or dates
// (#YYYY-MM-DD or #YYYY-MM), which are converted via date_to_real.
// In Build mode unknown tokens extend the vocabulary; in Frozen mode they
// are errors. Malformed lines raise DataError with the line number.
ParsedFacts parse_fact_stream(std::istream& in, Vocabulary& vocab, VocabMode mode,
                              const std::string& source_name);
ParsedFacts parse_fact_file(const std::string& path, Vocabulary& vocab, VocabMode mode);

void write_fact_stream(std::ostream& out, const std::vector<HyperFact>& facts, const Vocabulary& vocab);
void write_fact_file(const std::string& path, const std::vector<HyperFact>& facts, const Vocabulary& vocab);

// Serializes one numeric literal the way fact files store it ('#' sigil,
// round-trip precision).
std::string format_numeric_literal(double v);

// year + day_of_year/365 with day_of_year = days before the month in a
// non-leap calendar + day of month. day == 0 means a year-only (or
// year-month) literal. Throws DataError on invalid dates.
double date_to_real(int year, int month, int day);

// Min/max per numeric relation pooled over tail and qualifier positions.
// Train split only.
NormalizationTable compute_normalization(const std::vector<HyperFact>& train_facts,
                                         const Vocabulary& vocab);

// Maps every numeric value in the dataset through the table. Also records
// raw per-relation stats into the vocabulary.
void normalize_dataset(Dataset& dataset, const NormalizationTable& table);

// Seeded shuffle then contiguous split with largest-remainder rounding.
struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};
void split_dataset(std::vector<HyperFact> facts, const SplitRatios& ratios, std::uint64_t seed,
                   std::vector<HyperFact>& train, std::vector<HyperFact>& valid,
                   std::vector<HyperFact>& test);

struct PlantedLaw {
  double slope_latent = 0.0;  // coefficient on the head entity's latent
  double slope_time = 0.0;    // coefficient on the normalized time qualifier
};

// Synthetic HN-KG with planted structure: discrete tails are a deterministic
// function of (head, relation, qualifier entities), numeric tails follow an
// affine law in (head latent, time qualifier).
struct SyntheticSpec {
  int num_entities = 50;
  int num_discrete_relations = 7;  // last one is the qualifier relation
  int num_numeric_relations = 3;   // last one is the time relation
  int num_facts = 500;
  int max_qualifiers = 2;
  double noise_scale = 0.0;
  std::uint64_t seed = 7;
  double numeric_fraction = 0.5;    // share of facts with a numeric tail
  std::vector<PlantedLaw> laws;     // per value relation; drawn from seed if empty
  SplitRatios ratios;
};

struct SyntheticDataset {
  Dataset dataset;
  std::unordered_map<int, PlantedLaw> laws;     // relation id -> law
  std::vector<double> entity_latent;            // per discrete entity, in [0,1]
  double time_min = 1950.0, time_max = 2020.0;  // raw range of the time qualifier
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

// Re-evaluates the planted law for a numeric-tail fact (raw value space).
double planted_law_value(const SyntheticDataset& synth, const HyperFact& fact);

}  // namespace hynt
