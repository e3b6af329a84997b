#include "hynt/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_set>

namespace hynt {

const RelationRange& NormalizationTable::range(int relation_id) const {
  auto it = ranges_.find(relation_id);
  if (it == ranges_.end())
    throw DataError("no normalization range for relation id " + std::to_string(relation_id));
  return it->second;
}

double NormalizationTable::normalize(int relation_id, double v) const {
  const RelationRange& r = range(relation_id);
  if (r.constant) return 0.5;
  return (v - r.min) / (r.max - r.min);
}

double NormalizationTable::denormalize(int relation_id, double v) const {
  const RelationRange& r = range(relation_id);
  if (r.constant) return r.min;
  return r.min + v * (r.max - r.min);
}

double NormalizationTable::span(int relation_id) const {
  const RelationRange& r = range(relation_id);
  return r.constant ? 0.0 : r.max - r.min;
}

void NormalizationTable::save(std::ostream& out, const Vocabulary& vocab) const {
  out << "# relation min max constant\n";
  out << "applied " << (applied ? 1 : 0) << "\n";
  std::vector<int> ids;
  ids.reserve(ranges_.size());
  for (const auto& [id, _] : ranges_) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  char buf[128];
  for (int id : ids) {
    const RelationRange& r = ranges_.at(id);
    std::snprintf(buf, sizeof(buf), " %.17g %.17g %d\n", r.min, r.max, r.constant ? 1 : 0);
    out << vocab.relation_name(id) << buf;
  }
}

NormalizationTable NormalizationTable::load(std::istream& in, const Vocabulary& vocab) {
  NormalizationTable table;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string name;
    ls >> name;
    if (name == "applied") {
      int flag = 0;
      ls >> flag;
      table.applied = flag != 0;
      continue;
    }
    RelationRange r;
    int constant = 0;
    if (!(ls >> r.min >> r.max >> constant))
      throw DataError("malformed normalization table line: " + line);
    r.constant = constant != 0;
    auto id = vocab.relation_id(name);
    if (!id) throw DataError("normalization table names unknown relation: " + name);
    table.set(*id, r);
  }
  return table;
}

namespace {

constexpr int kDaysBeforeMonth[12] = {0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334};
constexpr int kDaysInMonth[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};

bool looks_like_date(const std::string& s) {
  // digits '-' digits ['-' digits], e.g. 1922-01-28 or 1922-01
  std::size_t first = s.find('-', 1);
  if (first == std::string::npos || first == 0) return false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '-' && !std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return std::count(s.begin(), s.end(), '-') <= 2;
}

double parse_numeric_token(const std::string& body, const std::string& where) {
  if (body.empty()) throw DataError(where + ": empty numeric literal");
  if (looks_like_date(body)) {
    int year = 0, month = 0, day = 0;
    int n = std::sscanf(body.c_str(), "%d-%d-%d", &year, &month, &day);
    if (n < 2) throw DataError(where + ": bad date literal '" + body + "'");
    return date_to_real(year, month, n >= 3 ? day : 0);
  }
  const char* begin = body.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + body.size())
    throw DataError(where + ": bad numeric literal '" + body + "'");
  if (!std::isfinite(v)) throw DataError(where + ": non-finite numeric literal '" + body + "'");
  return v;
}

EntityRef parse_entity_token(const std::string& tok, Vocabulary& vocab, VocabMode mode,
                             const std::string& where) {
  if (!tok.empty() && tok[0] == '#') return EntityRef::numeric(parse_numeric_token(tok.substr(1), where));
  if (mode == VocabMode::Build) return EntityRef::discrete(vocab.add_entity(tok));
  auto id = vocab.entity_id(tok);
  if (!id) throw DataError(where + ": unknown entity '" + tok + "'");
  return EntityRef::discrete(*id);
}

int parse_relation_token(const std::string& tok, Vocabulary& vocab, VocabMode mode,
                         const std::string& where) {
  if (!tok.empty() && tok[0] == '#')
    throw DataError(where + ": numeric literal in relation position '" + tok + "'");
  if (mode == VocabMode::Build) return vocab.add_relation(tok);
  auto id = vocab.relation_id(tok);
  if (!id) throw DataError(where + ": unknown relation '" + tok + "'");
  return *id;
}

}  // namespace

double date_to_real(int year, int month, int day) {
  if (month == 0 && day == 0) return static_cast<double>(year);
  if (month < 1 || month > 12)
    throw DataError("invalid date: month " + std::to_string(month));
  if (day < 0 || day > kDaysInMonth[month - 1])
    throw DataError("invalid date: day " + std::to_string(day) + " in month " + std::to_string(month));
  int day_of_year = kDaysBeforeMonth[month - 1] + day;
  return static_cast<double>(year) + static_cast<double>(day_of_year) / 365.0;
}

ParsedFacts parse_fact_stream(std::istream& in, Vocabulary& vocab, VocabMode mode,
                              const std::string& source_name) {
  ParsedFacts result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
    if (tokens.empty() || tokens[0][0] == '%') continue;  // blank or comment line
    std::string where = source_name + ":" + std::to_string(line_no);
    if (tokens.size() < 3 || (tokens.size() - 3) % 2 != 0)
      throw DataError(where + ": expected 3 + 2k tokens, got " + std::to_string(tokens.size()));
    HyperFact fact;
    fact.triplet.head = parse_entity_token(tokens[0], vocab, mode, where);
    fact.triplet.relation_id = parse_relation_token(tokens[1], vocab, mode, where);
    fact.triplet.tail = parse_entity_token(tokens[2], vocab, mode, where);
    for (std::size_t i = 3; i + 1 < tokens.size(); i += 2) {
      Qualifier q;
      q.relation_id = parse_relation_token(tokens[i], vocab, mode, where);
      q.value = parse_entity_token(tokens[i + 1], vocab, mode, where);
      fact.qualifiers.push_back(q);
    }
    if (mode == VocabMode::Build) {
      if (fact.triplet.tail.is_numeric()) vocab.mark_relation_numeric(fact.triplet.relation_id);
      for (const Qualifier& q : fact.qualifiers)
        if (q.value.is_numeric()) vocab.mark_relation_numeric(q.relation_id);
    }
    result.facts.push_back(std::move(fact));
  }
  result.duplicates_dropped = dedup_facts(result.facts);
  return result;
}

ParsedFacts parse_fact_file(const std::string& path, Vocabulary& vocab, VocabMode mode) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open fact file: " + path);
  return parse_fact_stream(in, vocab, mode, path);
}

std::string format_numeric_literal(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "#%.17g", v);
  return buf;
}

namespace {

std::string entity_token(const EntityRef& e, const Vocabulary& vocab) {
  return e.is_numeric() ? format_numeric_literal(e.value) : vocab.entity_name(e.entity_id);
}

}  // namespace

void write_fact_stream(std::ostream& out, const std::vector<HyperFact>& facts, const Vocabulary& vocab) {
  for (const HyperFact& f : facts) {
    out << entity_token(f.triplet.head, vocab) << ' ' << vocab.relation_name(f.triplet.relation_id)
        << ' ' << entity_token(f.triplet.tail, vocab);
    for (const Qualifier& q : f.qualifiers)
      out << ' ' << vocab.relation_name(q.relation_id) << ' ' << entity_token(q.value, vocab);
    out << '\n';
  }
}

void write_fact_file(const std::string& path, const std::vector<HyperFact>& facts, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);  // LF newlines everywhere
  if (!out) throw DataError("cannot write fact file: " + path);
  write_fact_stream(out, facts, vocab);
}

NormalizationTable compute_normalization(const std::vector<HyperFact>& train_facts,
                                         const Vocabulary& vocab) {
  (void)vocab;
  std::unordered_map<int, RelationStats> stats;
  auto pool = [&](int relation_id, double v) {
    auto [it, inserted] = stats.try_emplace(relation_id, RelationStats{v, v, 1});
    if (!inserted) {
      it->second.min = std::min(it->second.min, v);
      it->second.max = std::max(it->second.max, v);
      it->second.count += 1;
    }
  };
  for (const HyperFact& f : train_facts) {
    if (f.triplet.tail.is_numeric()) pool(f.triplet.relation_id, f.triplet.tail.value);
    for (const Qualifier& q : f.qualifiers)
      if (q.value.is_numeric()) pool(q.relation_id, q.value.value);
  }
  NormalizationTable table;
  for (const auto& [id, s] : stats) {
    RelationRange r;
    r.min = s.min;
    r.max = s.max;
    r.constant = s.min == s.max;
    table.set(id, r);
  }
  return table;
}

void normalize_dataset(Dataset& dataset, const NormalizationTable& table) {
  // Record raw train-split stats before mapping values.
  std::unordered_map<int, RelationStats> stats;
  auto pool = [&](int relation_id, double v) {
    auto [it, inserted] = stats.try_emplace(relation_id, RelationStats{v, v, 1});
    if (!inserted) {
      it->second.min = std::min(it->second.min, v);
      it->second.max = std::max(it->second.max, v);
      it->second.count += 1;
    }
  };
  for (const HyperFact& f : dataset.train) {
    if (f.triplet.tail.is_numeric()) pool(f.triplet.relation_id, f.triplet.tail.value);
    for (const Qualifier& q : f.qualifiers)
      if (q.value.is_numeric()) pool(q.relation_id, q.value.value);
  }
  dataset.vocabulary.set_relation_stats(std::move(stats));

  auto map_facts = [&](std::vector<HyperFact>& facts) {
    for (HyperFact& f : facts) {
      if (f.triplet.tail.is_numeric())
        f.triplet.tail.value = table.normalize(f.triplet.relation_id, f.triplet.tail.value);
      for (Qualifier& q : f.qualifiers)
        if (q.value.is_numeric()) q.value.value = table.normalize(q.relation_id, q.value.value);
    }
  };
  map_facts(dataset.train);
  map_facts(dataset.valid);
  map_facts(dataset.test);
}

void split_dataset(std::vector<HyperFact> facts, const SplitRatios& ratios, std::uint64_t seed,
                   std::vector<HyperFact>& train, std::vector<HyperFact>& valid,
                   std::vector<HyperFact>& test) {
  const double sum = ratios.train + ratios.valid + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9) throw DataError("split ratios must sum to 1");
  const double rs[3] = {ratios.train, ratios.valid, ratios.test};
  int positive = 0;
  for (double r : rs) positive += r > 0.0 ? 1 : 0;
  if (facts.size() < static_cast<std::size_t>(positive))
    throw DataError("fewer facts than splits");

  Rng rng(seed);
  rng.shuffle(facts);

  const std::size_t n = facts.size();
  std::size_t counts[3];
  double frac[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = rs[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    frac[i] = exact - std::floor(exact);
    assigned += counts[i];
  }
  // Largest-remainder rounding; ties resolved by split order.
  std::size_t leftover = n - assigned;
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; i < leftover; ++i) counts[order[i % 3]] += 1;

  auto take = [&](std::size_t begin, std::size_t count) {
    return std::vector<HyperFact>(facts.begin() + static_cast<std::ptrdiff_t>(begin),
                                  facts.begin() + static_cast<std::ptrdiff_t>(begin + count));
  };
  train = take(0, counts[0]);
  valid = take(counts[0], counts[1]);
  test = take(counts[0] + counts[1], counts[2]);
}

namespace {

std::string entity_name_for(int i) { return "e" + std::to_string(i); }

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_entities <= 0 || spec.num_discrete_relations <= 0 || spec.num_facts <= 0)
    throw DataError("synthetic spec counts must be positive");
  if (spec.num_numeric_relations < 0 || spec.max_qualifiers < 0 || spec.noise_scale < 0.0)
    throw DataError("synthetic spec: negative parameter");

  SyntheticDataset synth;
  Vocabulary& vocab = synth.dataset.vocabulary;
  for (int i = 0; i < spec.num_entities; ++i) vocab.add_entity(entity_name_for(i));

  // Discrete relations d0..; the last one ("qual") only appears in qualifiers.
  std::vector<int> triplet_relations;
  int qual_relation = -1;
  for (int i = 0; i < spec.num_discrete_relations; ++i) {
    bool is_qual = spec.num_discrete_relations > 1 && i == spec.num_discrete_relations - 1;
    int id = vocab.add_relation(is_qual ? "qual" : "d" + std::to_string(i));
    if (is_qual)
      qual_relation = id;
    else
      triplet_relations.push_back(id);
  }
  // Numeric relations n0..; the last one ("time") only appears in qualifiers.
  std::vector<int> value_relations;
  int time_relation = -1;
  for (int i = 0; i < spec.num_numeric_relations; ++i) {
    bool is_time = spec.num_numeric_relations > 1 && i == spec.num_numeric_relations - 1;
    int id = vocab.add_relation(is_time ? "time" : "n" + std::to_string(i));
    vocab.mark_relation_numeric(id);
    if (is_time)
      time_relation = id;
    else
      value_relations.push_back(id);
  }

  Rng rng(spec.seed);
  synth.entity_latent.resize(static_cast<std::size_t>(spec.num_entities));
  for (double& l : synth.entity_latent) l = rng.uniform01();
  for (std::size_t i = 0; i < value_relations.size(); ++i) {
    PlantedLaw law;
    if (i < spec.laws.size()) {
      law = spec.laws[i];
    } else {
      law.slope_latent = rng.uniform(0.5, 1.5);
      law.slope_time = rng.uniform(0.5, 1.5);
    }
    synth.laws[value_relations[i]] = law;
  }

  const bool has_numeric = !value_relations.empty();
  const bool has_time = time_relation >= 0 && spec.max_qualifiers >= 1;
  // Numeric facts cycle through the entities in a shuffled order so every
  // entity's latent is observed about equally often; without this, small
  // datasets can leave entities with no numeric fact at all, making their
  // latent unrecoverable from the data.
  std::vector<int> numeric_heads(static_cast<std::size_t>(spec.num_entities));
  for (int i = 0; i < spec.num_entities; ++i) numeric_heads[static_cast<std::size_t>(i)] = i;
  rng.shuffle(numeric_heads);
  std::size_t numeric_cursor = 0;
  std::vector<HyperFact> facts;
  std::unordered_set<std::string> seen;
  std::size_t attempts = 0;
  const std::size_t max_attempts = 1000ULL * static_cast<std::size_t>(spec.num_facts);
  while (facts.size() < static_cast<std::size_t>(spec.num_facts)) {
    if (++attempts > max_attempts)
      throw DataError("synthetic generation could not reach the requested fact count; space too small");
    HyperFact fact;
    bool numeric = has_numeric && rng.uniform01() < spec.numeric_fraction;
    int head = numeric ? numeric_heads[numeric_cursor++ % numeric_heads.size()]
                       : static_cast<int>(rng.bounded(static_cast<std::uint64_t>(spec.num_entities)));
    fact.triplet.head = EntityRef::discrete(head);
    if (numeric) {
      int rel = value_relations[rng.bounded(value_relations.size())];
      fact.triplet.relation_id = rel;
      double time_norm = 0.0;
      if (has_time) {
        double t_raw = rng.uniform(synth.time_min, synth.time_max);
        time_norm = (t_raw - synth.time_min) / (synth.time_max - synth.time_min);
        fact.qualifiers.push_back({time_relation, EntityRef::numeric(t_raw)});
      }
      const PlantedLaw& law = synth.laws.at(rel);
      double v = law.slope_latent * synth.entity_latent[static_cast<std::size_t>(head)] +
                 law.slope_time * time_norm;
      if (spec.noise_scale > 0.0) v += spec.noise_scale * rng.normal();
      fact.triplet.tail = EntityRef::numeric(v);
    } else {
      std::size_t rel_pos = rng.bounded(triplet_relations.size());
      fact.triplet.relation_id = triplet_relations[rel_pos];
      int shift = 0;
      if (qual_relation >= 0 && spec.max_qualifiers > 0) {
        int k = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(spec.max_qualifiers) + 1));
        for (int j = 0; j < k; ++j) {
          int x = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(spec.num_entities)));
          fact.qualifiers.push_back({qual_relation, EntityRef::discrete(x)});
          shift += x;
        }
      }
      // Tail is an exact function of (head, relation, qualifier entities),
      // invertible in each component.
      int tail = static_cast<int>((head + 1 + static_cast<int>(rel_pos) + shift) %
                                  spec.num_entities);
      fact.triplet.tail = EntityRef::discrete(tail);
    }
    if (seen.insert(fact_key(fact)).second) facts.push_back(std::move(fact));
  }

  split_dataset(std::move(facts), spec.ratios, rng.fork(1).next_u64(), synth.dataset.train,
                synth.dataset.valid, synth.dataset.test);
  return synth;
}

double planted_law_value(const SyntheticDataset& synth, const HyperFact& fact) {
  auto it = synth.laws.find(fact.triplet.relation_id);
  if (it == synth.laws.end()) throw DataError("fact relation has no planted law");
  if (fact.triplet.head.is_numeric()) throw DataError("numeric head in planted-law fact");
  double latent = synth.entity_latent.at(static_cast<std::size_t>(fact.triplet.head.entity_id));
  double time_norm = 0.0;
  for (const Qualifier& q : fact.qualifiers) {
    if (q.value.is_numeric()) {
      time_norm = (q.value.value - synth.time_min) / (synth.time_max - synth.time_min);
      break;
    }
  }
  return it->second.slope_latent * latent + it->second.slope_time * time_norm;
}

}  // namespace hynt
