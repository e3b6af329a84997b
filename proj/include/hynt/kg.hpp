#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hynt/common.hpp"

namespace hynt {

// Entity occurring in a fact: either a discrete object (an id into the
// discrete-entity vocabulary) or a unitless numeric literal.
struct EntityRef {
  enum class Kind { Discrete, Numeric };

  Kind kind = Kind::Discrete;
  int entity_id = -1;   // valid when kind == Discrete
  double value = 0.0;   // valid when kind == Numeric

  static EntityRef discrete(int id) { return {Kind::Discrete, id, 0.0}; }
  static EntityRef numeric(double v) { return {Kind::Numeric, -1, v}; }

  bool is_numeric() const { return kind == Kind::Numeric; }

  friend bool operator==(const EntityRef& a, const EntityRef& b) {
    if (a.kind != b.kind) return false;
    return a.is_numeric() ? a.value == b.value : a.entity_id == b.entity_id;
  }
};

struct Qualifier {
  int relation_id = -1;
  EntityRef value;

  friend bool operator==(const Qualifier& a, const Qualifier& b) {
    return a.relation_id == b.relation_id && a.value == b.value;
  }
};

struct PrimaryTriplet {
  EntityRef head;  // always discrete in a valid fact
  int relation_id = -1;
  EntityRef tail;

  friend bool operator==(const PrimaryTriplet& a, const PrimaryTriplet& b) {
    return a.head == b.head && a.relation_id == b.relation_id && a.tail == b.tail;
  }
};

// A primary triplet plus its qualifiers. Qualifiers are kept as an ordered
// list for reproducible batching; set semantics apply at equality and dedup.
struct HyperFact {
  PrimaryTriplet triplet;
  std::vector<Qualifier> qualifiers;
};

// Per-relation statistics over training values (raw, before normalization).
struct RelationStats {
  double min = 0.0;
  double max = 0.0;
  std::int64_t count = 0;
};

class Vocabulary {
 public:
  int add_entity(const std::string& name);
  int add_relation(const std::string& name);
  std::optional<int> entity_id(const std::string& name) const;
  std::optional<int> relation_id(const std::string& name) const;
  const std::string& entity_name(int id) const;
  const std::string& relation_name(int id) const;

  int num_entities() const { return static_cast<int>(entity_names_.size()); }
  int num_relations() const { return static_cast<int>(relation_names_.size()); }

  // Whether the relation ever carries a numeric value at a tail or
  // qualifier position (the R_D / R_N split).
  bool relation_is_numeric(int id) const { return relation_numeric_.at(static_cast<std::size_t>(id)); }
  void mark_relation_numeric(int id) { relation_numeric_.at(static_cast<std::size_t>(id)) = true; }
  int num_numeric_relations() const;

  const std::unordered_map<int, RelationStats>& relation_stats() const { return relation_stats_; }
  void set_relation_stats(std::unordered_map<int, RelationStats> stats) { relation_stats_ = std::move(stats); }

  // Text round-trip (names are whitespace-free by the fact-file grammar).
  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

 private:
  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, int> entity_ids_;
  std::unordered_map<std::string, int> relation_ids_;
  std::vector<bool> relation_numeric_;
  std::unordered_map<int, RelationStats> relation_stats_;
};

struct Dataset {
  Vocabulary vocabulary;
  std::vector<HyperFact> train;
  std::vector<HyperFact> valid;
  std::vector<HyperFact> test;
};

// Returns every violated invariant; empty means valid. Violations are data,
// not failures.
std::vector<std::string> validate_fact(const HyperFact& fact, const Vocabulary& vocab);

// Equality of facts with qualifiers compared as multisets.
bool facts_equal_mod_qualifier_order(const HyperFact& a, const HyperFact& b);

// Canonical text key of a fact (qualifiers sorted); equal keys <=> equal
// facts mod qualifier order. Used for dedup and filter sets.
std::string fact_key(const HyperFact& fact);

// Removes duplicate facts (mod qualifier order), preserving first occurrence
// order. Returns the number of duplicates dropped.
std::size_t dedup_facts(std::vector<HyperFact>& facts);

}  // namespace hynt
