#include "hynt/kg.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

namespace hynt {

int Vocabulary::add_entity(const std::string& name) {
  auto it = entity_ids_.find(name);
  if (it != entity_ids_.end()) return it->second;
  int id = static_cast<int>(entity_names_.size());
  entity_names_.push_back(name);
  entity_ids_.emplace(name, id);
  return id;
}

int Vocabulary::add_relation(const std::string& name) {
  auto it = relation_ids_.find(name);
  if (it != relation_ids_.end()) return it->second;
  int id = static_cast<int>(relation_names_.size());
  relation_names_.push_back(name);
  relation_ids_.emplace(name, id);
  relation_numeric_.push_back(false);
  return id;
}

std::optional<int> Vocabulary::entity_id(const std::string& name) const {
  auto it = entity_ids_.find(name);
  if (it == entity_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> Vocabulary::relation_id(const std::string& name) const {
  auto it = relation_ids_.find(name);
  if (it == relation_ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::entity_name(int id) const {
  return entity_names_.at(static_cast<std::size_t>(id));
}

const std::string& Vocabulary::relation_name(int id) const {
  return relation_names_.at(static_cast<std::size_t>(id));
}

int Vocabulary::num_numeric_relations() const {
  return static_cast<int>(std::count(relation_numeric_.begin(), relation_numeric_.end(), true));
}

void Vocabulary::save(std::ostream& out) const {
  out << "entities " << entity_names_.size() << "\n";
  for (const std::string& name : entity_names_) out << name << "\n";
  out << "relations " << relation_names_.size() << "\n";
  for (std::size_t i = 0; i < relation_names_.size(); ++i) {
    out << relation_names_[i] << ' ' << (relation_numeric_[i] ? "numeric" : "discrete") << "\n";
  }
}

Vocabulary Vocabulary::load(std::istream& in) {
  Vocabulary vocab;
  std::string tag;
  std::size_t count = 0;
  if (!(in >> tag >> count) || tag != "entities")
    throw DataError("vocabulary file: expected 'entities <count>'");
  for (std::size_t i = 0; i < count; ++i) {
    std::string name;
    if (!(in >> name)) throw DataError("vocabulary file: truncated entity list");
    vocab.add_entity(name);
  }
  if (!(in >> tag >> count) || tag != "relations")
    throw DataError("vocabulary file: expected 'relations <count>'");
  for (std::size_t i = 0; i < count; ++i) {
    std::string name, kind;
    if (!(in >> name >> kind)) throw DataError("vocabulary file: truncated relation list");
    int id = vocab.add_relation(name);
    if (kind == "numeric") {
      vocab.mark_relation_numeric(id);
    } else if (kind != "discrete") {
      throw DataError("vocabulary file: bad relation kind '" + kind + "'");
    }
  }
  return vocab;
}

namespace {

void check_entity(const EntityRef& e, const Vocabulary& vocab, const char* where,
                  std::vector<std::string>& out) {
  if (e.is_numeric()) {
    if (!std::isfinite(e.value)) out.push_back(std::string("non-finite numeric value at ") + where);
  } else {
    if (e.entity_id < 0 || e.entity_id >= vocab.num_entities())
      out.push_back(std::string("entity id out of range at ") + where);
  }
}

void check_relation(int id, const Vocabulary& vocab, const char* where, std::vector<std::string>& out) {
  if (id < 0 || id >= vocab.num_relations())
    out.push_back(std::string("relation id out of range at ") + where);
}

}  // namespace

std::vector<std::string> validate_fact(const HyperFact& fact, const Vocabulary& vocab) {
  std::vector<std::string> violations;
  if (fact.triplet.head.is_numeric()) {
    violations.push_back("numeric entity at head position");
    if (!std::isfinite(fact.triplet.head.value))
      violations.push_back("non-finite numeric value at head");
  } else {
    check_entity(fact.triplet.head, vocab, "head", violations);
  }
  check_relation(fact.triplet.relation_id, vocab, "triplet relation", violations);
  check_entity(fact.triplet.tail, vocab, "tail", violations);
  for (std::size_t i = 0; i < fact.qualifiers.size(); ++i) {
    std::string where = "qualifier " + std::to_string(i);
    const Qualifier& q = fact.qualifiers[i];
    if (q.relation_id < 0 || q.relation_id >= vocab.num_relations())
      violations.push_back("relation id out of range at " + where);
    check_entity(q.value, vocab, where.c_str(), violations);
  }
  return violations;
}

namespace {

// Strict weak order over qualifiers for multiset comparison.
bool qualifier_less(const Qualifier& a, const Qualifier& b) {
  if (a.relation_id != b.relation_id) return a.relation_id < b.relation_id;
  if (a.value.kind != b.value.kind) return a.value.kind < b.value.kind;
  if (a.value.is_numeric()) return a.value.value < b.value.value;
  return a.value.entity_id < b.value.entity_id;
}

std::vector<Qualifier> sorted_qualifiers(const HyperFact& f) {
  std::vector<Qualifier> qs = f.qualifiers;
  std::sort(qs.begin(), qs.end(), qualifier_less);
  return qs;
}

}  // namespace

bool facts_equal_mod_qualifier_order(const HyperFact& a, const HyperFact& b) {
  if (!(a.triplet == b.triplet)) return false;
  if (a.qualifiers.size() != b.qualifiers.size()) return false;
  return sorted_qualifiers(a) == sorted_qualifiers(b);
}

namespace {

void append_entity_key(const EntityRef& e, std::string& out) {
  char buf[48];
  if (e.is_numeric()) {
    std::snprintf(buf, sizeof(buf), "#%.17g", e.value);
  } else {
    std::snprintf(buf, sizeof(buf), "e%d", e.entity_id);
  }
  out += buf;
}

}  // namespace

std::string fact_key(const HyperFact& fact) {
  std::string key;
  append_entity_key(fact.triplet.head, key);
  key += '|';
  key += std::to_string(fact.triplet.relation_id);
  key += '|';
  append_entity_key(fact.triplet.tail, key);
  for (const Qualifier& q : sorted_qualifiers(fact)) {
    key += '|';
    key += std::to_string(q.relation_id);
    key += ':';
    append_entity_key(q.value, key);
  }
  return key;
}

std::size_t dedup_facts(std::vector<HyperFact>& facts) {
  std::unordered_set<std::string> seen;
  std::vector<HyperFact> unique;
  unique.reserve(facts.size());
  for (auto& f : facts) {
    if (seen.insert(fact_key(f)).second) unique.push_back(std::move(f));
  }
  std::size_t dropped = facts.size() - unique.size();
  facts = std::move(unique);
  return dropped;
}

}  // namespace hynt
