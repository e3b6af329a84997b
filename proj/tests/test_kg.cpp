#include <doctest.h>

#include <algorithm>

#include "hynt/kg.hpp"

using namespace hynt;

namespace {

Vocabulary small_vocab(int entities, int relations) {
  Vocabulary v;
  for (int i = 0; i < entities; ++i) v.add_entity("e" + std::to_string(i));
  for (int i = 0; i < relations; ++i) v.add_relation("r" + std::to_string(i));
  return v;
}

HyperFact fact(int h, int r, EntityRef t, std::vector<Qualifier> qs = {}) {
  HyperFact f;
  f.triplet.head = EntityRef::discrete(h);
  f.triplet.relation_id = r;
  f.triplet.tail = t;
  f.qualifiers = std::move(qs);
  return f;
}

}  // namespace

TEST_CASE("vocabulary assigns stable ids and tracks numeric relations") {
  Vocabulary v;
  CHECK(v.add_entity("alice") == 0);
  CHECK(v.add_entity("bob") == 1);
  CHECK(v.add_entity("alice") == 0);  // idempotent
  CHECK(v.entity_id("bob").value() == 1);
  CHECK_FALSE(v.entity_id("carol").has_value());
  CHECK(v.entity_name(1) == "bob");

  CHECK(v.add_relation("born") == 0);
  CHECK(v.add_relation("spouse") == 1);
  CHECK_FALSE(v.relation_is_numeric(0));
  v.mark_relation_numeric(0);
  CHECK(v.relation_is_numeric(0));
  CHECK(v.num_numeric_relations() == 1);
}

TEST_CASE("validate_fact flags each violated invariant") {
  Vocabulary v = small_vocab(3, 2);

  SUBCASE("valid discrete fact") {
    auto f = fact(0, 1, EntityRef::discrete(2), {{0, EntityRef::numeric(3.5)}});
    CHECK(validate_fact(f, v).empty());
  }
  SUBCASE("numeric head is illegal") {
    HyperFact f = fact(0, 0, EntityRef::discrete(1));
    f.triplet.head = EntityRef::numeric(1.0);
    auto violations = validate_fact(f, v);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0] == "numeric entity at head position");
  }
  SUBCASE("out-of-range ids are reported per position") {
    auto f = fact(7, 9, EntityRef::discrete(-1), {{5, EntityRef::discrete(99)}});
    auto violations = validate_fact(f, v);
    CHECK(violations.size() == 5);
    CHECK(std::count(violations.begin(), violations.end(),
                     std::string("entity id out of range at head")) == 1);
    CHECK(std::count(violations.begin(), violations.end(),
                     std::string("relation id out of range at qualifier 0")) == 1);
  }
  SUBCASE("non-finite numeric values are invalid") {
    auto f = fact(0, 1, EntityRef::numeric(std::numeric_limits<double>::quiet_NaN()));
    auto violations = validate_fact(f, v);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0] == "non-finite numeric value at tail");
  }
}

TEST_CASE("fact equality ignores qualifier order but nothing else") {
  auto base = fact(0, 1, EntityRef::discrete(2),
                   {{0, EntityRef::discrete(1)}, {1, EntityRef::numeric(2.5)}});
  auto swapped = fact(0, 1, EntityRef::discrete(2),
                      {{1, EntityRef::numeric(2.5)}, {0, EntityRef::discrete(1)}});
  CHECK(facts_equal_mod_qualifier_order(base, swapped));
  CHECK(fact_key(base) == fact_key(swapped));

  auto different_value = fact(0, 1, EntityRef::discrete(2),
                              {{0, EntityRef::discrete(1)}, {1, EntityRef::numeric(2.6)}});
  CHECK_FALSE(facts_equal_mod_qualifier_order(base, different_value));
  CHECK(fact_key(base) != fact_key(different_value));

  auto different_tail = fact(0, 1, EntityRef::numeric(2.0));
  auto numeric_vs_discrete = fact(0, 1, EntityRef::discrete(2));
  CHECK_FALSE(facts_equal_mod_qualifier_order(different_tail, numeric_vs_discrete));

  // Multiset semantics: duplicated qualifiers are not collapsed.
  auto twice = fact(0, 1, EntityRef::discrete(2),
                    {{0, EntityRef::discrete(1)}, {0, EntityRef::discrete(1)}});
  auto once = fact(0, 1, EntityRef::discrete(2), {{0, EntityRef::discrete(1)}});
  CHECK_FALSE(facts_equal_mod_qualifier_order(twice, once));
}

TEST_CASE("fact equality is an equivalence relation on random facts") {
  // Reflexive + symmetric spot checks over a pile of random facts, including
  // shuffled-qualifier twins.
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    int k = static_cast<int>(rng.bounded(4));
    std::vector<Qualifier> qs;
    for (int i = 0; i < k; ++i) {
      if (rng.uniform01() < 0.5) {
        qs.push_back({static_cast<int>(rng.bounded(3)), EntityRef::discrete(static_cast<int>(rng.bounded(5)))});
      } else {
        qs.push_back({static_cast<int>(rng.bounded(3)), EntityRef::numeric(rng.uniform(0, 1))});
      }
    }
    auto f = fact(static_cast<int>(rng.bounded(5)), static_cast<int>(rng.bounded(3)),
                  EntityRef::discrete(static_cast<int>(rng.bounded(5))), qs);
    auto g = f;
    rng.shuffle(g.qualifiers);
    CHECK(facts_equal_mod_qualifier_order(f, f));
    CHECK(facts_equal_mod_qualifier_order(f, g));
    CHECK(facts_equal_mod_qualifier_order(g, f));
    CHECK(fact_key(f) == fact_key(g));
  }
}

TEST_CASE("dedup keeps first occurrences in order") {
  auto a = fact(0, 0, EntityRef::discrete(1));
  auto b = fact(0, 1, EntityRef::discrete(2), {{0, EntityRef::discrete(1)}, {1, EntityRef::numeric(3.0)}});
  auto b_shuffled = fact(0, 1, EntityRef::discrete(2),
                         {{1, EntityRef::numeric(3.0)}, {0, EntityRef::discrete(1)}});
  auto c = fact(2, 0, EntityRef::discrete(0));
  std::vector<HyperFact> facts = {a, b, b_shuffled, a, c};
  std::size_t dropped = dedup_facts(facts);
  CHECK(dropped == 2);
  REQUIRE(facts.size() == 3);
  CHECK(facts_equal_mod_qualifier_order(facts[0], a));
  CHECK(facts_equal_mod_qualifier_order(facts[1], b));
  CHECK(facts_equal_mod_qualifier_order(facts[2], c));
}
