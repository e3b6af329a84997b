#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "hynt/eval.hpp"

using namespace hynt;

namespace {

HyperFact make_fact(int h, int r, EntityRef t, std::vector<Qualifier> quals = {}) {
  HyperFact f;
  f.triplet.head = EntityRef::discrete(h);
  f.triplet.relation_id = r;
  f.triplet.tail = t;
  f.qualifiers = std::move(quals);
  return f;
}

// Sort-based tie-splitting oracle: the rank of the gold is the average
// 1-based position of its score's block in the descending sort.
double sorted_rank_oracle(const std::vector<real>& scores, int gold,
                          const std::vector<char>* removed) {
  const real gs = scores[static_cast<std::size_t>(gold)];
  std::vector<real> surviving;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (static_cast<int>(i) != gold && removed && (*removed)[i]) continue;
    surviving.push_back(scores[i]);
  }
  std::sort(surviving.begin(), surviving.end(), std::greater<real>());
  std::size_t lo = 0;
  while (surviving[lo] != gs) ++lo;
  std::size_t hi = lo;
  while (hi + 1 < surviving.size() && surviving[hi + 1] == gs) ++hi;
  return (static_cast<double>(lo + 1) + static_cast<double>(hi + 1)) / 2.0;
}

}  // namespace

TEST_CASE("gold rank follows the tie-splitting rule") {
  CHECK(rank_with_ties({0.1, 0.9, 0.3}, 1, nullptr) == 1.0);
  CHECK(rank_with_ties({0.9, 0.9, 0.2}, 0, nullptr) == 1.5);
  CHECK(rank_with_ties({3, 2, 1}, 2, nullptr) == 3.0);
  CHECK(rank_with_ties({1, 1, 1, 1}, 0, nullptr) == 2.5);

  // Filtering a higher-scored competitor improves the rank; the gold's own
  // removal flag is ignored.
  std::vector<char> removed = {0, 1, 0};
  CHECK(rank_with_ties({0.5, 0.9, 0.3}, 0, nullptr) == 2.0);
  CHECK(rank_with_ties({0.5, 0.9, 0.3}, 0, &removed) == 1.0);
  std::vector<char> gold_marked = {1, 0, 0};
  CHECK(rank_with_ties({0.5, 0.9, 0.3}, 0, &gold_marked) == 2.0);

  CHECK_THROWS_AS(rank_with_ties({1, 2}, 5, nullptr), DataError);
  CHECK_THROWS_AS(rank_with_ties({1, 2}, -1, nullptr), DataError);
}

TEST_CASE("rank matches a sort-based oracle on randomized score vectors") {
  Rng rng(101);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng.bounded(40));
    std::vector<real> scores(static_cast<std::size_t>(n));
    // Draw from a coarse grid so exact ties actually occur.
    for (real& s : scores) s = static_cast<real>(rng.bounded(8)) / real(4);
    const int gold = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n)));
    std::vector<char> removed(static_cast<std::size_t>(n), 0);
    for (char& r : removed) r = rng.bounded(4) == 0 ? 1 : 0;

    CHECK(rank_with_ties(scores, gold, nullptr) == sorted_rank_oracle(scores, gold, nullptr));
    CHECK(rank_with_ties(scores, gold, &removed) == sorted_rank_oracle(scores, gold, &removed));

    // Score-monotone invariance: shifting every score leaves ranks alone.
    std::vector<real> shifted = scores;
    for (real& s : shifted) s += real(3.7);
    CHECK(rank_with_ties(shifted, gold, nullptr) == rank_with_ties(scores, gold, nullptr));

    // Filtering never hurts the gold.
    CHECK(rank_with_ties(scores, gold, &removed) <= rank_with_ties(scores, gold, nullptr));
  }
}

TEST_CASE("ranking metrics aggregate reciprocal ranks and hit rates") {
  RankingMetrics two = ranking_metrics({1.0, 4.0});
  CHECK(two.mrr == doctest::Approx(0.625));
  CHECK(two.hits1 == doctest::Approx(0.5));
  CHECK(two.hits3 == doctest::Approx(0.5));
  CHECK(two.hits10 == doctest::Approx(1.0));
  CHECK(two.count == 2);

  RankingMetrics beyond = ranking_metrics({11.0});
  CHECK(beyond.hits10 == 0.0);
  CHECK(beyond.mrr == doctest::Approx(1.0 / 11.0));

  RankingMetrics half = ranking_metrics({1.5});
  CHECK(half.hits1 == 0.0);
  CHECK(half.hits3 == 1.0);

  RankingMetrics perfect = ranking_metrics({1, 1, 1});
  CHECK(perfect.mrr == 1.0);
  CHECK(perfect.hits1 == 1.0);

  CHECK_THROWS_AS(ranking_metrics({}), DataError);
}

TEST_CASE("numeric metrics report normalized and per-attribute raw error") {
  NormalizationTable norm;
  norm.set(0, {0.0, 2.0, false});
  norm.set(1, {1.0, 246.0, false});

  NumericMetrics zero = numeric_metrics({0.5, 0.25}, {0.5, 0.25}, {0, 0}, norm);
  CHECK(zero.rmse_normalized == 0.0);
  CHECK(zero.per_relation_rmse_raw.at(0) == 0.0);

  // Errors 0.3 and 0.4 -> sqrt((0.09 + 0.16) / 2) = sqrt(0.125).
  NumericMetrics pair = numeric_metrics({0.3, 0.4}, {0.0, 0.0}, {0, 0}, norm);
  CHECK(std::abs(pair.rmse_normalized - 0.35355339059327376) < 1e-9);
  CHECK(pair.count == 2);
  CHECK(std::abs(pair.per_relation_rmse_raw.at(0) - 2.0 * 0.35355339059327376) < 1e-9);

  // Denormalization by the attribute span: min 1 / max 246 scales by 245.
  NumericMetrics scaled = numeric_metrics({0.6}, {0.5}, {1}, norm);
  CHECK(std::abs(scaled.per_relation_rmse_raw.at(1) - 0.1 * 245.0) < 1e-9);

  NumericMetrics mixed = numeric_metrics({0.3, 0.6}, {0.0, 0.5}, {0, 1}, norm);
  CHECK(mixed.per_relation_count.at(0) == 1);
  CHECK(mixed.per_relation_count.at(1) == 1);
  CHECK(std::abs(mixed.rmse_normalized - std::sqrt((0.09 + 0.01) / 2.0)) < 1e-12);

  CHECK_THROWS_AS(numeric_metrics({0.1}, {0.0}, {9}, norm), DataError);
  CHECK_THROWS_AS(numeric_metrics({0.1, 0.2}, {0.0}, {0}, norm), DataError);
}

TEST_CASE("query keys ignore qualifier order but track the open slot") {
  HyperFact a = make_fact(0, 1, EntityRef::discrete(2),
                          {{3, EntityRef::discrete(4)}, {5, EntityRef::numeric(0.25)}});
  HyperFact b = make_fact(0, 1, EntityRef::discrete(2),
                          {{5, EntityRef::numeric(0.25)}, {3, EntityRef::discrete(4)}});
  CHECK(query_key(a, {Slot::Head, -1}) == query_key(b, {Slot::Head, -1}));
  CHECK(query_key(a, {Slot::Tail, -1}) == query_key(b, {Slot::Tail, -1}));
  // The same qualifier masked at its two positions is the same question.
  CHECK(query_key(a, {Slot::QualifierValue, 0}) == query_key(b, {Slot::QualifierValue, 1}));
  // Different open slots are different questions.
  CHECK(query_key(a, {Slot::Head, -1}) != query_key(a, {Slot::Tail, -1}));
  CHECK(query_key(a, {Slot::QualifierValue, 0}) != query_key(a, {Slot::QualifierValue, 1}));
  CHECK_THROWS_AS(query_key(a, {Slot::QualifierValue, 7}), DataError);
}

TEST_CASE("the filter index collects known answers per query") {
  Dataset dataset;
  for (int i = 0; i < 6; ++i) dataset.vocabulary.add_entity("e" + std::to_string(i));
  for (int i = 0; i < 3; ++i) dataset.vocabulary.add_relation("r" + std::to_string(i));
  dataset.vocabulary.mark_relation_numeric(2);
  dataset.train.push_back(make_fact(0, 0, EntityRef::discrete(1)));
  dataset.valid.push_back(make_fact(0, 0, EntityRef::discrete(2)));
  dataset.test.push_back(make_fact(0, 1, EntityRef::discrete(1)));
  dataset.train.push_back(make_fact(3, 2, EntityRef::numeric(0.5)));

  FilterIndex index = FilterIndex::build(dataset);
  // (0, r0, ?) is answered by e1 (train) and e2 (valid).
  CHECK(index.known(dataset.train[0], {Slot::Tail, -1}) == std::vector<int>{1, 2});
  // (0, ?, e1) is answered by r0 and r1 across splits.
  CHECK(index.known(dataset.train[0], {Slot::TripletRelation, -1}) == std::vector<int>{0, 1});
  // (?, r0, e1) only by e0.
  CHECK(index.known(dataset.train[0], {Slot::Head, -1}) == std::vector<int>{0});
  // Numeric tails contribute no entity answers.
  CHECK(index.known(dataset.train[1], {Slot::Tail, -1}).empty());
}

TEST_CASE("evaluation covers every slot and honors scopes") {
  Dataset dataset;
  for (int i = 0; i < 6; ++i) dataset.vocabulary.add_entity("e" + std::to_string(i));
  for (int i = 0; i < 3; ++i) dataset.vocabulary.add_relation("r" + std::to_string(i));
  dataset.vocabulary.mark_relation_numeric(2);
  NormalizationTable norm;
  norm.set(2, {0.0, 1.0, false});
  norm.applied = true;

  dataset.train.push_back(make_fact(0, 0, EntityRef::discrete(1), {{1, EntityRef::discrete(2)}}));
  dataset.train.push_back(make_fact(2, 2, EntityRef::numeric(0.25)));
  dataset.valid.push_back(make_fact(3, 0, EntityRef::discrete(4)));
  dataset.test.push_back(make_fact(5, 0, EntityRef::discrete(1)));

  Rng rng(3);
  HyntConfig cfg;
  cfg.d = 8;
  cfg.context_layers = 1;
  cfg.context_heads = 2;
  cfg.prediction_layers = 1;
  cfg.prediction_heads = 2;
  cfg.dropout_rate = 0;
  Model model(cfg, dataset.vocabulary.num_entities(), dataset.vocabulary.num_relations(), rng);

  // Train split: fact 0 contributes head+tail+qualifier-value link queries
  // and triplet+qualifier relation queries; fact 1 contributes a head link
  // query, a relation query, and one numeric (tail) query.
  EvalReport train_report = evaluate(model, dataset.train, nullptr, norm, 3);
  CHECK(train_report.mode == RankMode::Raw);
  CHECK(train_report.link_all.count == 4);
  CHECK(train_report.link_tri.count == 3);
  CHECK(train_report.relation_all.count == 3);
  CHECK(train_report.relation_tri.count == 2);
  CHECK(train_report.numeric_all.count == 1);
  CHECK(train_report.numeric_tri.count == 1);
  CHECK(train_report.numeric_all.per_relation_count.at(2) == 1);

  // A zero-qualifier split: both scopes see exactly the same queries.
  EvalReport test_report = evaluate(model, dataset.test, nullptr, norm, 7);
  CHECK(test_report.link_tri.count == test_report.link_all.count);
  CHECK(test_report.link_tri.mrr == test_report.link_all.mrr);
  CHECK(test_report.relation_tri.mrr == test_report.relation_all.mrr);
  CHECK(test_report.numeric_all.count == 0);

  // Deterministic: the same evaluation twice is bitwise identical.
  EvalReport again = evaluate(model, dataset.train, nullptr, norm, 3);
  CHECK(again.link_all.mrr == train_report.link_all.mrr);
  CHECK(again.numeric_all.rmse_normalized == train_report.numeric_all.rmse_normalized);

  // Filtering removes known competitors, so MRR can only improve.
  FilterIndex filters = FilterIndex::build(dataset);
  EvalReport filtered = evaluate(model, dataset.valid, &filters, norm, 3);
  EvalReport raw = evaluate(model, dataset.valid, nullptr, norm, 3);
  CHECK(filtered.mode == RankMode::Filtered);
  CHECK(filtered.link_all.mrr >= raw.link_all.mrr);
  CHECK(filtered.relation_all.mrr >= raw.relation_all.mrr);

  std::ostringstream csv;
  write_report_csv(csv, train_report, dataset.vocabulary);
  CHECK(csv.str().rfind("family,scope,metric,value,count\n", 0) == 0);
  CHECK(csv.str().find("link,tri,mrr,") != std::string::npos);
  CHECK(csv.str().find("numeric_attribute,all,r2,") != std::string::npos);

  std::ostringstream text;
  write_report_text(text, train_report, dataset.vocabulary);
  CHECK(text.str().find("MRR") != std::string::npos);
  CHECK(text.str().find("RMSE") != std::string::npos);
}
