#include "hynt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace hynt {

double rank_with_ties(const std::vector<real>& scores, int gold,
                      const std::vector<char>* removed) {
  if (gold < 0 || gold >= static_cast<int>(scores.size())) {
    throw DataError("rank: gold candidate " + std::to_string(gold) + " outside the score vector");
  }
  const real gold_score = scores[static_cast<std::size_t>(gold)];
  std::int64_t higher = 0;
  std::int64_t ties = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (static_cast<int>(i) == gold) continue;
    if (removed && (*removed)[i]) continue;
    if (scores[i] > gold_score) {
      ++higher;
    } else if (scores[i] == gold_score) {
      ++ties;
    }
  }
  return 1.0 + static_cast<double>(higher) + 0.5 * static_cast<double>(ties);
}

RankingMetrics ranking_metrics(const std::vector<double>& ranks) {
  if (ranks.empty()) throw DataError("ranking metrics over an empty query set");
  RankingMetrics m;
  m.count = static_cast<std::int64_t>(ranks.size());
  for (double r : ranks) {
    m.mrr += 1.0 / r;
    m.hits1 += r <= 1.0 ? 1.0 : 0.0;
    m.hits3 += r <= 3.0 ? 1.0 : 0.0;
    m.hits10 += r <= 10.0 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(m.count);
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

namespace {

void append_entity_token(const EntityRef& e, std::string& out) {
  char buf[48];
  if (e.is_numeric()) {
    std::snprintf(buf, sizeof(buf), "#%.17g", e.value);
  } else {
    std::snprintf(buf, sizeof(buf), "e%d", e.entity_id);
  }
  out += buf;
}

}  // namespace

std::string query_key(const HyperFact& fact, const MaskSpec& mask) {
  slot_kind_of(fact, mask);  // validates the slot exists
  std::string key;
  if (mask.slot == Slot::Head) {
    key += '?';
  } else {
    append_entity_token(fact.triplet.head, key);
  }
  key += '|';
  if (mask.slot == Slot::TripletRelation) {
    key += '?';
  } else {
    key += std::to_string(fact.triplet.relation_id);
  }
  key += '|';
  if (mask.slot == Slot::Tail) {
    key += '?';
  } else {
    append_entity_token(fact.triplet.tail, key);
  }
  // Qualifier strings are built with the substitution applied, then sorted, so
  // the key ignores qualifier order while still marking which one is open.
  std::vector<std::string> quals;
  quals.reserve(fact.qualifiers.size());
  for (int j = 0; j < static_cast<int>(fact.qualifiers.size()); ++j) {
    const Qualifier& q = fact.qualifiers[static_cast<std::size_t>(j)];
    std::string part;
    if (mask.slot == Slot::QualifierRelation && mask.qualifier_index == j) {
      part += '?';
    } else {
      part += std::to_string(q.relation_id);
    }
    part += ':';
    if (mask.slot == Slot::QualifierValue && mask.qualifier_index == j) {
      part += '?';
    } else {
      append_entity_token(q.value, part);
    }
    quals.push_back(std::move(part));
  }
  std::sort(quals.begin(), quals.end());
  for (const std::string& part : quals) {
    key += '|';
    key += part;
  }
  return key;
}

FilterIndex FilterIndex::build(const Dataset& dataset) {
  FilterIndex index;
  auto record = [&](const HyperFact& fact) {
    auto add = [&](const MaskSpec& mask, int gold) {
      index.known_[query_key(fact, mask)].push_back(gold);
    };
    add({Slot::Head, -1}, fact.triplet.head.entity_id);
    add({Slot::TripletRelation, -1}, fact.triplet.relation_id);
    if (!fact.triplet.tail.is_numeric()) {
      add({Slot::Tail, -1}, fact.triplet.tail.entity_id);
    }
    for (int j = 0; j < static_cast<int>(fact.qualifiers.size()); ++j) {
      const Qualifier& q = fact.qualifiers[static_cast<std::size_t>(j)];
      add({Slot::QualifierRelation, j}, q.relation_id);
      if (!q.value.is_numeric()) {
        add({Slot::QualifierValue, j}, q.value.entity_id);
      }
    }
  };
  for (const HyperFact& f : dataset.train) record(f);
  for (const HyperFact& f : dataset.valid) record(f);
  for (const HyperFact& f : dataset.test) record(f);
  for (auto& [key, ids] : index.known_) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  }
  return index;
}

const std::vector<int>& FilterIndex::known(const HyperFact& fact, const MaskSpec& mask) const {
  auto it = known_.find(query_key(fact, mask));
  return it == known_.end() ? empty_ : it->second;
}

NumericMetrics numeric_metrics(const std::vector<double>& predictions,
                               const std::vector<double>& golds,
                               const std::vector<int>& relations,
                               const NormalizationTable& norm) {
  if (predictions.size() != golds.size() || predictions.size() != relations.size()) {
    throw DataError("numeric metrics: predictions, golds, and relations must align");
  }
  NumericMetrics m;
  m.count = static_cast<std::int64_t>(predictions.size());
  double sq = 0;
  std::map<int, double> sq_by_rel;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int rel = relations[i];
    if (!norm.has(rel)) {
      throw DataError("numeric metrics: relation " + std::to_string(rel) +
                      " has no normalization range");
    }
    const double err = predictions[i] - golds[i];
    sq += err * err;
    sq_by_rel[rel] += err * err;
    ++m.per_relation_count[rel];
  }
  if (m.count > 0) m.rmse_normalized = std::sqrt(sq / static_cast<double>(m.count));
  for (const auto& [rel, s] : sq_by_rel) {
    m.per_relation_rmse_raw[rel] =
        std::sqrt(s / static_cast<double>(m.per_relation_count.at(rel))) * norm.span(rel);
  }
  return m;
}

namespace {

struct QueryAccumulator {
  std::vector<double> link_tri, link_all;
  std::vector<double> rel_tri, rel_all;
  // Normalized predictions and golds with their relations, per scope.
  std::vector<double> pred_tri, gold_tri, pred_all, gold_all;
  std::vector<int> rel_of_tri, rel_of_all;
};

RankingMetrics finish_ranks(const std::vector<double>& ranks) {
  return ranks.empty() ? RankingMetrics{} : ranking_metrics(ranks);
}

bool is_triplet_slot(const MaskSpec& mask) {
  return mask.slot == Slot::Head || mask.slot == Slot::TripletRelation || mask.slot == Slot::Tail;
}

}  // namespace

EvalReport evaluate(const Model& model, const std::vector<HyperFact>& facts,
                    const FilterIndex* filters, const NormalizationTable& norm, int batch_size) {
  if (batch_size <= 0) throw ConfigError("evaluation batch size must be positive");
  NoGradGuard guard;
  QueryAccumulator acc;

  std::vector<const HyperFact*> batch_facts;
  std::vector<MaskSpec> batch_masks;
  batch_facts.reserve(static_cast<std::size_t>(batch_size));
  batch_masks.reserve(static_cast<std::size_t>(batch_size));

  auto flush = [&]() {
    if (batch_facts.empty()) return;
    ForwardOutputs out = model.forward_batch(batch_facts, batch_masks, /*train=*/false, nullptr);

    for (std::size_t c = 0; c < out.entity_batch_index.size(); ++c) {
      const int i = out.entity_batch_index[c];
      const HyperFact& fact = *batch_facts[static_cast<std::size_t>(i)];
      const MaskSpec& mask = batch_masks[static_cast<std::size_t>(i)];
      const EntityRef& gold_ref =
          mask.slot == Slot::Head
              ? fact.triplet.head
              : (mask.slot == Slot::Tail
                     ? fact.triplet.tail
                     : fact.qualifiers[static_cast<std::size_t>(mask.qualifier_index)].value);
      const int gold = gold_ref.entity_id;
      std::vector<real> scores(static_cast<std::size_t>(out.entity_logits.rows()));
      for (int row = 0; row < out.entity_logits.rows(); ++row) {
        scores[static_cast<std::size_t>(row)] = out.entity_logits.at(row, static_cast<int>(c));
      }
      double rank;
      if (filters) {
        std::vector<char> removed(scores.size(), 0);
        for (int id : filters->known(fact, mask)) {
          if (id != gold) removed[static_cast<std::size_t>(id)] = 1;
        }
        rank = rank_with_ties(scores, gold, &removed);
      } else {
        rank = rank_with_ties(scores, gold, nullptr);
      }
      acc.link_all.push_back(rank);
      if (is_triplet_slot(mask)) acc.link_tri.push_back(rank);
    }

    for (std::size_t c = 0; c < out.relation_batch_index.size(); ++c) {
      const int i = out.relation_batch_index[c];
      const HyperFact& fact = *batch_facts[static_cast<std::size_t>(i)];
      const MaskSpec& mask = batch_masks[static_cast<std::size_t>(i)];
      const int gold =
          mask.slot == Slot::TripletRelation
              ? fact.triplet.relation_id
              : fact.qualifiers[static_cast<std::size_t>(mask.qualifier_index)].relation_id;
      std::vector<real> scores(static_cast<std::size_t>(out.relation_logits.rows()));
      for (int row = 0; row < out.relation_logits.rows(); ++row) {
        scores[static_cast<std::size_t>(row)] = out.relation_logits.at(row, static_cast<int>(c));
      }
      double rank;
      if (filters) {
        std::vector<char> removed(scores.size(), 0);
        for (int id : filters->known(fact, mask)) {
          if (id != gold) removed[static_cast<std::size_t>(id)] = 1;
        }
        rank = rank_with_ties(scores, gold, &removed);
      } else {
        rank = rank_with_ties(scores, gold, nullptr);
      }
      acc.rel_all.push_back(rank);
      if (is_triplet_slot(mask)) acc.rel_tri.push_back(rank);
    }

    for (std::size_t c = 0; c < out.numeric_batch_index.size(); ++c) {
      const int i = out.numeric_batch_index[c];
      const HyperFact& fact = *batch_facts[static_cast<std::size_t>(i)];
      const MaskSpec& mask = batch_masks[static_cast<std::size_t>(i)];
      const double gold =
          mask.slot == Slot::Tail
              ? fact.triplet.tail.value
              : fact.qualifiers[static_cast<std::size_t>(mask.qualifier_index)].value.value;
      const double pred = static_cast<double>(out.numeric_pred.at(0, static_cast<int>(c)));
      const int rel = out.numeric_relation[c];
      acc.pred_all.push_back(pred);
      acc.gold_all.push_back(gold);
      acc.rel_of_all.push_back(rel);
      if (is_triplet_slot(mask)) {
        acc.pred_tri.push_back(pred);
        acc.gold_tri.push_back(gold);
        acc.rel_of_tri.push_back(rel);
      }
    }

    batch_facts.clear();
    batch_masks.clear();
  };

  auto push = [&](const HyperFact& fact, MaskSpec mask) {
    batch_facts.push_back(&fact);
    batch_masks.push_back(mask);
    if (static_cast<int>(batch_facts.size()) >= batch_size) flush();
  };

  for (const HyperFact& fact : facts) {
    push(fact, {Slot::Head, -1});
    push(fact, {Slot::TripletRelation, -1});
    push(fact, {Slot::Tail, -1});
    for (int j = 0; j < static_cast<int>(fact.qualifiers.size()); ++j) {
      push(fact, {Slot::QualifierRelation, j});
      push(fact, {Slot::QualifierValue, j});
    }
  }
  flush();

  EvalReport report;
  report.mode = filters ? RankMode::Filtered : RankMode::Raw;
  report.link_tri = finish_ranks(acc.link_tri);
  report.link_all = finish_ranks(acc.link_all);
  report.relation_tri = finish_ranks(acc.rel_tri);
  report.relation_all = finish_ranks(acc.rel_all);
  report.numeric_tri = numeric_metrics(acc.pred_tri, acc.gold_tri, acc.rel_of_tri, norm);
  report.numeric_all = numeric_metrics(acc.pred_all, acc.gold_all, acc.rel_of_all, norm);
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void csv_ranking(std::ostream& out, const char* family, const char* scope,
                 const RankingMetrics& m) {
  out << family << "," << scope << ",mrr," << (m.count ? fmt(m.mrr) : "") << "," << m.count << "\n";
  out << family << "," << scope << ",hits1," << (m.count ? fmt(m.hits1) : "") << "," << m.count
      << "\n";
  out << family << "," << scope << ",hits3," << (m.count ? fmt(m.hits3) : "") << "," << m.count
      << "\n";
  out << family << "," << scope << ",hits10," << (m.count ? fmt(m.hits10) : "") << "," << m.count
      << "\n";
}

}  // namespace

void write_report_csv(std::ostream& out, const EvalReport& report, const Vocabulary& vocab,
                      ReportScope scope) {
  const bool tri = scope != ReportScope::All;
  const bool all = scope != ReportScope::Tri;
  out << "family,scope,metric,value,count\n";
  if (tri) csv_ranking(out, "link", "tri", report.link_tri);
  if (all) csv_ranking(out, "link", "all", report.link_all);
  if (tri) csv_ranking(out, "relation", "tri", report.relation_tri);
  if (all) csv_ranking(out, "relation", "all", report.relation_all);
  auto csv_numeric = [&](const char* label, const NumericMetrics& m) {
    out << "numeric," << label << ",rmse_normalized," << (m.count ? fmt(m.rmse_normalized) : "")
        << "," << m.count << "\n";
    for (const auto& [rel, rmse] : m.per_relation_rmse_raw) {
      out << "numeric_attribute," << label << "," << vocab.relation_name(rel) << "," << fmt(rmse)
          << "," << m.per_relation_count.at(rel) << "\n";
    }
  };
  if (tri) csv_numeric("tri", report.numeric_tri);
  if (all) csv_numeric("all", report.numeric_all);
}

void write_report_text(std::ostream& out, const EvalReport& report, const Vocabulary& vocab,
                       ReportScope scope) {
  const bool tri = scope != ReportScope::All;
  const bool all = scope != ReportScope::Tri;
  out << "protocol: " << (report.mode == RankMode::Filtered ? "filtered" : "raw") << "\n\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %-5s %10s %10s %10s %10s %10s\n", "task", "scope",
                "MRR", "Hits@1", "Hits@3", "Hits@10", "queries");
  out << line;
  auto row = [&](const char* family, const char* label, const RankingMetrics& m) {
    if (m.count == 0) {
      std::snprintf(line, sizeof(line), "%-10s %-5s %10s %10s %10s %10s %10s\n", family, label,
                    "-", "-", "-", "-", "0");
    } else {
      std::snprintf(line, sizeof(line), "%-10s %-5s %10.4f %10.4f %10.4f %10.4f %10lld\n", family,
                    label, m.mrr, m.hits1, m.hits3, m.hits10, static_cast<long long>(m.count));
    }
    out << line;
  };
  if (tri) row("link", "tri", report.link_tri);
  if (all) row("link", "all", report.link_all);
  if (tri) row("relation", "tri", report.relation_tri);
  if (all) row("relation", "all", report.relation_all);

  out << "\n";
  auto numeric_block = [&](const char* label, const NumericMetrics& m) {
    if (m.count == 0) {
      out << "numeric    " << label << "   (no numeric queries)\n";
      return;
    }
    std::snprintf(line, sizeof(line), "%-10s %-5s RMSE(normalized) %10.6f  over %lld queries\n",
                  "numeric", label, m.rmse_normalized, static_cast<long long>(m.count));
    out << line;
    for (const auto& [rel, rmse] : m.per_relation_rmse_raw) {
      std::snprintf(line, sizeof(line), "    %-24s RMSE(raw) %12.6f  (%lld)\n",
                    vocab.relation_name(rel).c_str(), rmse,
                    static_cast<long long>(m.per_relation_count.at(rel)));
      out << line;
    }
  };
  if (tri) numeric_block("tri", report.numeric_tri);
  if (all) numeric_block("all", report.numeric_all);
}

}  // namespace hynt
