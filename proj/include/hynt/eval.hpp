#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "hynt/ingest.hpp"
#include "hynt/kg.hpp"
#include "hynt/model.hpp"

namespace hynt {

enum class RankMode { Raw, Filtered };

// Rank of the gold candidate with tie-splitting: 1 + (strictly higher) +
// 0.5 * (exact ties among the other candidates). removed marks candidates
// dropped by the filtered protocol; the gold's own flag is ignored so a gold
// can never filter itself out.
double rank_with_ties(const std::vector<real>& scores, int gold, const std::vector<char>* removed);

struct RankingMetrics {
  double mrr = 0;
  double hits1 = 0;
  double hits3 = 0;
  double hits10 = 0;
  std::int64_t count = 0;
};

// Aggregates stored ranks; empty input is an error (an empty category in a
// report is represented by count == 0 instead).
RankingMetrics ranking_metrics(const std::vector<double>& ranks);

struct NumericMetrics {
  double rmse_normalized = 0;  // global, in normalized value space
  std::int64_t count = 0;
  // Per attribute (relation id), reported in raw units via the table's span.
  std::map<int, double> per_relation_rmse_raw;
  std::map<int, std::int64_t> per_relation_count;
};

// Predictions and golds live in normalized space; each pair carries the
// relation naming its attribute. The global RMSE stays normalized while the
// per-attribute figures are scaled back to raw units (a min-max map is
// affine, so raw error = span * normalized error). A relation missing from
// the table is a DataError.
NumericMetrics numeric_metrics(const std::vector<double>& predictions,
                               const std::vector<double>& golds,
                               const std::vector<int>& relations,
                               const NormalizationTable& norm);

// Canonical text key of a fact with one slot knocked out; two queries share
// a key exactly when they ask the same question (qualifier order ignored).
// Filter sets group known-true answers by this key.
std::string query_key(const HyperFact& fact, const MaskSpec& mask);

// Known-true answers per query key across train, valid, and test; backs the
// filtered ranking protocol.
class FilterIndex {
 public:
  static FilterIndex build(const Dataset& dataset);

  // Sorted unique candidate ids recorded for this query (entity ids for
  // entity slots, relation ids for relation slots); empty if none.
  const std::vector<int>& known(const HyperFact& fact, const MaskSpec& mask) const;

 private:
  std::unordered_map<std::string, std::vector<int>> known_;
  std::vector<int> empty_;
};

struct EvalReport {
  RankMode mode = RankMode::Filtered;
  // Tri = primary-triplet slots only; All adds the qualifier slots.
  RankingMetrics link_tri, link_all;      // discrete-entity slots
  RankingMetrics relation_tri, relation_all;
  NumericMetrics numeric_tri, numeric_all;
};

// Scores every maskable slot of every fact (link queries only where the gold
// is a discrete entity) and aggregates both scopes. filters == nullptr runs
// the raw protocol.
EvalReport evaluate(const Model& model, const std::vector<HyperFact>& facts,
                    const FilterIndex* filters, const NormalizationTable& norm,
                    int batch_size = 512);

// Which scope rows the report writers emit; Tri restricts the output to
// primary-triplet queries, Both prints the full report.
enum class ReportScope { Tri, All, Both };

void write_report_csv(std::ostream& out, const EvalReport& report, const Vocabulary& vocab,
                      ReportScope scope = ReportScope::Both);
void write_report_text(std::ostream& out, const EvalReport& report, const Vocabulary& vocab,
                       ReportScope scope = ReportScope::Both);

}  // namespace hynt
