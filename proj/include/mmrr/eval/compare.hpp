#pragma once

#include <string>
#include <vector>

#include "mmrr/eval/evaluator.hpp"

namespace mmrr::eval {

// Reports are comparable when they list the same (relation, category, k)
// rows in the same order.
inline void check_compatible(const EvalReport& a, const EvalReport& b, const std::string& what) {
  if (a.rows.size() != b.rows.size())
    throw ReportError(what + ": " + std::to_string(b.rows.size()) + " rows vs " + std::to_string(a.rows.size()));
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& x = a.rows[i];
    const auto& y = b.rows[i];
    if (x.relation != y.relation || x.category != y.category || x.k != y.k)
      throw ReportError(what + ": row " + std::to_string(i) + " is " + y.relation + "/" + y.category + "/R@" +
                        std::to_string(y.k) + ", expected " + x.relation + "/" + x.category + "/R@" +
                        std::to_string(x.k));
  }
}

// Row-wise mean recall over reports (e.g. seeds); a row is absent only if
// it is absent everywhere. Counts come from the first report.
inline EvalReport average_reports(const std::vector<EvalReport>& reps) {
  if (reps.empty()) throw ReportError("average_reports: no reports");
  EvalReport out;
  out.config = reps.front().config;
  out.rows = reps.front().rows;
  for (std::size_t i = 1; i < reps.size(); ++i) check_compatible(reps.front(), reps[i], "report " + std::to_string(i));
  for (std::size_t r = 0; r < out.rows.size(); ++r) {
    std::vector<double> vals;
    for (const auto& rep : reps)
      if (rep.rows[r].recall) vals.push_back(*rep.rows[r].recall);
    out.rows[r].recall = vals.empty() ? std::nullopt : std::optional<double>(mean_sd(vals).mean);
  }
  return out;
}

struct DeltaRow {
  std::string relation;
  std::string category;
  std::size_t k = 1;
  std::optional<double> baseline;
  std::vector<std::optional<double>> values;  // per compared report
  std::vector<std::optional<double>> deltas;  // value - baseline
};

inline std::vector<DeltaRow> compare_reports(const EvalReport& baseline, const std::vector<EvalReport>& others) {
  for (std::size_t i = 0; i < others.size(); ++i) check_compatible(baseline, others[i], "report " + std::to_string(i));
  std::vector<DeltaRow> out;
  for (std::size_t r = 0; r < baseline.rows.size(); ++r) {
    const auto& b = baseline.rows[r];
    DeltaRow d{b.relation, b.category, b.k, b.recall, {}, {}};
    for (const auto& o : others) {
      const auto& v = o.rows[r].recall;
      d.values.push_back(v);
      d.deltas.push_back(v && b.recall ? std::optional<double>(*v - *b.recall) : std::nullopt);
    }
    out.push_back(std::move(d));
  }
  return out;
}

// "+" improvement, "-" deterioration, "=" unchanged, " " undefined.
inline char delta_mark(const std::optional<double>& d) {
  if (!d) return ' ';
  return *d > 0 ? '+' : (*d < 0 ? '-' : '=');
}

}  // namespace mmrr::eval
