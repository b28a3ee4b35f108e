#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mmrr/data/geometry.hpp"

namespace mmrr::eval {

struct ScoredBox {
  BoundingBox box;
  double confidence = 0.0;
};

// Candidate positions ordered by descending confidence; ties keep the
// original order.
inline std::vector<std::size_t> rank_order(const std::vector<ScoredBox>& preds) {
  std::vector<std::size_t> idx(preds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].confidence > preds[b].confidence; });
  return idx;
}

// True iff one of the k most confident predictions overlaps some gold box
// with IoU >= threshold.
inline bool hit_at_k(const std::vector<ScoredBox>& preds, const std::vector<BoundingBox>& gold, std::size_t k,
                     double threshold = kIouThreshold) {
  const auto order = rank_order(preds);
  const std::size_t n = std::min(k, order.size());
  for (std::size_t r = 0; r < n; ++r)
    for (const auto& g : gold)
      if (iou(preds[order[r]].box, g) >= threshold) return true;
  return false;
}

// Fraction of queries that are hits at k. Undefined (nullopt) without
// queries.
inline std::optional<double> recall_at_k(const std::vector<std::vector<ScoredBox>>& predictions,
                                         const std::vector<std::vector<BoundingBox>>& gold, std::size_t k,
                                         double threshold = kIouThreshold) {
  if (predictions.size() != gold.size())
    throw std::invalid_argument("recall_at_k: " + std::to_string(predictions.size()) + " prediction lists for " +
                                std::to_string(gold.size()) + " queries");
  if (k == 0) throw std::invalid_argument("recall_at_k: k must be positive");
  if (gold.empty()) return std::nullopt;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < gold.size(); ++q) {
    if (gold[q].empty()) throw std::invalid_argument("recall_at_k: query " + std::to_string(q) + " has no gold box");
    hits += hit_at_k(predictions[q], gold[q], k, threshold);
  }
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

struct ConfidenceStats {
  std::map<std::size_t, double> top;     // k -> mean of each list's k highest
  std::map<std::size_t, double> bottom;  // k -> mean of each list's k lowest
  double all = 0.0;
  std::vector<double> quantiles;  // min, 25%, median, 75%, max over all values
  std::size_t count = 0;
};

inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return 0.0;
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

// Means over the pooled Top-k / Bottom-k entries of every list and over all
// entries. k larger than a list uses the whole list.
inline ConfidenceStats confidence_stats(const std::vector<std::vector<double>>& lists,
                                        const std::vector<std::size_t>& ks) {
  ConfidenceStats s;
  std::vector<double> all;
  std::map<std::size_t, std::pair<double, std::size_t>> top, bottom;
  for (const auto& raw : lists) {
    for (double c : raw)
      if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("confidence_stats: confidence outside [0,1]");
    std::vector<double> v = raw;
    std::sort(v.begin(), v.end(), std::greater<>());
    for (std::size_t k : ks) {
      const std::size_t n = std::min(k, v.size());
      for (std::size_t i = 0; i < n; ++i) {
        top[k].first += v[i];
        bottom[k].first += v[v.size() - 1 - i];
      }
      top[k].second += n;
      bottom[k].second += n;
    }
    all.insert(all.end(), v.begin(), v.end());
  }
  for (std::size_t k : ks) {
    s.top[k] = top[k].second ? top[k].first / static_cast<double>(top[k].second) : 0.0;
    s.bottom[k] = bottom[k].second ? bottom[k].first / static_cast<double>(bottom[k].second) : 0.0;
  }
  s.count = all.size();
  if (!all.empty()) s.all = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
  std::sort(all.begin(), all.end());
  for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) s.quantiles.push_back(quantile_sorted(all, q));
  return s;
}

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single value
  std::size_t n = 0;
};

inline MeanSd mean_sd(const std::vector<double>& xs) {
  MeanSd r;
  r.n = xs.size();
  if (xs.empty()) return r;
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

inline double pooled_sd(const MeanSd& a, const MeanSd& b) {
  if (a.n + b.n <= 2) return 0.0;
  const double na = static_cast<double>(a.n), nb = static_cast<double>(b.n);
  return std::sqrt(((na - 1) * a.sd * a.sd + (nb - 1) * b.sd * b.sd) / (na + nb - 2));
}

}  // namespace mmrr::eval
