#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmrr/data/instances.hpp"
#include "mmrr/data/labels.hpp"
#include "mmrr/model/parameters.hpp"
#include "mmrr/numerics/ops.hpp"

// Per-relation similarity heads. Each relation l has its own linear
// expansion of the mention (and object) embeddings; S_l / U_l are the
// pairwise dot products of the expanded rows. Mentions are represented by
// the row of their first subword.
namespace mmrr::model {

// One matrix per relation; labels that were not computed hold an empty Var.
template <class T>
using LabelStack = PerLabel<num::Var<T>>;

template <class T>
struct SimilarityStack {
  LabelStack<T> matrices;
};

template <class T>
struct TrrHeadWeights {
  PerLabel<num::Var<T>> w_t1;       // d_T x d_T per relation
  PerLabel<num::Var<T>> null_embed;  // 1 x d_T per relation: the "no antecedent" column

  static TrrHeadWeights make(ParameterStore<T>& store, std::size_t d_text, num::Rng& rng) {
    TrrHeadWeights w;
    for (auto l : kAllLabels)
      w.w_t1[index_of(l)] = store.weight("trr.w_t1." + std::string(label_name_id(l)), d_text, d_text, rng);
    for (auto l : kAllLabels)
      w.null_embed[index_of(l)] = store.weight("trr.null." + std::string(label_name_id(l)), 1, d_text, rng);
    return w;
  }

  // Identifier-safe label names for parameter manifests.
  static std::string_view label_name_id(RelationLabel l) {
    return l == RelationLabel::kDirect ? std::string_view("DIRECT") : label_name(l);
  }
};

template <class T>
struct MrrHeadWeights {
  PerLabel<num::Var<T>> w_t2;  // d_S x d_S per relation
  PerLabel<num::Var<T>> w_o;   // d_S x d_S per relation

  static MrrHeadWeights make(ParameterStore<T>& store, std::size_t d_shared, num::Rng& rng) {
    MrrHeadWeights w;
    for (auto l : kAllLabels)
      w.w_t2[index_of(l)] = store.weight(
          "mrr.w_t2." + std::string(TrrHeadWeights<T>::label_name_id(l)), d_shared, d_shared, rng);
    for (auto l : kAllLabels)
      w.w_o[index_of(l)] = store.weight(
          "mrr.w_o." + std::string(TrrHeadWeights<T>::label_name_id(l)), d_shared, d_shared, rng);
    return w;
  }
};

// T_hat_l = T' W_T1[l]
template <class T>
LabelStack<T> trr_expand(const num::Var<T>& text, const TrrHeadWeights<T>& w,
                         const LabelSet& labels = LabelSet::all()) {
  LabelStack<T> out;
  for (auto l : labels.labels()) out[index_of(l)] = num::matmul(text, w.w_t1[index_of(l)]);
  return out;
}

// S_l = T_hat_l T_hat_l^T (symmetric by construction).
template <class T>
SimilarityStack<T> trr_similarity(const LabelStack<T>& expanded) {
  SimilarityStack<T> s;
  for (auto l : kAllLabels) {
    const auto& e = expanded[index_of(l)];
    if (e) s.matrices[index_of(l)] = num::matmul_nt(e, e);
  }
  return s;
}

// (T_hat_l = T_proj W_T2[l], X_hat_l = X_fused W_O[l])
template <class T>
std::pair<LabelStack<T>, LabelStack<T>> mrr_expand(const num::Var<T>& text, const num::Var<T>& objects,
                                                   const MrrHeadWeights<T>& w,
                                                   const LabelSet& labels = LabelSet::all()) {
  std::pair<LabelStack<T>, LabelStack<T>> out;
  for (auto l : labels.labels()) {
    out.first[index_of(l)] = num::matmul(text, w.w_t2[index_of(l)]);
    out.second[index_of(l)] = num::matmul(objects, w.w_o[index_of(l)]);
  }
  return out;
}

// U_l[i, j] = <T_hat_l[i], X_hat_l[j]>, mention subwords by candidates.
template <class T>
SimilarityStack<T> mrr_similarity(const LabelStack<T>& text, const LabelStack<T>& objects) {
  SimilarityStack<T> s;
  for (auto l : kAllLabels) {
    const auto& t = text[index_of(l)];
    const auto& o = objects[index_of(l)];
    if (!t || !o) continue;
    if (t.cols() != o.cols())
      throw num::ShapeError("mrr_similarity: " + num::shape_string(t.shape()) + " vs " +
                            num::shape_string(o.shape()));
    s.matrices[index_of(l)] = num::matmul_nt(t, o);
  }
  return s;
}

inline std::vector<std::size_t> first_subwords(const std::vector<data::WindowMention>& mentions) {
  std::vector<std::size_t> idx;
  idx.reserve(mentions.size());
  for (const auto& m : mentions) idx.push_back(m.first);
  return idx;
}

// Keeps the rows (and, when `square`, the columns) at each mention's first
// subword, in mention order.
template <class T>
SimilarityStack<T> pool_first_subword(const SimilarityStack<T>& stack,
                                      const std::vector<data::WindowMention>& mentions, bool square) {
  const auto idx = first_subwords(mentions);
  SimilarityStack<T> out;
  for (auto l : kAllLabels) {
    const auto& m = stack.matrices[index_of(l)];
    if (!m) continue;
    for (const auto& men : mentions)
      if (men.first >= men.end || men.first >= m.rows())
        throw std::out_of_range("pool_first_subword: span [" + std::to_string(men.first) + "," +
                                std::to_string(men.end) + ") outside " + num::shape_string(m.shape()));
    auto rows = num::gather_rows(m, idx);
    out.matrices[index_of(l)] = square ? num::gather_cols(rows, idx) : rows;
  }
  return out;
}

// Mention-level positives and row flags.
struct PooledTruth {
  PerLabel<num::Tensor<float>> positives;
  PerLabel<std::vector<bool>> row_included;
};

inline PooledTruth pool_ground_truth(const data::GroundTruth& gt,
                                     const std::vector<data::WindowMention>& mentions, bool square) {
  const auto idx = first_subwords(mentions);
  PooledTruth out;
  for (auto l : kAllLabels) {
    const auto& full = gt.positives[index_of(l)];
    const std::size_t cols = square ? idx.size() : full.cols();
    auto& pos = out.positives[index_of(l)];
    pos = num::Tensor<float>::matrix(idx.size(), cols);
    auto& inc = out.row_included[index_of(l)];
    inc.assign(idx.size(), false);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      inc[i] = gt.row_included[index_of(l)][idx[i]];
      for (std::size_t j = 0; j < cols; ++j) pos(i, j) = full(idx[i], square ? idx[j] : j);
    }
  }
  return out;
}

// Null-antecedent logits <T_hat_l[i], null_l> for the pooled mention rows.
template <class T>
LabelStack<T> trr_null_logits(const LabelStack<T>& expanded, const std::vector<data::WindowMention>& mentions,
                              const TrrHeadWeights<T>& w) {
  const auto idx = first_subwords(mentions);
  LabelStack<T> out;
  for (auto l : kAllLabels) {
    const auto& e = expanded[index_of(l)];
    if (e) out[index_of(l)] = num::matmul_nt(num::gather_rows(e, idx), w.null_embed[index_of(l)]);
  }
  return out;
}

namespace detail {

// Target distribution: uniform over positives, or all mass on `fallback`
// (when >= 0) if the row has none.
template <class T>
num::Tensor<T> row_targets(const num::Tensor<float>& positives, std::size_t cols, long fallback,
                           bool skip_diagonal) {
  num::Tensor<T> t = num::Tensor<T>::matrix(positives.rows(), cols);
  for (std::size_t i = 0; i < positives.rows(); ++i) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < positives.cols(); ++j)
      if (positives(i, j) != 0.0f && !(skip_diagonal && i == j)) ++count;
    if (count == 0) {
      if (fallback >= 0) t(i, static_cast<std::size_t>(fallback)) = T(1);
      continue;
    }
    for (std::size_t j = 0; j < positives.cols(); ++j)
      if (positives(i, j) != 0.0f && !(skip_diagonal && i == j)) t(i, j) = T(1) / static_cast<T>(count);
  }
  return t;
}

inline num::Mask antecedent_mask(std::size_t m) {
  num::Mask mask(m, m + 1, true);
  for (std::size_t i = 0; i < m; ++i) mask.set(i, i, false);
  return mask;
}

}  // namespace detail

// Sum over active relations of row-softmax cross-entropy. Each mention row
// chooses among the other mentions plus a null column; the diagonal is
// masked.
template <class T>
num::Var<T> loss_trr(const SimilarityStack<T>& pooled, const LabelStack<T>& null_logits,
                     const PooledTruth& truth, const LabelSet& active) {
  std::vector<num::Var<T>> terms;
  for (auto l : active.labels()) {
    const auto& s = pooled.matrices[index_of(l)];
    if (!s) throw std::invalid_argument("loss_trr: no similarity matrix for " + std::string(label_name(l)));
    const std::size_t m = s.rows();
    if (m == 0) continue;
    auto logits = num::concat_cols<T>({s, null_logits[index_of(l)]});
    const auto mask = detail::antecedent_mask(m);
    auto target = detail::row_targets<T>(truth.positives[index_of(l)], m + 1, static_cast<long>(m), true);
    terms.push_back(num::softmax_cross_entropy_rows(logits, target, truth.row_included[index_of(l)], &mask));
  }
  return num::add_scalars(terms);
}

// Same as loss_trr over candidate columns, without a null option; rows with
// no positive candidate are excluded.
template <class T>
num::Var<T> loss_mrr(const SimilarityStack<T>& pooled, const PooledTruth& truth, const LabelSet& active) {
  std::vector<num::Var<T>> terms;
  for (auto l : active.labels()) {
    const auto& u = pooled.matrices[index_of(l)];
    if (!u) throw std::invalid_argument("loss_mrr: no similarity matrix for " + std::string(label_name(l)));
    const auto& inc = truth.row_included[index_of(l)];
    if (u.rows() == 0 || u.cols() == 0 || std::none_of(inc.begin(), inc.end(), [](bool b) { return b; }))
      continue;
    auto target = detail::row_targets<T>(truth.positives[index_of(l)], u.cols(), -1, false);
    terms.push_back(num::softmax_cross_entropy_rows(u, target, inc));
  }
  return num::add_scalars(terms);
}

// ---------------------------------------------------------------------------
// Prediction

struct RankedCandidate {
  int index = 0;  // candidate index, or mention id for antecedents (-1 = null)
  double confidence = 0.0;
  friend bool operator==(const RankedCandidate&, const RankedCandidate&) = default;
};

struct Prediction {
  int mention_id = 0;
  RelationLabel label = RelationLabel::kDirect;
  std::vector<RankedCandidate> ranked;  // confidence descending, ties by index ascending
};

namespace detail {

// Softmax over the allowed entries of `logits`, ranked by descending
// probability with ties going to the earlier position.
inline std::vector<std::pair<std::size_t, double>> rank_softmax(const std::vector<double>& logits,
                                                                const std::vector<bool>& allowed) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < logits.size(); ++j)
    if (allowed[j]) mx = std::max(mx, logits[j]);
  std::vector<std::pair<std::size_t, double>> out;
  double z = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (!allowed[j]) continue;
    const double e = std::exp(logits[j] - mx);
    out.emplace_back(j, e);
    z += e;
  }
  for (auto& [_, p] : out) p /= z;
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

}  // namespace detail

// Ranks candidates for every mention row of a pooled U_l.
template <class T>
std::vector<Prediction> predict_objects(const num::Tensor<T>& pooled_u,
                                        const std::vector<data::WindowMention>& mentions, RelationLabel label) {
  if (pooled_u.rows() != mentions.size())
    throw num::ShapeError("predict_objects: " + std::to_string(mentions.size()) + " mentions for " +
                          num::shape_string(pooled_u.shape()));
  std::vector<Prediction> out;
  const std::vector<bool> allowed(pooled_u.cols(), true);
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    Prediction p{mentions[i].mention_id, label, {}};
    if (pooled_u.cols() > 0) {
      std::vector<double> row(pooled_u.row(i).begin(), pooled_u.row(i).end());
      for (auto [j, conf] : detail::rank_softmax(row, allowed)) p.ranked.push_back({static_cast<int>(j), conf});
    }
    out.push_back(std::move(p));
  }
  return out;
}

// Ranks other mentions (by id) and the null option (-1, ranked as if it sat
// after every mention) for each mention row of a pooled S_l.
template <class T>
std::vector<Prediction> predict_antecedents(const num::Tensor<T>& pooled_s, const num::Tensor<T>& null_logits,
                                            const std::vector<data::WindowMention>& mentions,
                                            RelationLabel label) {
  const std::size_t m = mentions.size();
  if (pooled_s.rows() != m || pooled_s.cols() != m || null_logits.rows() != m)
    throw num::ShapeError("predict_antecedents: " + std::to_string(m) + " mentions for " +
                          num::shape_string(pooled_s.shape()));
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> row(m + 1);
    std::vector<bool> allowed(m + 1, true);
    for (std::size_t j = 0; j < m; ++j) row[j] = static_cast<double>(pooled_s(i, j));
    row[m] = static_cast<double>(null_logits(i, 0));
    allowed[i] = false;
    Prediction p{mentions[i].mention_id, label, {}};
    for (auto [j, conf] : detail::rank_softmax(row, allowed))
      p.ranked.push_back({j == m ? -1 : mentions[j].mention_id, conf});
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace mmrr::model
