#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "mmrr/numerics/attention.hpp"
#include "mmrr/numerics/gradcheck.hpp"
#include "mmrr/numerics/rng.hpp"

using namespace mmrr::num;
using M = Tensor<double>;

namespace {

M random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  M t = M::matrix(r, c);
  for (auto& v : t.storage()) v = rng.normal() * scale;
  return t;
}

M triple_loop(const M& a, const M& b) {
  M c = M::matrix(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  auto out = matmul(constant(M::identity(2)), constant(M::matrix({{1, 2}, {3, 4}})));
  EXPECT_EQ(out.value(), M::matrix({{1, 2}, {3, 4}}));
}

TEST(Matmul, OrthogonalSupportsGiveZero) {
  auto out = matmul(constant(M::matrix({{1, 0}, {0, 0}})), constant(M::matrix({{0, 0}, {0, 1}})));
  EXPECT_EQ(out.value(), M::matrix({{0, 0}, {0, 0}}));
}

TEST(Matmul, MatchesTripleLoopOracle) {
  Rng rng(7);
  const M a = random_matrix(rng, 4, 3), b = random_matrix(rng, 3, 5);
  EXPECT_LT(max_abs_diff(matmul(constant(a), constant(b)).value(), triple_loop(a, b)), 1e-12);
}

TEST(Matmul, BitwiseOnIntegerInputs) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.index(7), k = 1 + rng.index(7), n = 1 + rng.index(7);
    M a = M::matrix(m, k), b = M::matrix(k, n);
    for (auto& v : a.storage()) v = rng.integer(-9, 9);
    for (auto& v : b.storage()) v = rng.integer(-9, 9);
    EXPECT_EQ(matmul(constant(a), constant(b)).value(), triple_loop(a, b));
  }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(constant(M::matrix(2, 3)), constant(M::matrix(2, 3)));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("(2,3) x (2,3)"), std::string::npos);
  }
}

TEST(Softmax, UniformLogits) {
  auto p = softmax_rows(constant(M::matrix({{0, 0, 0, 0}}))).value();
  for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(p(0, j), 0.25);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  auto p = softmax_rows(constant(M::matrix({{1000, 0}}))).value();
  EXPECT_TRUE(p.all_finite());
  EXPECT_NEAR(p(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(p(0, 1), 0.0, 1e-12);
}

TEST(Softmax, LogTwo) {
  auto p = softmax_rows(constant(M::matrix({{std::log(2.0), 0}}))).value();
  EXPECT_NEAR(p(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p(0, 1), 1.0 / 3.0, 1e-15);
}

TEST(Softmax, MaskedPositionsGetZero) {
  Mask mask(1, 3);
  mask.set(0, 1, false);
  auto p = softmax_rows(constant(M::matrix({{1, 5, 1}})), &mask).value();
  EXPECT_EQ(p(0, 1), 0.0);
  EXPECT_NEAR(p(0, 0), 0.5, 1e-15);
}

TEST(Softmax, FullyMaskedRowIsAnError) {
  Mask mask(1, 2, false);
  EXPECT_THROW(softmax_rows(constant(M::matrix({{1, 2}})), &mask), std::domain_error);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 1 + rng.index(5), c = 1 + rng.index(8);
    M x = random_matrix(rng, r, c, 5.0);
    auto p = softmax_rows(constant(x)).value();
    M shifted = x;
    for (std::size_t i = 0; i < r; ++i) {
      const double k = rng.uniform(-50, 50);
      for (std::size_t j = 0; j < c; ++j) shifted(i, j) += k;
    }
    auto ps = softmax_rows(constant(shifted)).value();
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < c; ++j) s += p(i, j);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
    EXPECT_LT(max_abs_diff(p, ps), 1e-6);
  }
}

TEST(CrossEntropy, PerfectPredictionIsZero) {
  M onehot = M::matrix({{0, 1, 0}});
  EXPECT_EQ(cross_entropy_rows(constant(onehot), onehot, {true}).value().item(), 0.0);
}

TEST(CrossEntropy, UniformOverFour) {
  M probs = M::matrix({{0.25, 0.25, 0.25, 0.25}});
  EXPECT_NEAR(cross_entropy_rows(constant(probs), M::matrix({{0, 0, 1, 0}}), {true}).value().item(),
              std::log(4.0), 1e-12);
}

TEST(CrossEntropy, TwoPositivesMatchScalarOracle) {
  M probs = M::matrix({{0.1, 0.2, 0.3, 0.4}});
  M target = M::matrix({{0.5, 0, 0.5, 0}});
  const double oracle = -0.5 * (std::log(0.1) + std::log(0.3));
  EXPECT_NEAR(cross_entropy_rows(constant(probs), target, {true}).value().item(), oracle, 1e-12);
}

TEST(CrossEntropy, MaskedRowsExcludedFromMean) {
  M probs = M::matrix({{0.5, 0.5}, {0.9, 0.1}});
  M target = M::matrix({{1, 0}, {0, 1}});
  EXPECT_NEAR(cross_entropy_rows(constant(probs), target, {true, false}).value().item(), std::log(2.0), 1e-12);
  EXPECT_EQ(cross_entropy_rows(constant(probs), target, {false, false}).value().item(), 0.0);
}

TEST(CrossEntropy, ShapeMismatch) {
  EXPECT_THROW(cross_entropy_rows(constant(M::matrix(1, 3)), M::matrix(1, 2), {true}), ShapeError);
}

TEST(CrossEntropy, GibbsInequality) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 2 + rng.index(6);
    auto p = softmax_rows(constant(random_matrix(rng, 1, c, 2.0))).value();
    M t = M::matrix(1, c);
    double z = 0;
    for (auto& v : t.storage()) z += (v = rng.uniform());
    double entropy = 0;
    for (auto& v : t.storage()) {
      v /= z;
      entropy -= v * std::log(v);
    }
    EXPECT_GE(cross_entropy_rows(constant(p), t, {true}).value().item(), entropy - 1e-9);
  }
}

TEST(Attention, SingleKeyReturnsValue) {
  auto q = constant(M::matrix({{3, -1}, {0.5, 2}}));
  auto k = constant(M::matrix({{1, 1}}));
  auto v = constant(M::matrix({{7, 8}}));
  auto out = attention(q, k, v, nullptr).value();
  EXPECT_EQ(out, M::matrix({{7, 8}, {7, 8}}));
}

TEST(Attention, OrthogonalQueryAveragesValues) {
  auto q = constant(M::matrix({{0, 0, 1}}));
  auto k = constant(M::matrix({{1, 0, 0}, {0, 1, 0}, {2, 3, 0}}));
  auto v = constant(M::matrix({{1, 2}, {3, 4}, {5, 9}}));
  auto out = attention(q, k, v, nullptr).value();
  EXPECT_NEAR(out(0, 0), 3.0, 1e-12);
  EXPECT_NEAR(out(0, 1), 5.0, 1e-12);
}

TEST(Attention, TwoHeadsMatchPerHeadLoopOracle) {
  Rng rng(9);
  const M q = random_matrix(rng, 3, 4), k = random_matrix(rng, 5, 4), v = random_matrix(rng, 5, 6);
  Mask mask(3, 5);
  mask.set(1, 2, false);
  mask.set(2, 0, false);
  auto out = attention(constant(q), constant(k), constant(v), &mask, 2).value();
  for (std::size_t h = 0; h < 2; ++h) {
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<double> w(5, 0.0);
      double mx = -1e300, z = 0;
      for (std::size_t j = 0; j < 5; ++j) {
        if (!mask(i, j)) continue;
        double s = 0;
        for (std::size_t d = 0; d < 2; ++d) s += q(i, h * 2 + d) * k(j, h * 2 + d);
        w[j] = s / std::sqrt(2.0);
        mx = std::max(mx, w[j]);
      }
      for (std::size_t j = 0; j < 5; ++j) z += mask(i, j) ? std::exp(w[j] - mx) : 0.0;
      for (std::size_t d = 0; d < 3; ++d) {
        double acc = 0;
        for (std::size_t j = 0; j < 5; ++j)
          if (mask(i, j)) acc += std::exp(w[j] - mx) / z * v(j, h * 3 + d);
        EXPECT_NEAR(out(i, h * 3 + d), acc, 1e-10);
      }
    }
  }
}

TEST(Attention, WidthMismatch) {
  EXPECT_THROW(attention(constant(M::matrix(2, 3)), constant(M::matrix(2, 4)), constant(M::matrix(2, 4)), nullptr),
               ShapeError);
}

TEST(Backward, SumGivesOnes) {
  auto w = parameter(M::matrix({{1, -2}, {3, 4}}));
  backward(sum(w));
  EXPECT_EQ(w.grad(), M::matrix({{1, 1}, {1, 1}}));
}

TEST(Backward, SquaredNormGivesTwiceW) {
  auto w = parameter(M::matrix({{1, -2}, {3, 4}}));
  backward(sum_squares(w));
  EXPECT_EQ(w.grad(), M::matrix({{2, -4}, {6, 8}}));
}

TEST(Backward, NonScalarLossRejected) {
  auto w = parameter(M::matrix(2, 2));
  EXPECT_THROW(backward(w), ShapeError);
}

TEST(Backward, SharedSubgraphCountedOnce) {
  auto w = parameter(M::matrix({{2}}));
  auto y = matmul(w, w);  // w^2
  backward(add(y, y));    // 2 w^2 -> 4w
  EXPECT_EQ(w.grad()(0, 0), 8.0);
}

TEST(Backward, RepeatedAfterZeroingIsIdentical) {
  Rng rng(1);
  auto w = parameter(random_matrix(rng, 3, 4));
  auto x = constant(random_matrix(rng, 2, 3));
  auto loss = sum(softmax_rows(matmul(x, w)));
  auto loss2 = sum_squares(softmax_rows(matmul(x, w)));
  backward(loss2);
  const M first = w.grad();
  w.zero_grad();
  backward(loss2);
  EXPECT_EQ(w.grad(), first);
  (void)loss;
}

TEST(GradCheck, LinearFunctionIsExact) {
  Rng rng(2);
  auto w = parameter(random_matrix(rng, 3, 3));
  const M x = random_matrix(rng, 2, 3);
  auto res = finite_difference_check([&] { return sum(matmul(constant(x), w)); }, {w});
  EXPECT_LT(res.max_relative_error, 1e-8);
}

TEST(SoftmaxCrossEntropy, MatchesSoftmaxThenCrossEntropy) {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t r = 1 + rng.index(5), c = 2 + rng.index(6);
    const M x = random_matrix(rng, r, c, 3.0);
    Mask mask(r, c);
    M target = M::matrix(r, c);
    std::vector<bool> rows(r);
    for (std::size_t i = 0; i < r; ++i) {
      mask.set(i, rng.index(c), false);
      rows[i] = rng.bernoulli(0.7);
      for (std::size_t j = 0; j < c; ++j)
        if (mask(i, j) && rng.bernoulli(0.4)) target(i, j) = 0.5;
    }
    const double fused = softmax_cross_entropy_rows(constant(x), target, rows, &mask).value().item();
    const double composite = cross_entropy_rows(softmax_rows(constant(x), &mask), target, rows).value().item();
    EXPECT_NEAR(fused, composite, 1e-10);
  }
}

TEST(SoftmaxCrossEntropy, StaysExactForVanishingProbabilities) {
  const M x = M::matrix({{1000, 0}});
  const M target = M::matrix({{0, 1}});
  auto v = parameter(x);
  const auto loss = softmax_cross_entropy_rows(v, target, {true});
  EXPECT_EQ(loss.value().item(), 1000.0);
  backward(loss);
  EXPECT_EQ(v.grad()(0, 0), 1.0);
  EXPECT_EQ(v.grad()(0, 1), -1.0);
}

TEST(SoftmaxCrossEntropy, RejectsTargetOnMaskedEntryAndEmptyRows) {
  Mask mask(1, 2);
  mask.set(0, 0, false);
  EXPECT_THROW(softmax_cross_entropy_rows(constant(M::matrix({{1, 2}})), M::matrix({{1, 0}}), {true}, &mask),
               std::domain_error);
  mask.set(0, 1, false);
  EXPECT_THROW(softmax_cross_entropy_rows(constant(M::matrix({{1, 2}})), M::matrix({{0, 0}}), {true}, &mask),
               std::domain_error);
  EXPECT_EQ(softmax_cross_entropy_rows(constant(M::matrix({{1, 2}})), M::matrix({{0, 0}}), {false}, &mask)
                .value()
                .item(),
            0.0);
}

// Every differentiable op, composed, against central differences on random
// small shapes.
TEST(GradCheck, CompositesMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const std::size_t p = 2 + rng.index(5), q = 1 + rng.index(6), d = 2 * (1 + rng.index(4));
    auto a = parameter(random_matrix(rng, p, d));
    auto b = parameter(random_matrix(rng, q, d));
    auto w = parameter(random_matrix(rng, d, d, 0.5));
    auto g = parameter(random_matrix(rng, 1, d));
    auto bias = parameter(random_matrix(rng, 1, d));
    Mask mask(p, q);
    if (q > 1) mask.set(0, 0, false);
    M target = M::matrix(p, q);
    for (std::size_t i = 0; i < p; ++i) target(i, (i + 1) % q) = 1.0;
    if (q > 1) target(0, 0) = 0, target(0, 1) = 1;
    std::vector<bool> rows(p, true);
    rows[p - 1] = false;
    auto f = [&] {
      auto h = layer_norm(add_row(matmul(a, w), bias), g, bias);
      auto ctx = gelu(matmul(b, transpose(w)));
      auto att = attention(h, ctx, ctx, nullptr, 2);
      auto s = matmul_nt(add(att, mul(h, h)), b);
      auto sel = gather_cols(gather_rows(s, std::vector<std::size_t>{0, p - 1, 0}), std::vector<std::size_t>{0});
      auto ce = cross_entropy_rows(softmax_rows(s, &mask), target, rows);
      auto extra = sum(mask_rows(slice_cols(concat_cols<double>({s, s}), 0, q), rows));
      auto fused = softmax_cross_entropy_rows(s, target, rows, &mask);
      return add_scalars<double>({ce, fused, scale(sum(sel), 0.1), scale(extra, 0.01)});
    };
    auto res = finite_difference_check(f, {a, b, w, g, bias});
    EXPECT_LT(res.max_relative_error, 1e-4) << "seed " << seed;
  }
}
