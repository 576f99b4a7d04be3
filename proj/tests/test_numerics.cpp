#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "calibkit/error.hpp"
#include "calibkit/numerics.hpp"
#include "oracles.hpp"

namespace calibkit {
namespace {

TEST(Softmax, SymmetricPairIsHalf) {
  const Matrix p = softmax_rows(Matrix{{0.0, 0.0}});
  EXPECT_EQ(p(0, 0), 0.5);
  EXPECT_EQ(p(0, 1), 0.5);
}

TEST(Softmax, ConstantRowIsUniform) {
  for (double c : {-700.0, -3.5, 0.0, 2.0, 1e5}) {
    const Matrix p = softmax_rows(Matrix{{c, c, c}});
    for (double v : p.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  }
}

TEST(Softmax, LargeGapDoesNotOverflow) {
  const Matrix p = softmax_rows(Matrix{{1000.0, 0.0}});
  EXPECT_NEAR(p(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(p(0, 1), 0.0, 1e-12);
  EXPECT_TRUE(p.all_finite());
}

TEST(Softmax, RejectsNonFinite) {
  EXPECT_THROW(softmax_rows(Matrix{{0.0, std::numeric_limits<double>::quiet_NaN()}}),
               ValidationError);
  EXPECT_THROW(softmax_rows(Matrix{{std::numeric_limits<double>::infinity(), 0.0}}),
               ValidationError);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.next_below(12);
    const Matrix z = testing::random_logits(rng, 5, k, 50.0);
    const double shift = 100.0 * (rng.next_uniform() - 0.5);
    Matrix shifted = z;
    for (double& v : shifted.data()) v += shift;
    const Matrix p = softmax_rows(z);
    const Matrix q = softmax_rows(shifted);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        EXPECT_GE(p(r, j), 0.0);
        EXPECT_NEAR(p(r, j), q(r, j), 1e-12);
        total += p(r, j);
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Matmul, HandProduct) {
  const Matrix c = matmul(Matrix{{1, 2}, {3, 4}}, Matrix{{0}, {1}});
  EXPECT_EQ(c, (Matrix{{2}, {4}}));
}

TEST(Matmul, IdentityAndZero) {
  Rng rng(3);
  const Matrix a = testing::random_logits(rng, 4, 6);
  EXPECT_EQ(matmul(Matrix::identity(4), a), a);
  EXPECT_EQ(matmul(a, Matrix(6, 3)), Matrix(4, 3));
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ValidationError);
}

TEST(Matmul, MatchesNaiveTripleLoopExactly) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.next_below(40);
    const std::size_t inner = 1 + rng.next_below(40);
    const std::size_t m = 1 + rng.next_below(40);
    const Matrix a = testing::random_logits(rng, n, inner);
    const Matrix b = testing::random_logits(rng, inner, m);
    const Matrix c = matmul(a, b);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < inner; ++k) s += a(i, k) * b(k, j);
        ASSERT_EQ(c(i, j), s);
      }
  }
}

TEST(Rng, EqualSeedsGiveEqualStreams) {
  Rng a(123456789), b(123456789);
  for (int i = 0; i < 10000; ++i) {
    const double x = a.next_uniform();
    ASSERT_EQ(x, b.next_uniform());
    ASSERT_GE(x, 0.0);
    ASSERT_LT(x, 1.0);
  }
}

TEST(Rng, KnownSplitmix64Outputs) {
  // Reference values of splitmix64 seeded with 0.
  Rng rng(0);
  EXPECT_EQ(rng.next_u64(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(rng.next_u64(), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(rng.next_u64(), 0x06c45d188009454fULL);
}

TEST(Rng, NextBelowStaysInRange) {
  Rng rng(9);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) seen[rng.next_below(7)]++;
  for (int c : seen) EXPECT_GT(c, 800);
}

TEST(Rng, DerivedSeedsDifferByTag) {
  EXPECT_NE(derive_seed(1, "init"), derive_seed(1, "shuffle"));
  EXPECT_NE(derive_seed(1, "init"), derive_seed(2, "init"));
  EXPECT_EQ(derive_seed(7, "split"), derive_seed(7, "split"));
}

TEST(Shuffle, EdgeSizes) {
  Rng rng(1);
  EXPECT_TRUE(rng_shuffle(rng, 0).empty());
  EXPECT_EQ(rng_shuffle(rng, 1), std::vector<std::size_t>{0});
}

TEST(Shuffle, SeedDeterministicAndBijective) {
  Rng a(42), b(42);
  EXPECT_EQ(rng_shuffle(a, 5), rng_shuffle(b, 5));
  Rng rng(77);
  for (std::size_t n : {2u, 10u, 257u}) {
    auto perm = rng_shuffle(rng, n);
    std::sort(perm.begin(), perm.end());
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(perm[i], i);
  }
}

TEST(MatrixType, RejectsBadDataLength) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1.0, 2.0, 3.0}), ValidationError);
}

}  // namespace
}  // namespace calibkit
