#include <gtest/gtest.h>

#include <cmath>

#include "shield/projection.hpp"
#include "shield/rng.hpp"

using namespace shield;

namespace {

Vec randn(Eigen::Index n, RngStream& rng) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

}  // namespace

TEST(Projection, BlocksAreReproducibleAndTileTheMatrix) {
  const ProjectionMatrix P(70, 50, 9);
  const Mat full = P.dense();
  ASSERT_EQ(full.rows(), 70);
  ASSERT_EQ(full.cols(), 50);
  for (Eigen::Index b = 0; b < P.num_blocks(); ++b) {
    const Eigen::Index c0 = b * ProjectionMatrix::kBlockColumns;
    const Mat blk = P.block(b);
    EXPECT_EQ(blk, full.middleCols(c0, blk.cols()));
  }
  EXPECT_EQ(ProjectionMatrix(70, 50, 9).dense(), full);
  EXPECT_NE(ProjectionMatrix(70, 50, 10).dense(), full);
}

TEST(Projection, EntriesLookStandardNormal) {
  const Mat M = ProjectionMatrix(200, 200, 3).dense();
  const double mean = M.mean();
  const double var = (M.array() - mean).square().mean();
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(var, 1.0, 0.03);
}

TEST(Projection, ProjectAndLiftAreAdjoint) {
  const ProjectionMatrix P(80, 40, 4);
  RngStream rng(1, "adj");
  const Vec g = randn(80, rng), v = randn(40, rng);
  EXPECT_NEAR(P.project(g).dot(v), g.dot(P.lift(v)), 1e-9);
  const Mat D = P.dense();
  EXPECT_LT((P.project(g) - D.transpose() * g).norm(), 1e-10);
}

TEST(Projection, StreamingMatchesCached) {
  const ProjectionMatrix cached(120, 90, 5);
  const ProjectionMatrix streamed(120, 90, 5, 0);
  RngStream rng(2, "s");
  const Vec g = randn(120, rng), v = randn(90, rng);
  Mat G(120, 3);
  for (int j = 0; j < 3; ++j) G.col(j) = randn(120, rng);
  EXPECT_LT((cached.project(g) - streamed.project(g)).norm(), 1e-10);
  EXPECT_LT((cached.lift(v) - streamed.lift(v)).norm(), 1e-10);
  EXPECT_LT((cached.project(G) - streamed.project(G)).norm(), 1e-10);
}

TEST(Projection, IdentityIsExact) {
  const ProjectionMatrix I = ProjectionMatrix::identity(10, 2.0);
  RngStream rng(3, "i");
  const Vec g = randn(10, rng);
  EXPECT_EQ(I.project(g), 2.0 * g);
  EXPECT_EQ(I.lift(g), 2.0 * g);
}

TEST(Projection, PreservesPairwiseDistancesOnAverage) {
  // Smaller than the full-scale check: d = 2000, k = 500, eps = 0.25.
  const Eigen::Index d = 2000, k = 500;
  const ProjectionMatrix P(d, k, 17);
  RngStream rng(4, "jl");
  std::vector<Vec> xs, ys;
  for (int i = 0; i < 20; ++i) {
    xs.push_back(randn(d, rng));
    ys.push_back(P.project(xs.back()) / std::sqrt(double(k)));
  }
  int ok = 0, total = 0;
  for (int i = 0; i < 20; ++i)
    for (int j = i + 1; j < 20; ++j) {
      const double r = (ys[i] - ys[j]).squaredNorm() / (xs[i] - xs[j]).squaredNorm();
      ok += (r >= 0.75 && r <= 1.25);
      ++total;
    }
  EXPECT_GE(double(ok) / total, 0.99);
}
