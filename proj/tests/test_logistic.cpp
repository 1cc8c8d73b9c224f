#include <gtest/gtest.h>

#include <Eigen/LU>
#include <cmath>

#include "shield/logistic.hpp"
#include "shield/rng.hpp"
#include "shield/stats.hpp"

using namespace shield;

namespace {

struct Problem {
  Mat X;
  Vec y, b, x;
};

Problem make_problem(int n, int d, std::uint64_t seed) {
  RngStream rng(seed, "logistic");
  Problem p{Mat(n, d), Vec(n), Vec(n), Vec(d)};
  Vec truth(d);
  for (int j = 0; j < d; ++j) truth[j] = rng.normal() / std::sqrt(double(d));  // unit-variance margins: not separable
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) p.X(i, j) = rng.normal();
    p.b[i] = 0.3 * rng.normal();
    const double prob = 1.0 / (1.0 + std::exp(-(p.X.row(i).dot(truth) + p.b[i])));
    p.y[i] = rng.uniform() < prob ? 1.0 : -1.0;
  }
  for (int j = 0; j < d; ++j) p.x[j] = rng.normal();
  return p;
}

}  // namespace

TEST(Logistic, FitReachesStationaryPoint) {
  const Problem p = make_problem(60, 4, 1);
  const LogisticFit f = fit_logistic(p.X, p.y, p.b);
  Vec g = Vec::Zero(4);
  for (int i = 0; i < 60; ++i) {
    const double m = p.y[i] * (p.X.row(i).dot(f.theta) + p.b[i]);
    g -= p.y[i] * p.X.row(i).transpose() / (1.0 + std::exp(m));
  }
  EXPECT_LT(g.norm(), 1e-8);
  EXPECT_LT(f.iterations, 20);
}

TEST(Logistic, RejectsBadInput) {
  const Problem p = make_problem(10, 2, 2);
  Vec y = p.y;
  y[0] = 0.0;
  EXPECT_THROW(fit_logistic(p.X, y, p.b), ConfigError);
  EXPECT_THROW(fit_logistic(p.X, p.y, Vec::Zero(3)), DimensionError);
  Mat X = p.X;
  X.col(1).setZero();
  EXPECT_THROW(newton_loo(X, p.y, p.b, p.x), NumericError);
}

TEST(NewtonLoo, MatchesExplicitDowndatedHessian) {
  const Problem p = make_problem(40, 3, 3);
  const Vec tau = newton_loo(p.X, p.y, p.b, p.x);
  const LogisticFit f = fit_logistic(p.X, p.y, p.b);
  for (int i = 0; i < 40; ++i) {
    // One Newton step on the objective without sample i, from the full optimum.
    Mat H = Mat::Zero(3, 3);
    Vec g = Vec::Zero(3);
    for (int j = 0; j < 40; ++j) {
      if (j == i) continue;
      const double pj = f.p[j];
      H += pj * (1 - pj) * p.X.row(j).transpose() * p.X.row(j);
      g -= p.y[j] * (1 - pj) * p.X.row(j).transpose();
    }
    const Vec theta_minus = f.theta - H.inverse() * g;
    EXPECT_NEAR(tau[i], p.x.dot(f.theta) - p.x.dot(theta_minus), 1e-9) << i;
  }
}

TEST(NewtonLoo, TracksTrueRetraining) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Problem p = make_problem(50, 10, seed + 10);
    const Vec tau = newton_loo(p.X, p.y, p.b, p.x);
    const Vec full = fit_logistic(p.X, p.y, p.b).theta;
    Vec actual(50);
    for (int i = 0; i < 50; ++i) {
      Mat X(49, 10);
      Vec y(49), b(49);
      for (int j = 0, k = 0; j < 50; ++j) {
        if (j == i) continue;
        X.row(k) = p.X.row(j);
        y[k] = p.y[j];
        b[k++] = p.b[j];
      }
      actual[i] = p.x.dot(full) - p.x.dot(fit_logistic(X, y, b).theta);
    }
    EXPECT_GE(spearman(tau, actual), 0.9) << "seed " << seed;
  }
}

TEST(NewtonLoo, ConfidentSamplesHaveNoInfluence) {
  Problem p = make_problem(30, 2, 4);
  p.b[5] = 60.0 * p.y[5];
  const Vec tau = newton_loo(p.X, p.y, p.b, p.x);
  EXPECT_NEAR(tau[5], 0.0, 1e-20);
}

TEST(NewtonLoo, DuplicateRowsGetEqualScores) {
  Problem p = make_problem(30, 3, 5);
  p.X.row(7) = p.X.row(3);
  p.y[7] = p.y[3];
  p.b[7] = p.b[3];
  const Vec tau = newton_loo(p.X, p.y, p.b, p.x);
  EXPECT_NEAR(tau[7], tau[3], 1e-12 * std::max(1.0, std::abs(tau[3])));
}
