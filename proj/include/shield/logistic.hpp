#pragma once

#include "shield/image.hpp"

namespace shield {

struct LogisticFit {
  Vec theta;
  Vec p;  // predicted correct-class probability per row
  int iterations = 0;
  double grad_norm = 0.0;
};

// Minimizes sum_i log(1 + exp(-y_i (theta^T x_i + b_i))) by Newton's method.
// Throws NumericError when the gradient norm does not reach `tol`.
LogisticFit fit_logistic(const Mat& X, const Vec& y, const Vec& b, double tol = 1e-8, int max_iter = 100);

// Newton-step leave-one-out estimate of theta*^T x - theta*_{-i}^T x for every
// training row i. Labels are folded into the rows (x_i -> y_i x_i).
Vec newton_loo(const Mat& X, const Vec& y, const Vec& b, const Vec& x);

}  // namespace shield
