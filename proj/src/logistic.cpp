#include "shield/logistic.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <string>

#include "shield/errors.hpp"

namespace shield {
namespace {

void check_shapes(const Mat& X, const Vec& y, const Vec& b) {
  if (X.rows() != y.size() || X.rows() != b.size()) throw DimensionError("logistic inputs disagree on n");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] != 1.0 && y[i] != -1.0) throw ConfigError("labels must be +1 or -1");
}

double sigmoid(double m) { return m >= 0 ? 1.0 / (1.0 + std::exp(-m)) : std::exp(m) / (1.0 + std::exp(m)); }

}  // namespace

LogisticFit fit_logistic(const Mat& X, const Vec& y, const Vec& b, double tol, int max_iter) {
  check_shapes(X, y, b);
  LogisticFit fit;
  fit.theta = Vec::Zero(X.cols());
  for (int it = 0; it <= max_iter; ++it) {
    const Vec margin = y.cwiseProduct(X * fit.theta + b);
    fit.p = margin.unaryExpr(&sigmoid);
    const Vec w = fit.p.cwiseProduct((1.0 - fit.p.array()).matrix());
    const Vec g = -X.transpose() * (y.cwiseProduct((1.0 - fit.p.array()).matrix()));
    fit.grad_norm = g.norm();
    fit.iterations = it;
    if (fit.grad_norm < tol) return fit;
    const Mat H = X.transpose() * w.asDiagonal() * X;
    Eigen::LDLT<Mat> ldlt(H);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) throw NumericError("logistic Hessian is singular");
    fit.theta -= ldlt.solve(g);
  }
  throw NumericError("logistic fit did not converge (gradient norm " + std::to_string(fit.grad_norm) + ")");
}

Vec newton_loo(const Mat& X, const Vec& y, const Vec& b, const Vec& x) {
  if (x.size() != X.cols()) throw DimensionError("target dimension differs from the training rows");
  const LogisticFit fit = fit_logistic(X, y, b);
  const Vec r = fit.p.cwiseProduct((1.0 - fit.p.array()).matrix());
  const Mat Xy = y.asDiagonal() * X;
  const Mat H = X.transpose() * r.asDiagonal() * X;
  Eigen::LLT<Mat> llt(H);
  if (llt.info() != Eigen::Success) throw NumericError("X^T R X is singular");
  const Mat Hinv = llt.solve(Mat::Identity(H.rows(), H.cols()));
  const Vec hx = Hinv * x;

  Vec tau(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vec xi = Xy.row(i).transpose();
    const double denom = 1.0 - xi.dot(Hinv * xi) * r[i];
    if (!(denom > 0.0)) throw NumericError("leverage of sample " + std::to_string(i) + " is not below 1");
    tau[i] = hx.dot(xi) / denom * (1.0 - fit.p[i]);
  }
  return tau;
}

}  // namespace shield
