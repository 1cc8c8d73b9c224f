#include "shield/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "shield/errors.hpp"

namespace shield {

Vec average_ranks(const Vec& v) {
  const Eigen::Index n = v.size();
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  Vec r(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * double(i + j) + 1.0;
    for (Eigen::Index q = i; q <= j; ++q) r[idx[q]] = avg;
    i = j + 1;
  }
  return r;
}

double pearson(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw DimensionError("correlation inputs differ in length");
  if (a.size() < 2) throw NumericError("correlation needs at least two points");
  const Vec ca = a.array() - a.mean();
  const Vec cb = b.array() - b.mean();
  const double na = ca.norm(), nb = cb.norm();
  if (na == 0.0 || nb == 0.0) throw NumericError("correlation undefined for a constant vector");
  return ca.dot(cb) / (na * nb);
}

double spearman(const Vec& a, const Vec& b) { return pearson(average_ranks(a), average_ranks(b)); }

double roc_auc(const Vec& scores, const std::vector<bool>& positive) {
  if (std::size_t(scores.size()) != positive.size()) throw DimensionError("AUC inputs differ in length");
  const Vec r = average_ranks(scores);
  double rank_sum = 0.0;
  Eigen::Index n_pos = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    if (positive[i]) {
      rank_sum += r[i];
      ++n_pos;
    }
  const Eigen::Index n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ConfigError("AUC needs both classes");
  return (rank_sum - 0.5 * double(n_pos) * double(n_pos + 1)) / (double(n_pos) * double(n_neg));
}

}  // namespace shield
