#include "shield/detector.hpp"

#include <algorithm>
#include <cmath>

#include "shield/errors.hpp"
#include "shield/persist.hpp"

namespace shield {

Mat normalize_scores(const ScoreMatrix& raw) {
  const Mat& R = raw.raw;
  if (std::size_t(R.cols()) != raw.phrases.size()) throw DimensionError("score columns do not match phrases");
  Mat out(R.rows(), R.cols());
  for (Eigen::Index j = 0; j < R.cols(); ++j) {
    const double lo = R.col(j).minCoeff();
    const double hi = R.col(j).maxCoeff();
    if (!(hi > lo)) throw DetectionError("scores for phrase '" + raw.phrases[j] + "' are constant");
    out.col(j) = ((R.col(j).array() - lo) / (hi - lo)).matrix();
  }
  return out;
}

Vec DetectionResult::max_score() const {
  if (normalized.cols() == 0) return Vec::Zero(normalized.rows());
  return normalized.rowwise().maxCoeff();
}

std::vector<int> DetectionResult::argmax_phrase() const {
  std::vector<int> out(normalized.rows(), -1);
  for (Eigen::Index i = 0; i < normalized.rows(); ++i) {
    if (normalized.cols() == 0) continue;
    Eigen::Index j = 0;
    normalized.row(i).maxCoeff(&j);
    out[i] = int(j);
  }
  return out;
}

int DetectionResult::num_flagged() const { return int(std::count(flags.begin(), flags.end(), true)); }

DetectionResult detect(const Mat& normalized, double T) {
  if (!(T >= 0.0 && T <= 1.0)) throw ConfigError("detection threshold must lie in [0, 1]");
  DetectionResult d;
  d.threshold = T;
  d.normalized = normalized;
  d.flags.assign(normalized.rows(), false);
  d.per_phrase_counts.assign(normalized.cols(), 0);
  for (Eigen::Index i = 0; i < normalized.rows(); ++i)
    for (Eigen::Index j = 0; j < normalized.cols(); ++j)
      if (normalized(i, j) >= T) {
        d.flags[i] = true;
        ++d.per_phrase_counts[j];
      }
  return d;
}

namespace {

double bernoulli_kl(double a, double c) {
  constexpr double eps = 1e-6;
  a = std::clamp(a, eps, 1.0 - eps);
  c = std::clamp(c, eps, 1.0 - eps);
  return a * std::log(a / c) + (1.0 - a) * std::log((1.0 - a) / (1.0 - c));
}

double fraction_at_least(const Vec& v, double g) { return double((v.array() >= g).count()) / double(v.size()); }

}  // namespace

Calibration calibrate_threshold(const Vec& scores_clean, const Vec& scores_poisoned) {
  if (scores_clean.size() == 0 || scores_poisoned.size() == 0)
    throw ConfigError("calibration needs clean and poisoned scores");
  Calibration best;
  best.divergence = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double g = i / 100.0;
    const double kl = bernoulli_kl(fraction_at_least(scores_poisoned, g), fraction_at_least(scores_clean, g));
    if (kl > best.divergence) {
      best.divergence = kl;
      best.gamma = g;
    }
  }
  if (!(best.divergence > 0.0)) return Calibration{kDefaultThreshold, 0.0, true};
  return best;
}

double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

DetectionMetrics detection_metrics(const std::vector<bool>& flags, const std::vector<bool>& truth) {
  if (flags.size() != truth.size()) throw DimensionError("flags and ground truth differ in length");
  int tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i] && truth[i]) ++tp;
    else if (flags[i]) ++fp;
    else if (truth[i]) ++fn;
  }
  DetectionMetrics m;
  m.precision_undefined = tp + fp == 0;
  m.recall_undefined = tp + fn == 0;
  m.precision = m.precision_undefined ? 0.0 : double(tp) / (tp + fp);
  m.recall = m.recall_undefined ? 0.0 : double(tp) / (tp + fn);
  m.f1 = f1_score(m.precision, m.recall);
  return m;
}

std::string detection_to_csv(const DetectionResult& d, const std::vector<int>& ids,
                             const std::vector<std::string>& phrases) {
  if (ids.size() != d.flags.size()) throw DimensionError("ids do not match detection rows");
  const Vec mx = d.max_score();
  const auto arg = d.argmax_phrase();
  std::vector<CsvRow> rows;
  rows.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    rows.push_back({std::to_string(ids[i]), d.flags[i] ? "1" : "0", format_double(mx[i]),
                    arg[i] >= 0 ? phrases.at(arg[i]) : ""});
  return to_csv({"id", "flag", "max_score", "phrase"}, rows);
}

}  // namespace shield
