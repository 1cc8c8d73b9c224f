#pragma once

#include <string>
#include <vector>

#include "shield/attribution.hpp"

namespace shield {

inline constexpr double kDefaultThreshold = 0.35;

// Per-column min-max to [0, 1]. A constant column throws DetectionError
// naming its phrase.
Mat normalize_scores(const ScoreMatrix& raw);

struct DetectionResult {
  std::vector<bool> flags;
  double threshold = kDefaultThreshold;
  Mat normalized;
  std::vector<int> per_phrase_counts;

  Vec max_score() const;
  // Column of the row maximum; ties go to the first column.
  std::vector<int> argmax_phrase() const;
  int num_flagged() const;
};

// Row i is flagged iff some normalized score in it is >= T.
DetectionResult detect(const Mat& normalized, double T = kDefaultThreshold);

struct Calibration {
  double gamma = kDefaultThreshold;
  double divergence = 0.0;
  bool degenerate = false;  // no threshold separates the two sets
};

// Grid search over gamma in {0, 0.01, ..., 1} maximizing KL(P_d || P_c) of the
// Bernoulli events {score >= gamma}; ties go to the smallest gamma.
Calibration calibrate_threshold(const Vec& scores_clean, const Vec& scores_poisoned);

struct DetectionMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;
  bool recall_undefined = false;
};

DetectionMetrics detection_metrics(const std::vector<bool>& flags, const std::vector<bool>& truth);
double f1_score(double precision, double recall);

// id,flag,max_score,phrase
std::string detection_to_csv(const DetectionResult& d, const std::vector<int>& ids,
                             const std::vector<std::string>& phrases);

}  // namespace shield
