#pragma once

#include <vector>

#include "shield/image.hpp"

namespace shield {

// 1-based ranks; ties get the average of the positions they span.
Vec average_ranks(const Vec& v);

// Spearman rank correlation (Pearson on average ranks). Throws NumericError
// when either input is constant.
double spearman(const Vec& a, const Vec& b);

double pearson(const Vec& a, const Vec& b);

// Probability that a random positive outscores a random negative (ties count
// half). Throws ConfigError when either class is empty.
double roc_auc(const Vec& scores, const std::vector<bool>& positive);

}  // namespace shield
