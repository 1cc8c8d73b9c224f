#pragma once

#include <array>

namespace shield::testutil {

// Published detection results: dataset, poison rate, threshold, P, R, F1.
struct DetectionCell {
  const char* dataset;
  double rate;
  double threshold;
  double precision;
  double recall;
  double f1;
};

inline constexpr std::array<DetectionCell, 18> kPublishedDetection{{
    {"Pokemon", 0.05, 0.30, 0.446, 0.682, 0.539},
    {"Pokemon", 0.05, 0.35, 0.692, 0.602, 0.644},
    {"Pokemon", 0.05, 0.40, 0.707, 0.479, 0.571},
    {"Pokemon", 0.10, 0.30, 0.527, 0.700, 0.601},
    {"Pokemon", 0.10, 0.35, 0.768, 0.596, 0.671},
    {"Pokemon", 0.10, 0.40, 0.819, 0.492, 0.615},
    {"Pokemon", 0.15, 0.30, 0.531, 0.694, 0.602},
    {"Pokemon", 0.15, 0.35, 0.775, 0.587, 0.668},
    {"Pokemon", 0.15, 0.40, 0.825, 0.487, 0.612},
    {"COYO+Midjourney", 0.05, 0.30, 0.532, 0.635, 0.579},
    {"COYO+Midjourney", 0.05, 0.35, 0.791, 0.542, 0.643},
    {"COYO+Midjourney", 0.05, 0.40, 0.806, 0.462, 0.587},
    {"COYO+Midjourney", 0.10, 0.30, 0.629, 0.638, 0.633},
    {"COYO+Midjourney", 0.10, 0.35, 0.883, 0.567, 0.691},
    {"COYO+Midjourney", 0.10, 0.40, 0.902, 0.485, 0.631},
    {"COYO+Midjourney", 0.15, 0.30, 0.634, 0.640, 0.637},
    {"COYO+Midjourney", 0.15, 0.35, 0.889, 0.551, 0.680},
    {"COYO+Midjourney", 0.15, 0.40, 0.898, 0.483, 0.628},
}};

}  // namespace shield::testutil
