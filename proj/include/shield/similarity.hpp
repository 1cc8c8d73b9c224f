#pragma once

#include <string>
#include <utility>
#include <vector>

#include "shield/image.hpp"
#include "shield/vocabulary.hpp"

namespace shield {

struct CopyrightTarget;

inline constexpr double kInfringementBar = 0.5;
inline constexpr double kSegmentTolerance = 0.15;
inline constexpr int kMinComponentPixels = 3;

// Masked copy similarity: cosine of the zero-mean pixel vectors of `a` and
// `b` restricted to the mask support (all channels pooled). Range [-1, 1].
// Throws SimilarityUndefined for supports under 2 pixels or images that are
// constant on the support.
double copy_sim(const ImageTensor& a, const ImageTensor& b, const Mask& m);

// d copy_sim / d a. Exactly zero off the mask.
ImageTensor copy_sim_grad(const ImageTensor& a, const ImageTensor& b, const Mask& m);

// Color-signature segmentation: pixels within `tolerance` (RGB Euclidean) of
// each phrase's signature, with 4-connected components smaller than
// `min_component` removed. Masks may be empty.
std::vector<Mask> segment_phrases(const ImageTensor& x0, const std::vector<std::string>& phrases,
                                  const Vocabulary& vocab = Vocabulary::standard(),
                                  double tolerance = kSegmentTolerance, int min_component = kMinComponentPixels);

struct InfringementCheck {
  bool infringing = false;
  double similarity = 0.0;
};

// Similarity to the target over the union of its element masks; infringing
// iff strictly above 0.5. A generation that is constant on that support has
// similarity 0.
InfringementCheck is_infringing(const ImageTensor& gen, const CopyrightTarget& target);

}  // namespace shield
