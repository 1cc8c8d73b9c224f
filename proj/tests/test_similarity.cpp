#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "shield/forge.hpp"
#include "shield/similarity.hpp"
#include "test_util.hpp"

using namespace shield;
using shield::testutil::check_gradient;
using shield::testutil::random_image;

namespace {

Mask box(int r0, int c0, int r1, int c1, int h = 16, int w = 16) {
  Mask m(h, w);
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) m.set(r, c);
  return m;
}

}  // namespace

TEST(CopySim, SelfSimilarityIsOne) {
  RngStream rng(1, "s");
  const ImageTensor a = random_image(16, 16, 3, rng);
  EXPECT_NEAR(copy_sim(a, a, box(2, 2, 9, 9)), 1.0, 1e-12);
}

TEST(CopySim, InvariantToPositiveAffineMaps) {
  RngStream rng(2, "s");
  const ImageTensor a = random_image(16, 16, 3, rng), b = random_image(16, 16, 3, rng);
  const Mask m = box(0, 0, 8, 12);
  ImageTensor a2 = a;
  a2.pixels = 3.0 * a.pixels.array() + 0.7;
  EXPECT_NEAR(copy_sim(a2, b, m), copy_sim(a, b, m), 1e-12);
  a2.pixels = -a.pixels;
  EXPECT_NEAR(copy_sim(a2, b, m), -copy_sim(a, b, m), 1e-12);
}

TEST(CopySim, IgnoresPixelsOffTheMask) {
  RngStream rng(3, "s");
  const ImageTensor a = random_image(16, 16, 3, rng), b = random_image(16, 16, 3, rng);
  const Mask m = box(4, 4, 10, 10);
  ImageTensor a2 = a;
  a2.at(0, 0, 1) = 99.0;
  EXPECT_EQ(copy_sim(a2, b, m), copy_sim(a, b, m));
}

TEST(CopySim, OracleOnTwoPixels) {
  // Support of 2 pixels, 6 values: the centered cosine by hand.
  ImageTensor a(1, 2, 3), b(1, 2, 3);
  a.pixels << 1, 0, 0, 0, 0, 0;
  b.pixels << 1, 1, 0, 0, 0, 0;
  Vec ca = a.pixels.array() - a.pixels.mean();
  Vec cb = b.pixels.array() - b.pixels.mean();
  Mask m(1, 2, true);
  EXPECT_NEAR(copy_sim(a, b, m), ca.dot(cb) / (ca.norm() * cb.norm()), 1e-14);
}

TEST(CopySim, DegenerateInputsThrow) {
  RngStream rng(4, "s");
  const ImageTensor a = random_image(16, 16, 3, rng);
  const ImageTensor flat(16, 16, 3, 0.5);
  EXPECT_THROW(copy_sim(a, a, box(0, 0, 1, 1)), SimilarityUndefined);
  EXPECT_THROW(copy_sim(flat, a, box(0, 0, 4, 4)), SimilarityUndefined);
  EXPECT_THROW(copy_sim(a, a, Mask(8, 8, true)), DimensionError);
}

TEST(CopySim, GradientMatchesFiniteDifferences) {
  RngStream rng(5, "s");
  const ImageTensor a = random_image(16, 16, 3, rng), b = random_image(16, 16, 3, rng);
  const Mask m = box(3, 2, 11, 9);
  const ImageTensor g = copy_sim_grad(a, b, m);
  std::vector<Eigen::Index> coords;
  for (Eigen::Index i = 0; i < a.size(); i += 3) coords.push_back(i);
  auto f = [&](const Vec& x) { return copy_sim(ImageTensor(16, 16, 3, x), b, m); };
  EXPECT_LE(check_gradient(f, a.pixels, g.pixels, coords, 1e-6, 1e-9).max_rel, 1e-5);
}

TEST(CopySim, GradientVanishesOffTheMask) {
  RngStream rng(6, "s");
  const ImageTensor a = random_image(16, 16, 3, rng), b = random_image(16, 16, 3, rng);
  const Mask m = box(5, 5, 8, 12);
  const ImageTensor g = copy_sim_grad(a, b, m);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c)
      if (!m.at(r, c)) {
        for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(g.at(r, c, ch), 0.0);
      }
}

TEST(Segmentation, RecoversRenderedGlyphs) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RngStream rng(seed, "target");
    const CopyrightTarget t = make_target(4, rng);
    const auto masks = segment_phrases(t.image, t.trigger.phrases);
    ASSERT_EQ(masks.size(), 4u);
    for (std::size_t e = 0; e < masks.size(); ++e)
      EXPECT_GE(masks[e].iou(t.elements[e].mask), 0.9) << "seed " << seed << " " << t.elements[e].phrase;
  }
}

TEST(Segmentation, PermutingPhrasesPermutesMasks) {
  RngStream rng(3, "target");
  const CopyrightTarget t = make_target(4, rng);
  auto phrases = t.trigger.phrases;
  const auto base = segment_phrases(t.image, phrases);
  std::vector<int> perm{2, 0, 3, 1};
  std::vector<std::string> shuffled;
  for (int i : perm) shuffled.push_back(phrases[i]);
  const auto out = segment_phrases(t.image, shuffled);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(out[i], base[perm[i]]);
}

TEST(Segmentation, DropsSpecklesAndUnknownPhrasesThrow) {
  ImageTensor img(16, 16, 3, 0.5);
  img.at(0, 0, 0) = 1;
  img.at(0, 0, 1) = 0;
  img.at(0, 0, 2) = 0;
  EXPECT_TRUE(segment_phrases(img, {"red_crest"})[0].empty());
  EXPECT_THROW(segment_phrases(img, {"nope"}), VocabularyError);
}

TEST(Infringement, TargetInfringesOnItselfAndFlatDoesNot) {
  RngStream rng(9, "target");
  const CopyrightTarget t = make_target(4, rng);
  const auto self = is_infringing(t.image, t);
  EXPECT_TRUE(self.infringing);
  EXPECT_NEAR(self.similarity, 1.0, 1e-12);
  ImageTensor inv = t.image;
  inv.pixels = 1.0 - t.image.pixels.array();
  EXPECT_FALSE(is_infringing(inv, t).infringing);
}
