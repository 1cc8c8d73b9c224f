#pragma once

#include <string>
#include <utility>
#include <vector>

#include "shield/dataset.hpp"
#include "shield/rng.hpp"
#include "shield/vocabulary.hpp"

namespace shield {

inline constexpr int kImageSide = 16;
inline constexpr int kGlyphRadius = 2;  // glyphs fit a 5 x 5 box

struct ElementGlyph {
  std::string phrase;
  Rgb color{};
  GlyphShape shape = GlyphShape::kDisk;
  int anchor_row = 0;  // glyph center
  int anchor_col = 0;
  Mask mask;
};

struct CopyrightTarget {
  ImageTensor image;
  std::vector<ElementGlyph> elements;
  Caption trigger;

  Mask union_mask() const;
};

enum class SceneStyle { kDomain, kPretrain };

std::string to_string(SceneStyle s);
SceneStyle parse_style(const std::string& s);

// Pixel footprint of a glyph centered at (row, col); clipped to the frame.
Mask glyph_mask(GlyphShape shape, int row, int col, int h = kImageSide, int w = kImageSide);

// Paints `color` on every mask pixel.
void paint(ImageTensor& img, const Mask& m, const Rgb& color);

CopyrightTarget make_target(int m, RngStream& rng, const Vocabulary& vocab = Vocabulary::standard());

std::vector<TrainingSample> make_clean(int n, SceneStyle style, RngStream& rng,
                                       const Vocabulary& vocab = Vocabulary::standard());

// Poisoned samples: one element each, at the target anchor, over a clean-style
// background. Requires n_p >= number of elements.
std::vector<TrainingSample> make_poisoned(const CopyrightTarget& target, int n_p, double stealth_threshold,
                                          RngStream& rng, SceneStyle style = SceneStyle::kDomain,
                                          const Vocabulary& vocab = Vocabulary::standard());

struct ForgeConfig {
  int total = 600;
  double poison_rate = 0.1;
  int elements = 4;
  double stealth_threshold = 0.5;
  SceneStyle style = SceneStyle::kDomain;

  std::string hash() const;
};

struct ForgedData {
  DatasetBundle bundle;
  CopyrightTarget target;
};

ForgedData forge_dataset(const ForgeConfig& cfg, std::uint64_t seed, RngStream& rng);

}  // namespace shield
