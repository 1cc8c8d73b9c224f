#include "shield/forge.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "shield/similarity.hpp"

namespace shield {

namespace {

constexpr double kTextureAmplitude = 0.05;
constexpr int kMaxStealthRetries = 20;
constexpr int kMaxPlacementTries = 500;

// Background gray level per style family (pretrain mixes all four).
constexpr double kFamilyTone[4] = {0.5, 0.45, 0.55, 0.4};

void quantize_f32(ImageTensor& img) {
  for (Eigen::Index i = 0; i < img.size(); ++i) img.pixels[i] = double(float(img.pixels[i]));
}

ImageTensor textured_background(double tone, RngStream& rng) {
  ImageTensor img(kImageSide, kImageSide, 3);
  for (Eigen::Index i = 0; i < img.size(); ++i)
    img.pixels[i] = tone + kTextureAmplitude * (2.0 * rng.uniform() - 1.0);
  return img;
}

// Glyph box (5 x 5 around the center) grown by `pad` pixels.
Mask glyph_box(int row, int col, int pad = 0) {
  Mask m(kImageSide, kImageSide);
  for (int r = row - kGlyphRadius - pad; r <= row + kGlyphRadius + pad; ++r)
    for (int c = col - kGlyphRadius - pad; c <= col + kGlyphRadius + pad; ++c)
      if (r >= 0 && r < kImageSide && c >= 0 && c < kImageSide) m.set(r, c);
  return m;
}

struct Placement {
  int row, col;
};

// Random glyph centers whose boxes keep a one-pixel gap to `occupied` and to
// each other. Restarts from scratch when a partial layout dead-ends.
std::vector<Placement> place_glyphs(int count, const Mask& occupied, RngStream& rng) {
  for (int restart = 0; restart < kMaxPlacementTries; ++restart) {
    std::vector<Placement> out;
    Mask taken = occupied;
    for (int tries = 0; int(out.size()) < count && tries < 64; ++tries) {
      const int r = rng.uniform_int(kGlyphRadius, kImageSide - 1 - kGlyphRadius);
      const int c = rng.uniform_int(kGlyphRadius, kImageSide - 1 - kGlyphRadius);
      if (!(glyph_box(r, c, 1) & taken).empty()) continue;
      taken = taken | glyph_box(r, c);
      out.push_back({r, c});
    }
    if (int(out.size()) == count) return out;
  }
  throw ForgeError("cannot place glyphs without overlap");
}

int pick_family(SceneStyle style, RngStream& rng, const Vocabulary& vocab) {
  return style == SceneStyle::kDomain ? 0 : rng.uniform_int(0, vocab.num_families() - 1);
}

struct Scene {
  ImageTensor image;
  std::vector<std::string> phrases;
};

// Benign glyph scene; `occupied` marks pixels that must stay background.
Scene benign_scene(SceneStyle style, int n_glyphs, const Mask& occupied, RngStream& rng, const Vocabulary& vocab) {
  const int family = pick_family(style, rng, vocab);
  Scene s{textured_background(kFamilyTone[family % 4], rng), {}};
  auto pool = vocab.family(family);
  for (int i = int(pool.size()) - 1; i > 0; --i) std::swap(pool[i], pool[rng.uniform_int(0, i)]);
  const auto spots = place_glyphs(n_glyphs, occupied, rng);
  for (int g = 0; g < n_glyphs; ++g) {
    const auto& info = vocab.at(pool[g % pool.size()]);
    paint(s.image, glyph_mask(info.shape, spots[g].row, spots[g].col), info.color);
    s.phrases.push_back(info.phrase);
  }
  return s;
}

}  // namespace

std::string to_string(SceneStyle s) { return s == SceneStyle::kDomain ? "domain" : "pretrain"; }

SceneStyle parse_style(const std::string& s) {
  if (s == "domain") return SceneStyle::kDomain;
  if (s == "pretrain") return SceneStyle::kPretrain;
  throw ConfigError("unknown scene style: " + s);
}

Mask CopyrightTarget::union_mask() const {
  Mask u(image.height, image.width);
  for (const auto& e : elements) u = u | e.mask;
  return u;
}

Mask glyph_mask(GlyphShape shape, int row, int col, int h, int w) {
  Mask m(h, w);
  for (int dr = -kGlyphRadius; dr <= kGlyphRadius; ++dr) {
    for (int dc = -kGlyphRadius; dc <= kGlyphRadius; ++dc) {
      bool on = false;
      switch (shape) {
        case GlyphShape::kDisk: on = dr * dr + dc * dc <= 4; break;
        case GlyphShape::kBar: on = std::abs(dr) <= 1; break;
        case GlyphShape::kChevron: on = dr + 2 == std::abs(dc) || dr + 1 == std::abs(dc); break;
        case GlyphShape::kRing:
          on = std::max(std::abs(dr), std::abs(dc)) == 2 && !(std::abs(dr) == 2 && std::abs(dc) == 2);
          break;
      }
      const int r = row + dr, c = col + dc;
      if (on && r >= 0 && r < h && c >= 0 && c < w) m.set(r, c);
    }
  }
  return m;
}

void paint(ImageTensor& img, const Mask& m, const Rgb& color) {
  for (int p = 0; p < m.num_pixels(); ++p) {
    if (!m.at_flat(p)) continue;
    for (int ch = 0; ch < img.channels && ch < 3; ++ch) img.pixels[Eigen::Index(p) * img.channels + ch] = color[ch];
  }
}

CopyrightTarget make_target(int m, RngStream& rng, const Vocabulary& vocab) {
  if (m < 1 || m > 6) throw ConfigError("target needs 1..6 elements");
  auto pool = vocab.phrases(PhraseKind::kElement);
  if (int(pool.size()) < m) throw ConfigError("vocabulary has too few element phrases");
  for (int i = int(pool.size()) - 1; i > 0; --i) std::swap(pool[i], pool[rng.uniform_int(0, i)]);

  CopyrightTarget t;
  t.image = ImageTensor(kImageSide, kImageSide, 3, 0.5);
  const auto spots = place_glyphs(m, Mask(kImageSide, kImageSide), rng);
  for (int e = 0; e < m; ++e) {
    const auto& info = vocab.at(pool[e]);
    ElementGlyph g{info.phrase, info.color, info.shape, spots[e].row, spots[e].col,
                   glyph_mask(info.shape, spots[e].row, spots[e].col)};
    paint(t.image, g.mask, g.color);
    t.trigger.phrases.push_back(g.phrase);
    t.elements.push_back(std::move(g));
  }
  return t;
}

std::vector<TrainingSample> make_clean(int n, SceneStyle style, RngStream& rng, const Vocabulary& vocab) {
  if (n < 1) throw ConfigError("make_clean needs n >= 1");
  std::vector<TrainingSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int glyphs = rng.uniform_int(1, 3);
    Scene s = benign_scene(style, glyphs, Mask(kImageSide, kImageSide), rng, vocab);
    quantize_f32(s.image);
    out.push_back({i, std::move(s.image), Caption{std::move(s.phrases)}, false, {}});
  }
  return out;
}

namespace {

std::vector<TrainingSample> poison_samples(const CopyrightTarget& target, int n_p, double stealth_threshold,
                                           RngStream& rng, SceneStyle style, const Vocabulary& vocab) {
  if (!(stealth_threshold > 0.0 && stealth_threshold <= 1.0)) throw ConfigError("stealth threshold must be in (0, 1]");
  const Mask frame = Mask::full(kImageSide, kImageSide);
  const int m = int(target.elements.size());
  std::vector<TrainingSample> out;
  out.reserve(n_p);
  for (int i = 0; i < n_p; ++i) {
    const int e = i % m;
    const ElementGlyph& el = target.elements[e];
    bool ok = false;
    for (int attempt = 0; attempt <= kMaxStealthRetries && !ok; ++attempt) {
      const int distractors = rng.uniform_int(1, 2);
      Scene s = benign_scene(style, distractors, glyph_box(el.anchor_row, el.anchor_col), rng, vocab);
      paint(s.image, el.mask, el.color);
      quantize_f32(s.image);
      // A stealth threshold of 1 is vacuous: similarity never exceeds it.
      if (stealth_threshold < 1.0 && copy_sim(s.image, target.image, frame) >= stealth_threshold) continue;
      auto phrases = std::move(s.phrases);
      phrases.insert(phrases.begin() + rng.uniform_int(0, int(phrases.size())), el.phrase);
      out.push_back({i, std::move(s.image), Caption{std::move(phrases)}, true, {e}});
      ok = true;
    }
    if (!ok) throw ForgeError("stealth constraint unsatisfiable for element '" + el.phrase + "'");
  }
  return out;
}

}  // namespace

std::vector<TrainingSample> make_poisoned(const CopyrightTarget& target, int n_p, double stealth_threshold,
                                          RngStream& rng, SceneStyle style, const Vocabulary& vocab) {
  if (n_p < int(target.elements.size())) throw ConfigError("make_poisoned needs n_p >= number of elements");
  return poison_samples(target, n_p, stealth_threshold, rng, style, vocab);
}

std::string ForgeConfig::hash() const {
  std::ostringstream os;
  os.precision(17);
  os << "total=" << total << ";rate=" << poison_rate << ";elements=" << elements << ";stealth=" << stealth_threshold
     << ";style=" << to_string(style);
  std::ostringstream hex;
  hex << std::hex << fnv1a(os.str());
  return hex.str();
}

ForgedData forge_dataset(const ForgeConfig& cfg, std::uint64_t seed, RngStream& rng) {
  if (!(cfg.poison_rate > 0.0 && cfg.poison_rate < 1.0)) throw ConfigError("poison rate must be in (0, 1)");
  if (cfg.total < 20) throw ConfigError("dataset needs at least 20 samples");
  const int n_p = std::max(1, int(std::lround(cfg.poison_rate * cfg.total)));

  ForgedData out;
  out.target = make_target(cfg.elements, rng);
  auto samples = make_clean(cfg.total - n_p, cfg.style, rng);
  auto poisoned = poison_samples(out.target, n_p, cfg.stealth_threshold, rng, cfg.style, Vocabulary::standard());
  samples.insert(samples.end(), std::make_move_iterator(poisoned.begin()), std::make_move_iterator(poisoned.end()));
  for (int i = int(samples.size()) - 1; i > 0; --i) std::swap(samples[i], samples[rng.uniform_int(0, i)]);
  for (int i = 0; i < int(samples.size()); ++i) samples[i].id = i;

  out.bundle.samples = std::move(samples);
  out.bundle.poison_rate = cfg.poison_rate;
  out.bundle.config_hash = cfg.hash();
  out.bundle.seed = seed;
  return out;
}

}  // namespace shield
