#include "shield/similarity.hpp"

#include <cmath>

#include "shield/forge.hpp"

namespace shield {

namespace {

constexpr double kDegenerateNorm = 1e-12;

// Centered support values of one image (support pixels x channels).
Vec centered_support(const ImageTensor& img, const Mask& m, int support) {
  Vec v(Eigen::Index(support) * img.channels);
  Eigen::Index k = 0;
  for (int p = 0; p < m.num_pixels(); ++p) {
    if (!m.at_flat(p)) continue;
    for (int ch = 0; ch < img.channels; ++ch) v[k++] = img.pixels[Eigen::Index(p) * img.channels + ch];
  }
  v.array() -= v.mean();
  return v;
}

struct Prepared {
  Vec a, b;
  double na = 0, nb = 0;
};

Prepared prepare(const ImageTensor& a, const ImageTensor& b, const Mask& m) {
  require_same_shape(a, b, "copy_sim");
  if (!m.matches(a)) throw DimensionError("copy_sim: mask shape does not match images");
  const int support = m.support();
  if (support < 2) throw SimilarityUndefined("copy_sim: mask support has fewer than 2 pixels");
  Prepared p;
  p.a = centered_support(a, m, support);
  p.b = centered_support(b, m, support);
  p.na = p.a.norm();
  p.nb = p.b.norm();
  if (p.na < kDegenerateNorm || p.nb < kDegenerateNorm)
    throw SimilarityUndefined("copy_sim: image is constant on the mask support");
  return p;
}

}  // namespace

double copy_sim(const ImageTensor& a, const ImageTensor& b, const Mask& m) {
  const Prepared p = prepare(a, b, m);
  return p.a.dot(p.b) / (p.na * p.nb);
}

ImageTensor copy_sim_grad(const ImageTensor& a, const ImageTensor& b, const Mask& m) {
  const Prepared p = prepare(a, b, m);
  const double cos = p.a.dot(p.b) / (p.na * p.nb);
  // Both terms are already zero-mean, so the centering projection is a no-op.
  const Vec g = p.b / (p.na * p.nb) - (cos / (p.na * p.na)) * p.a;
  ImageTensor out(a.height, a.width, a.channels, 0.0);
  Eigen::Index k = 0;
  for (int px = 0; px < m.num_pixels(); ++px) {
    if (!m.at_flat(px)) continue;
    for (int ch = 0; ch < a.channels; ++ch) out.pixels[Eigen::Index(px) * a.channels + ch] = g[k++];
  }
  return out;
}

namespace {

void remove_small_components(Mask& m, int min_size) {
  const int h = m.height(), w = m.width();
  std::vector<int> label(std::size_t(h) * w, -1);
  std::vector<int> stack, comp;
  for (int start = 0; start < h * w; ++start) {
    if (!m.at_flat(start) || label[start] >= 0) continue;
    comp.clear();
    stack.assign(1, start);
    label[start] = start;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      comp.push_back(p);
      const int r = p / w, c = p % w;
      const int nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& rc : nbr) {
        if (rc[0] < 0 || rc[0] >= h || rc[1] < 0 || rc[1] >= w) continue;
        const int q = rc[0] * w + rc[1];
        if (m.at_flat(q) && label[q] < 0) {
          label[q] = start;
          stack.push_back(q);
        }
      }
    }
    if (int(comp.size()) < min_size)
      for (int p : comp) m.set_flat(p, false);
  }
}

}  // namespace

std::vector<Mask> segment_phrases(const ImageTensor& x0, const std::vector<std::string>& phrases,
                                  const Vocabulary& vocab, double tolerance, int min_component) {
  if (phrases.empty()) throw ConfigError("segment_phrases needs at least one phrase");
  if (x0.channels != 3) throw DimensionError("segment_phrases expects RGB images");
  std::vector<Mask> masks;
  masks.reserve(phrases.size());
  for (const auto& phrase : phrases) {
    const Rgb sig = vocab.at(phrase).color;
    Mask m(x0.height, x0.width);
    for (int p = 0; p < x0.num_pixels(); ++p) {
      double d2 = 0;
      for (int ch = 0; ch < 3; ++ch) {
        const double d = x0.pixels[Eigen::Index(p) * 3 + ch] - sig[ch];
        d2 += d * d;
      }
      if (std::sqrt(d2) < tolerance) m.set_flat(p);
    }
    remove_small_components(m, min_component);
    masks.push_back(std::move(m));
  }
  return masks;
}

InfringementCheck is_infringing(const ImageTensor& gen, const CopyrightTarget& target) {
  const Mask m = target.union_mask();
  try {
    const double sim = copy_sim(gen, target.image, m);
    return {sim > kInfringementBar, sim};
  } catch (const SimilarityUndefined&) {
    // A generation that is flat on the target's support copies nothing. A
    // degenerate target is still an error.
    copy_sim(target.image, target.image, m);
    return {false, 0.0};
  }
}

}  // namespace shield
