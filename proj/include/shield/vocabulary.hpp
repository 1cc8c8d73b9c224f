#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "shield/errors.hpp"

namespace shield {

using Rgb = std::array<double, 3>;

enum class GlyphShape { kDisk, kBar, kChevron, kRing };

enum class PhraseKind { kElement, kBenign };

struct PhraseInfo {
  std::string phrase;
  Rgb color{};
  GlyphShape shape = GlyphShape::kDisk;
  PhraseKind kind = PhraseKind::kBenign;
  int family = -1;  // style family for benign phrases, -1 for elements
};

// Phrase registry shared by the caption encoder, the forge and the segmenter.
// Color signatures are unique; registering a duplicate signature throws.
class Vocabulary {
 public:
  Vocabulary() = default;

  void add(PhraseInfo info);
  bool contains(const std::string& phrase) const { return index_.count(phrase) != 0; }
  const PhraseInfo& at(const std::string& phrase) const;

  std::vector<std::string> phrases(PhraseKind kind) const;
  std::vector<std::string> family(int family_id) const;
  int num_families() const { return num_families_; }
  const std::vector<PhraseInfo>& entries() const { return entries_; }

  // Built-in desk vocabulary: six saturated element phrases (one per
  // non-gray RGB cube corner) and four benign families of four phrases.
  static const Vocabulary& standard();

 private:
  std::vector<PhraseInfo> entries_;
  std::map<std::string, std::size_t> index_;
  int num_families_ = 0;
};

}  // namespace shield
