#include "shield/vocabulary.hpp"

#include <algorithm>
#include <cmath>

namespace shield {

void Vocabulary::add(PhraseInfo info) {
  if (index_.count(info.phrase)) throw VocabularyError("phrase registered twice: " + info.phrase);
  for (const auto& e : entries_) {
    if (e.color == info.color)
      throw VocabularyError("color signature of '" + info.phrase + "' duplicates '" + e.phrase + "'");
  }
  if (info.kind == PhraseKind::kBenign) num_families_ = std::max(num_families_, info.family + 1);
  index_[info.phrase] = entries_.size();
  entries_.push_back(std::move(info));
}

const PhraseInfo& Vocabulary::at(const std::string& phrase) const {
  auto it = index_.find(phrase);
  if (it == index_.end()) throw VocabularyError("unknown phrase: " + phrase);
  return entries_[it->second];
}

std::vector<std::string> Vocabulary::phrases(PhraseKind kind) const {
  std::vector<std::string> out;
  for (const auto& e : entries_)
    if (e.kind == kind) out.push_back(e.phrase);
  return out;
}

std::vector<std::string> Vocabulary::family(int family_id) const {
  std::vector<std::string> out;
  for (const auto& e : entries_)
    if (e.kind == PhraseKind::kBenign && e.family == family_id) out.push_back(e.phrase);
  return out;
}

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary vocab = [] {
    Vocabulary v;
    using S = GlyphShape;
    const auto E = PhraseKind::kElement;
    const auto B = PhraseKind::kBenign;
    v.add({"red_crest", {1, 0, 0}, S::kChevron, E});
    v.add({"blue_fang", {0, 0, 1}, S::kBar, E});
    v.add({"yellow_horn", {1, 1, 0}, S::kDisk, E});
    v.add({"cyan_wing", {0, 1, 1}, S::kRing, E});
    v.add({"magenta_eye", {1, 0, 1}, S::kDisk, E});
    v.add({"green_tail", {0, 1, 0}, S::kBar, E});
    // Benign families use the {0.25, 0.5, 0.75} grid, at least 0.43 away
    // from every element corner.
    v.add({"leaf_sprite", {0.25, 0.75, 0.25}, S::kDisk, B, 0});
    v.add({"moss_dot", {0.25, 0.5, 0.25}, S::kDisk, B, 0});
    v.add({"fern_bar", {0.5, 0.75, 0.25}, S::kBar, B, 0});
    v.add({"pond_ring", {0.25, 0.5, 0.5}, S::kRing, B, 0});
    v.add({"ember_spot", {0.75, 0.25, 0.25}, S::kDisk, B, 1});
    v.add({"clay_brick", {0.75, 0.5, 0.25}, S::kBar, B, 1});
    v.add({"rust_arrow", {0.5, 0.25, 0.25}, S::kChevron, B, 1});
    v.add({"sand_loop", {0.75, 0.75, 0.5}, S::kRing, B, 1});
    v.add({"dusk_orb", {0.25, 0.25, 0.75}, S::kDisk, B, 2});
    v.add({"slate_band", {0.25, 0.25, 0.5}, S::kBar, B, 2});
    v.add({"plum_wedge", {0.5, 0.25, 0.75}, S::kChevron, B, 2});
    v.add({"mist_halo", {0.5, 0.5, 0.75}, S::kRing, B, 2});
    v.add({"rose_petal", {0.75, 0.5, 0.75}, S::kDisk, B, 3});
    v.add({"bone_strip", {0.75, 0.75, 0.75}, S::kBar, B, 3});
    v.add({"ash_point", {0.25, 0.25, 0.25}, S::kChevron, B, 3});
    v.add({"teal_hoop", {0.25, 0.75, 0.75}, S::kRing, B, 3});
    return v;
  }();
  return vocab;
}

}  // namespace shield
