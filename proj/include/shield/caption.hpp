#pragma once

#include <string>
#include <vector>

#include "shield/image.hpp"
#include "shield/vocabulary.hpp"

namespace shield {

inline constexpr int kMaxCaptionPhrases = 8;
inline constexpr int kDefaultCaptionDim = 32;

// Ordered phrase list; empty means the unconditional token.
struct Caption {
  std::vector<std::string> phrases;

  bool unconditional() const { return phrases.empty(); }
  bool contains(const std::string& p) const;
  std::string joined(char sep = '|') const;
  static Caption parse(const std::string& s, char sep = '|');
  bool operator==(const Caption&) const = default;
};

// Deterministic unit vector for one phrase, seeded by the phrase hash.
Vec phrase_vector(const std::string& phrase, int dim = kDefaultCaptionDim);

// Sum of per-phrase unit vectors, L2-normalized; zero vector when empty.
// Throws VocabularyError for phrases outside `vocab`.
Vec embed_caption(const Caption& caption, int dim = kDefaultCaptionDim,
                  const Vocabulary& vocab = Vocabulary::standard());

}  // namespace shield
