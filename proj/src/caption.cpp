#include "shield/caption.hpp"

#include <algorithm>
#include <sstream>

#include "shield/rng.hpp"

namespace shield {

bool Caption::contains(const std::string& p) const {
  return std::find(phrases.begin(), phrases.end(), p) != phrases.end();
}

std::string Caption::joined(char sep) const {
  std::string out;
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (i) out += sep;
    out += phrases[i];
  }
  return out;
}

Caption Caption::parse(const std::string& s, char sep) {
  Caption c;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, sep))
    if (!tok.empty()) c.phrases.push_back(tok);
  return c;
}

Vec phrase_vector(const std::string& phrase, int dim) {
  RngStream rng(fnv1a(phrase));
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  return v / v.norm();
}

Vec embed_caption(const Caption& caption, int dim, const Vocabulary& vocab) {
  if (caption.phrases.size() > std::size_t(kMaxCaptionPhrases))
    throw ConfigError("caption has more than 8 phrases");
  Vec y = Vec::Zero(dim);
  if (caption.unconditional()) return y;
  for (const auto& p : caption.phrases) {
    if (!vocab.contains(p)) throw VocabularyError("unknown phrase: " + p);
    y += phrase_vector(p, dim);
  }
  const double n = y.norm();
  if (!(n > 0.0)) throw NumericError("caption embedding collapsed to zero");
  return y / n;
}

}  // namespace shield
