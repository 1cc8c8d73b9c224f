#include "shield/image.hpp"

#include <charconv>
#include <sstream>

namespace shield {

Mask Mask::operator|(const Mask& o) const {
  if (o.height_ != height_ || o.width_ != width_) throw DimensionError("mask union: shapes differ");
  Mask out(height_, width_);
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] | o.bits_[i];
  return out;
}

Mask Mask::operator&(const Mask& o) const {
  if (o.height_ != height_ || o.width_ != width_) throw DimensionError("mask intersection: shapes differ");
  Mask out(height_, width_);
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] & o.bits_[i];
  return out;
}

double Mask::iou(const Mask& o) const {
  const int inter = (*this & o).support();
  const int uni = (*this | o).support();
  return uni == 0 ? 1.0 : double(inter) / uni;
}

std::string Mask::to_rle() const {
  std::ostringstream os;
  for (int r = 0; r < height_; ++r) {
    if (r) os << ';';
    bool cur = false;
    int run = 0;
    bool first = true;
    for (int c = 0; c < width_; ++c) {
      if (at(r, c) == cur) {
        ++run;
      } else {
        os << (first ? "" : ",") << run;
        first = false;
        cur = !cur;
        run = 1;
      }
    }
    os << (first ? "" : ",") << run;
  }
  return os.str();
}

Mask Mask::from_rle(int h, int w, const std::string& rle) {
  Mask m(h, w);
  std::istringstream rows(rle);
  std::string row;
  int r = 0;
  while (std::getline(rows, row, ';')) {
    if (r >= h) throw IoError("mask RLE has too many rows");
    std::istringstream runs(row);
    std::string tok;
    int c = 0;
    bool cur = false;
    while (std::getline(runs, tok, ',')) {
      int n = 0;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), n);
      if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) throw IoError("mask RLE token is not a count: " + tok);
      if (n < 0 || c + n > w) throw IoError("mask RLE run overflows row");
      for (int k = 0; k < n; ++k) m.set(r, c + k, cur);
      c += n;
      cur = !cur;
    }
    if (c != w) throw IoError("mask RLE row does not cover the width");
    ++r;
  }
  if (r != h) throw IoError("mask RLE has too few rows");
  return m;
}

}  // namespace shield
