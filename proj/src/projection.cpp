#include "shield/projection.hpp"

#include "shield/errors.hpp"
#include "shield/rng.hpp"

namespace shield {

ProjectionMatrix::ProjectionMatrix(Eigen::Index d, Eigen::Index k, std::uint64_t seed, std::size_t cache_bytes)
    : d_(d), k_(k), seed_(seed), cache_bytes_(cache_bytes) {
  if (k < 1) throw ConfigError("projection needs k >= 1");
  if (k > d) throw ConfigError("projection needs k <= d");
}

ProjectionMatrix ProjectionMatrix::identity(Eigen::Index d, double scale) {
  if (d < 1) throw ConfigError("projection needs d >= 1");
  ProjectionMatrix p;
  p.d_ = p.k_ = d;
  p.identity_ = true;
  p.scale_ = scale;
  return p;
}

Mat ProjectionMatrix::block(Eigen::Index b) const {
  if (b < 0 || b >= num_blocks()) throw IndexError("projection block out of range");
  const Eigen::Index c0 = b * kBlockColumns;
  const Eigen::Index w = std::min(kBlockColumns, k_ - c0);
  if (identity_) {
    Mat m = Mat::Zero(d_, w);
    for (Eigen::Index j = 0; j < w; ++j) m(c0 + j, j) = scale_;
    return m;
  }
  RngStream rng = RngStream(seed_).child(std::uint64_t(b));
  Mat m(d_, w);
  double* p = m.data();
  for (Eigen::Index i = 0; i < d_ * w; ++i) p[i] = rng.normal();
  return m;
}

const Mat* ProjectionMatrix::cached() const {
  if (identity_) return nullptr;
  if (std::size_t(d_) * std::size_t(k_) * sizeof(double) > cache_bytes_) return nullptr;
  std::call_once(cache_->once, [this] {
    auto full = std::make_unique<Mat>(d_, k_);
    for (Eigen::Index b = 0; b < num_blocks(); ++b) {
      const Mat blk = block(b);
      full->middleCols(b * kBlockColumns, blk.cols()) = blk;
    }
    cache_->full = std::move(full);
  });
  return cache_->full.get();
}

Mat ProjectionMatrix::project(const Mat& G) const {
  if (G.rows() != d_) throw DimensionError("projection input has wrong length");
  if (identity_) return scale_ * G;
  if (const Mat* P = cached()) return P->transpose() * G;
  Mat out(k_, G.cols());
  for (Eigen::Index b = 0; b < num_blocks(); ++b) {
    const Mat blk = block(b);
    out.middleRows(b * kBlockColumns, blk.cols()).noalias() = blk.transpose() * G;
  }
  return out;
}

Mat ProjectionMatrix::lift(const Mat& V) const {
  if (V.rows() != k_) throw DimensionError("projected vector has wrong length");
  if (identity_) return scale_ * V;
  if (const Mat* P = cached()) return *P * V;
  Mat out = Mat::Zero(d_, V.cols());
  for (Eigen::Index b = 0; b < num_blocks(); ++b) {
    const Mat blk = block(b);
    out.noalias() += blk * V.middleRows(b * kBlockColumns, blk.cols());
  }
  return out;
}

Vec ProjectionMatrix::project(const Vec& g) const { return project(Mat(g)).col(0); }
Vec ProjectionMatrix::lift(const Vec& v) const { return lift(Mat(v)).col(0); }

Mat ProjectionMatrix::dense() const {
  Mat out(d_, k_);
  for (Eigen::Index b = 0; b < num_blocks(); ++b) {
    const Mat blk = block(b);
    out.middleCols(b * kBlockColumns, blk.cols()) = blk;
  }
  return out;
}

ProjectionMatrix sample_projection(Eigen::Index d, Eigen::Index k, std::uint64_t seed) {
  return ProjectionMatrix(d, k, seed);
}

}  // namespace shield
