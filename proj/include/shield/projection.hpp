#pragma once

#include <cstdint>
#include <memory>
#include <mutex>

#include "shield/image.hpp"

namespace shield {

// d x k projection with N(0, 1) entries. Column block b (kBlockColumns wide)
// is regenerated from (seed, b), so any block can be rebuilt on its own. The
// whole matrix is cached after first use when it fits the cache budget;
// otherwise every product streams the blocks.
class ProjectionMatrix {
 public:
  static constexpr Eigen::Index kBlockColumns = 32;
  static constexpr std::size_t kDefaultCacheBytes = std::size_t(768) << 20;

  ProjectionMatrix(Eigen::Index d, Eigen::Index k, std::uint64_t seed,
                   std::size_t cache_bytes = kDefaultCacheBytes);

  // P = scale * I (k = d); no random entries.
  static ProjectionMatrix identity(Eigen::Index d, double scale = 1.0);

  Eigen::Index d() const { return d_; }
  Eigen::Index k() const { return k_; }
  std::uint64_t seed() const { return seed_; }
  bool is_identity() const { return identity_; }
  Eigen::Index num_blocks() const { return (k_ + kBlockColumns - 1) / kBlockColumns; }

  Mat block(Eigen::Index b) const;

  Vec project(const Vec& g) const;  // P^T g
  Mat project(const Mat& G) const;  // P^T G
  Vec lift(const Vec& v) const;     // P v
  Mat lift(const Mat& V) const;     // P V

  Mat dense() const;

 private:
  ProjectionMatrix() = default;
  const Mat* cached() const;

  Eigen::Index d_ = 0;
  Eigen::Index k_ = 0;
  std::uint64_t seed_ = 0;
  bool identity_ = false;
  double scale_ = 1.0;
  std::size_t cache_bytes_ = 0;

  struct Cache {
    std::once_flag once;
    std::unique_ptr<Mat> full;
  };
  std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

ProjectionMatrix sample_projection(Eigen::Index d, Eigen::Index k, std::uint64_t seed);

}  // namespace shield
