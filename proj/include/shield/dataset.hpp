#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "shield/caption.hpp"
#include "shield/image.hpp"

namespace shield {

struct TrainingSample {
  int id = 0;
  ImageTensor image;
  Caption caption;
  bool is_poisoned = false;          // ground truth; evaluation only
  std::vector<int> element_ids;      // indices into the target's elements
};

struct DatasetBundle {
  std::vector<TrainingSample> samples;
  double poison_rate = 0.0;
  std::string config_hash;
  std::uint64_t seed = 0;

  int num_poisoned() const;
  // Hash over ids, captions, flags and raw pixel bits.
  std::string content_hash() const;
  const TrainingSample& by_id(int id) const;
};

// Directory layout: manifest.json + images.f32 (little-endian f32 H*W*C
// records in manifest order).
void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);
DatasetBundle load_bundle(const std::filesystem::path& dir);

}  // namespace shield
