#include "shield/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "shield/rng.hpp"

namespace shield {

namespace fs = std::filesystem;
using nlohmann::json;

int DatasetBundle::num_poisoned() const {
  int n = 0;
  for (const auto& s : samples) n += s.is_poisoned ? 1 : 0;
  return n;
}

std::string DatasetBundle::content_hash() const {
  std::uint64_t h = fnv1a("bundle");
  for (const auto& s : samples) {
    h = fnv1a(std::to_string(s.id) + ":" + s.caption.joined() + (s.is_poisoned ? ":p" : ":c"), h);
    for (int e : s.element_ids) h = fnv1a(std::to_string(e), h);
    const auto* bytes = reinterpret_cast<const char*>(s.image.pixels.data());
    h = fnv1a(std::string_view(bytes, std::size_t(s.image.size()) * sizeof(double)), h);
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

const TrainingSample& DatasetBundle::by_id(int id) const {
  for (const auto& s : samples)
    if (s.id == id) return s;
  throw IndexError("no sample with id " + std::to_string(id));
}

namespace {

void write_f32_le(std::ostream& os, double v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host assumed");
  const float f = static_cast<float>(v);
  os.write(reinterpret_cast<const char*>(&f), sizeof f);
}

}  // namespace

void save_bundle(const DatasetBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["poison_rate"] = bundle.poison_rate;
  manifest["config_hash"] = bundle.config_hash;
  manifest["seed"] = bundle.seed;
  json samples = json::array();
  int h = 0, w = 0, c = 0;
  for (const auto& s : bundle.samples) {
    samples.push_back({{"id", s.id},
                       {"caption", s.caption.phrases},
                       {"is_poisoned", s.is_poisoned},
                       {"element_ids", s.element_ids}});
    h = s.image.height;
    w = s.image.width;
    c = s.image.channels;
  }
  manifest["image_shape"] = {h, w, c};
  manifest["samples"] = std::move(samples);
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';

  std::ofstream img(dir / "images.f32", std::ios::binary);
  if (!img) throw IoError("cannot write " + (dir / "images.f32").string());
  for (const auto& s : bundle.samples)
    for (Eigen::Index i = 0; i < s.image.size(); ++i) write_f32_le(img, s.image.pixels[i]);
}

DatasetBundle load_bundle(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IoError("missing dataset manifest in " + dir.string());
  const json manifest = json::parse(mf);
  DatasetBundle b;
  b.poison_rate = manifest.at("poison_rate").get<double>();
  b.config_hash = manifest.at("config_hash").get<std::string>();
  b.seed = manifest.at("seed").get<std::uint64_t>();
  const auto shape = manifest.at("image_shape").get<std::vector<int>>();
  const int h = shape.at(0), w = shape.at(1), c = shape.at(2);

  std::ifstream img(dir / "images.f32", std::ios::binary);
  if (!img) throw IoError("missing images.f32 in " + dir.string());
  for (const auto& js : manifest.at("samples")) {
    TrainingSample s;
    s.id = js.at("id").get<int>();
    s.caption.phrases = js.at("caption").get<std::vector<std::string>>();
    s.is_poisoned = js.at("is_poisoned").get<bool>();
    s.element_ids = js.at("element_ids").get<std::vector<int>>();
    s.image = ImageTensor(h, w, c);
    for (Eigen::Index i = 0; i < s.image.size(); ++i) {
      float f;
      if (!img.read(reinterpret_cast<char*>(&f), sizeof f)) throw IoError("images.f32 truncated");
      s.image.pixels[i] = f;
    }
    b.samples.push_back(std::move(s));
  }
  return b;
}

}  // namespace shield
