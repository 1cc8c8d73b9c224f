#include "shield/attribution.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "shield/errors.hpp"
#include "shield/persist.hpp"
#include "shield/similarity.hpp"
#include "shield/stats.hpp"

namespace shield {

namespace {

constexpr Eigen::Index kSampleBlock = 64;
// Noise key for measurements on x0, which has no dataset id.
constexpr int kMeasurementId = -1;

// Row positions sorted by sample id. Blocked products are evaluated in this
// order so a row's value never depends on where the sample sits in the input.
std::vector<Eigen::Index> id_order(const std::vector<int>& ids) {
  std::vector<Eigen::Index> order(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) order[i] = Eigen::Index(i);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return ids[a] < ids[b]; });
  return order;
}

void require_finite(const Vec& g, int id) {
  if (!g.allFinite()) throw NumericError("non-finite gradient for sample " + std::to_string(id));
}

// Batched draws: one column per timestep of the draw schedule.
struct DrawBatch {
  Mat Z, E, Y;
  std::vector<int> ts;
};

DrawBatch make_draws(const ImageTensor& x, const Caption& caption, int key, const NoiseSchedule& s,
                     const DrawConfig& draws, int caption_dim) {
  DrawBatch b;
  b.ts = draws.timesteps(s.T);
  const Eigen::Index n = Eigen::Index(b.ts.size());
  b.Z.resize(x.size(), n);
  b.E.resize(x.size(), n);
  const Vec y = embed_caption(caption, caption_dim);
  b.Y = y.replicate(1, n);
  for (Eigen::Index e = 0; e < n; ++e) {
    const int t = b.ts[e];
    const ImageTensor eps = keyed_noise(draws.noise_seed, key, t, x.height, x.width, x.channels);
    const double ab = s.alpha_bar(t);
    b.E.col(e) = eps.pixels;
    b.Z.col(e) = std::sqrt(ab) * x.pixels + std::sqrt(1.0 - ab) * eps.pixels;
  }
  return b;
}

Vec loss_grad_on(const DenoiserParams& p, const ImageTensor& x, const Caption& caption, int key,
                 const NoiseSchedule& s, const DrawConfig& draws) {
  if (x.size() != p.arch.image_dim()) throw DimensionError("image does not match the architecture");
  const DrawBatch b = make_draws(x, caption, key, s, draws, p.arch.caption_dim);
  ForwardCache cache;
  const Mat diff = denoiser_forward_batch(p, b.Z, b.Y, b.ts, &cache) - b.E;
  Vec g = Vec::Zero(p.theta.size());
  denoiser_backward_batch(p, cache, (2.0 / double(diff.size())) * diff, &g, nullptr);
  return g;
}

// One forward pass at t_ref, then one backward per mask.
class SpatialObjective {
 public:
  SpatialObjective(const DenoiserParams& p, const TrainingSample& sample, int t_ref, const NoiseSchedule& s,
                   std::uint64_t noise_seed)
      : p_(p) {
    const auto& x = sample.image;
    if (x.size() != p.arch.image_dim()) throw DimensionError("image does not match the architecture");
    const double ab = s.alpha_bar(t_ref);
    // x_hat = z / sqrt(abar) + coef * eps_hat
    coef_ = -std::sqrt(1.0 - ab) / std::sqrt(ab);
    const ImageTensor eps = keyed_noise(noise_seed, sample.id, t_ref, x.height, x.width, x.channels);
    const ImageTensor z = forward_noise(x, t_ref, eps, s);
    const Vec y = embed_caption(sample.caption, p.arch.caption_dim);
    const int ts[1] = {t_ref};
    const Mat pred = denoiser_forward_batch(p, z.pixels, y, ts, &cache_);
    recon_ = ImageTensor(x.height, x.width, x.channels, (z.pixels / std::sqrt(ab) + coef_ * pred.col(0)).eval());
  }

  Vec grad(const ImageTensor& x0, const Mask& M) const {
    const ImageTensor gx = copy_sim_grad(recon_, x0, M);
    Vec g = Vec::Zero(p_.theta.size());
    denoiser_backward_batch(p_, cache_, coef_ * gx.pixels, &g, nullptr);
    return g;
  }

 private:
  const DenoiserParams& p_;
  double coef_ = 0.0;
  ForwardCache cache_;
  ImageTensor recon_;
};

}  // namespace

std::string to_string(ObjectiveMode m) {
  switch (m) {
    case ObjectiveMode::kCopyrightSpatial: return "copyright_spatial";
    case ObjectiveMode::kTrakLoss: return "trak_loss";
    case ObjectiveMode::kDtrakNorm: return "dtrak_norm";
  }
  return "unknown";
}

ObjectiveMode parse_objective(const std::string& s) {
  if (s == "copyright_spatial") return ObjectiveMode::kCopyrightSpatial;
  if (s == "trak_loss") return ObjectiveMode::kTrakLoss;
  if (s == "dtrak_norm") return ObjectiveMode::kDtrakNorm;
  throw ConfigError("unknown objective mode: " + s);
}

std::vector<int> DrawConfig::timesteps(int T) const {
  if (draws < 1) throw ConfigError("need at least one gradient draw");
  if (T < 1) throw ConfigError("schedule has no timesteps");
  std::vector<int> ts;
  if (draws == 1) return {(T + 1) / 2};
  for (int e = 0; e < draws; ++e) ts.push_back(1 + int(std::lround(double(e) * double(T - 1) / double(draws - 1))));
  return ts;
}

std::string DrawConfig::hash() const {
  std::ostringstream os;
  os << "draws=" << draws << ";noise_seed=" << noise_seed;
  std::ostringstream hex;
  hex << std::hex << fnv1a(os.str());
  return hex.str();
}

Vec mean_loss_grad(const DenoiserParams& p, const TrainingSample& sample, const NoiseSchedule& s,
                   const DrawConfig& draws) {
  Vec g = loss_grad_on(p, sample.image, sample.caption, sample.id, s, draws);
  require_finite(g, sample.id);
  return g;
}

GradFeature grad_feature(const DenoiserParams& p, const TrainingSample& sample, const ProjectionMatrix& P,
                         const NoiseSchedule& s, const DrawConfig& draws) {
  if (P.d() != p.theta.size()) throw DimensionError("projection dimension does not match the model");
  return {P.project(mean_loss_grad(p, sample, s, draws)), sample.id, draws.hash()};
}

FeatureBank::FeatureBank(Mat phi, std::vector<int> ids, double lambda, std::uint64_t projection_seed,
                         std::string draw_hash)
    : phi_(std::move(phi)), ids_(std::move(ids)), projection_seed_(projection_seed), draw_hash_(std::move(draw_hash)) {
  if (Eigen::Index(ids_.size()) != phi_.rows()) throw DimensionError("feature bank ids do not match rows");
  if (phi_.cols() < 1) throw DimensionError("feature bank needs k >= 1");
  if (!phi_.allFinite()) throw NumericError("feature bank contains non-finite entries");
  const Eigen::Index k = phi_.cols();
  const auto order = id_order(ids_);
  Mat sorted(phi_.rows(), k);
  for (std::size_t r = 0; r < order.size(); ++r) sorted.row(Eigen::Index(r)) = phi_.row(order[r]);
  gram_ = sorted.transpose() * sorted;
  // Exact symmetry regardless of how the product was blocked.
  gram_ = (0.5 * (gram_ + gram_.transpose())).eval();
  if (lambda < 0.0) {
    const double tr = gram_.trace();
    lambda = tr > 0.0 ? kDefaultDampingScale * tr / double(k) : kDefaultDampingScale;
  }
  lambda_ = lambda;
  gram_.diagonal().array() += lambda_;
  Eigen::LLT<Mat> llt(gram_);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-15))
    throw NumericError("Gram matrix is singular; use a damping lambda > 0");
  gram_inv_ = llt.solve(Mat::Identity(k, k));
  gram_inv_ = (0.5 * (gram_inv_ + gram_inv_.transpose())).eval();
}

Vec FeatureBank::solve(const Vec& v) const {
  if (v.size() != k()) throw DimensionError("feature length does not match the bank");
  return gram_inv_ * v;
}

Mat FeatureBank::solve(const Mat& V) const {
  if (V.rows() != k()) throw DimensionError("feature length does not match the bank");
  return gram_inv_ * V;
}

FeatureBank grad_features(const DenoiserParams& p, const std::vector<TrainingSample>& data,
                          const ProjectionMatrix& P, const NoiseSchedule& s, const DrawConfig& draws,
                          double lambda) {
  if (data.empty()) throw ConfigError("grad_features on an empty dataset");
  if (!p.theta.allFinite()) throw NumericError("model parameters are not finite");
  if (P.d() != p.theta.size()) throw DimensionError("projection dimension does not match the model");
  const Eigen::Index n = Eigen::Index(data.size());
  Mat phi(n, P.k());
  std::vector<int> ids(n);
  for (Eigen::Index i = 0; i < n; ++i) ids[i] = data[i].id;
  const auto order = id_order(ids);
  for (Eigen::Index start = 0; start < n; start += kSampleBlock) {
    const Eigen::Index b = std::min(kSampleBlock, n - start);
    Mat G(p.theta.size(), b);
    for (Eigen::Index j = 0; j < b; ++j) G.col(j) = mean_loss_grad(p, data[order[start + j]], s, draws);
    const Mat proj = P.project(G).transpose();
    for (Eigen::Index j = 0; j < b; ++j) phi.row(order[start + j]) = proj.row(j);
  }
  return FeatureBank(std::move(phi), std::move(ids), lambda, P.seed(), draws.hash());
}

Vec trak_score(const FeatureBank& bank, const Vec& phi_target) { return bank.phi() * bank.solve(phi_target); }

Vec delta_theta(const FeatureBank& bank, const ProjectionMatrix& P, const Vec& phi_i) {
  if (P.k() != bank.k()) throw DimensionError("projection k does not match the bank");
  return P.lift(bank.solve(phi_i));
}

Vec spatial_objective_grad(const DenoiserParams& p, const TrainingSample& sample, const ImageTensor& x0,
                           const Mask& M, int t_ref, const NoiseSchedule& s, std::uint64_t noise_seed) {
  return SpatialObjective(p, sample, t_ref, s, noise_seed).grad(x0, M);
}

ScoreMatrix copyright_scores(const DenoiserParams& p, const std::vector<TrainingSample>& data, const ImageTensor& x0,
                             const std::vector<Mask>& masks, const std::vector<std::string>& phrases,
                             const ProjectionMatrix& P, const FeatureBank& bank, int t_ref, const NoiseSchedule& s) {
  if (data.empty()) throw ConfigError("copyright_scores on an empty dataset");
  if (masks.size() != phrases.size()) throw DimensionError("one mask per phrase required");
  if (bank.size() != Eigen::Index(data.size())) throw DimensionError("feature bank does not match the dataset");
  if (P.k() != bank.k() || P.d() != p.theta.size()) throw DimensionError("projection does not match bank or model");
  bool any = false;
  for (const auto& m : masks) any = any || !m.empty();
  if (!any) throw DetectionError("every phrase mask is empty; detection impossible");

  const Eigen::Index n = Eigen::Index(data.size());
  ScoreMatrix out;
  out.raw = Mat::Zero(n, Eigen::Index(masks.size()));
  out.phrases = phrases;
  out.mode = ObjectiveMode::kCopyrightSpatial;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data[i].id != bank.ids()[i]) throw DimensionError("feature bank row order does not match the dataset");
    out.ids.push_back(data[i].id);
  }

  const auto order = id_order(out.ids);
  for (Eigen::Index start = 0; start < n; start += kSampleBlock) {
    const Eigen::Index b = std::min(kSampleBlock, n - start);
    Mat block(bank.k(), b);
    for (Eigen::Index j = 0; j < b; ++j) block.col(j) = bank.phi().row(order[start + j]).transpose();
    // Training on sample i moves theta along -grad L_i, i.e. along -P G^{-1} phi_i.
    const Mat step = -P.lift(bank.solve(block));
    for (Eigen::Index j = 0; j < b; ++j) {
      const Eigen::Index row = order[start + j];
      const SpatialObjective obj(p, data[row], t_ref, s, kReconstructNoiseSeed);
      for (std::size_t q = 0; q < masks.size(); ++q) {
        if (masks[q].empty()) continue;
        out.raw(row, Eigen::Index(q)) = obj.grad(x0, masks[q]).dot(step.col(j));
      }
    }
  }
  return out;
}

ScoreMatrix copyright_scores(const DenoiserParams& p, const std::vector<TrainingSample>& data, const ImageTensor& x0,
                             const std::vector<Mask>& masks, const std::vector<std::string>& phrases,
                             const ProjectionMatrix& P, double lambda, int t_ref, const NoiseSchedule& s,
                             const DrawConfig& draws) {
  const FeatureBank bank = grad_features(p, data, P, s, draws, lambda);
  return copyright_scores(p, data, x0, masks, phrases, P, bank, t_ref, s);
}

Vec measurement_feature(const DenoiserParams& p, const ImageTensor& x0, const Caption& trigger,
                        const ProjectionMatrix& P, ObjectiveMode mode, const NoiseSchedule& s,
                        const DrawConfig& draws) {
  Vec g;
  switch (mode) {
    case ObjectiveMode::kTrakLoss:
      g = loss_grad_on(p, x0, trigger, kMeasurementId, s, draws);
      break;
    case ObjectiveMode::kDtrakNorm: {
      const DrawBatch b = make_draws(x0, trigger, kMeasurementId, s, draws, p.arch.caption_dim);
      ForwardCache cache;
      const Mat out = denoiser_forward_batch(p, b.Z, b.Y, b.ts, &cache);
      g = Vec::Zero(p.theta.size());
      denoiser_backward_batch(p, cache, (2.0 / double(out.cols())) * out, &g, nullptr);
      break;
    }
    case ObjectiveMode::kCopyrightSpatial:
      throw ConfigError("baseline measurement needs mode trak_loss or dtrak_norm");
  }
  require_finite(g, kMeasurementId);
  return P.project(g);
}

Vec baseline_scores(const DenoiserParams& p, const ImageTensor& x0, const Caption& trigger,
                    const ProjectionMatrix& P, const FeatureBank& bank, ObjectiveMode mode, const NoiseSchedule& s,
                    const DrawConfig& draws) {
  return trak_score(bank, measurement_feature(p, x0, trigger, P, mode, s, draws));
}

double eval_lds(const Vec& scores, const std::vector<std::vector<int>>& subsets, const Vec& actual_outputs) {
  if (subsets.size() < 5) throw ConfigError("LDS needs at least 5 subsets");
  if (Eigen::Index(subsets.size()) != actual_outputs.size()) throw DimensionError("one actual output per subset");
  Vec predicted(Eigen::Index(subsets.size()));
  for (std::size_t m = 0; m < subsets.size(); ++m) {
    if (subsets[m].empty()) throw ConfigError("LDS subsets must be nonempty");
    double sum = 0.0;
    for (int i : subsets[m]) {
      if (i < 0 || i >= scores.size()) throw IndexError("LDS subset index out of range");
      sum += scores[i];
    }
    predicted[Eigen::Index(m)] = sum;
  }
  return spearman(predicted, actual_outputs);
}

namespace {

constexpr char kBankMagic[4] = {'S', 'H', 'F', 'B'};
constexpr std::uint32_t kBankVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("feature bank truncated");
  return v;
}

}  // namespace

void save_bank(const std::filesystem::path& path, const FeatureBank& bank) {
  static_assert(std::endian::native == std::endian::little, "little-endian host assumed");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write feature bank " + path.string());
  os.write(kBankMagic, 4);
  put<std::uint32_t>(os, kBankVersion);
  put<std::uint64_t>(os, std::uint64_t(bank.size()));
  put<std::uint64_t>(os, std::uint64_t(bank.k()));
  put<double>(os, bank.lambda());
  put<std::uint64_t>(os, bank.projection_seed());
  put<std::uint32_t>(os, std::uint32_t(bank.draw_hash().size()));
  os.write(bank.draw_hash().data(), std::streamsize(bank.draw_hash().size()));
  for (int id : bank.ids()) put<std::int32_t>(os, id);
  for (Eigen::Index i = 0; i < bank.size(); ++i)
    for (Eigen::Index j = 0; j < bank.k(); ++j) put<double>(os, bank.phi()(i, j));
}

FeatureBank load_bank(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read feature bank " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kBankMagic, 4) != 0) throw IoError("not a feature bank: bad magic");
  if (get<std::uint32_t>(is) != kBankVersion) throw IoError("unsupported feature bank version");
  const auto n = Eigen::Index(get<std::uint64_t>(is));
  const auto k = Eigen::Index(get<std::uint64_t>(is));
  const double lambda = get<double>(is);
  const auto seed = get<std::uint64_t>(is);
  std::string hash(get<std::uint32_t>(is), '\0');
  if (!is.read(hash.data(), std::streamsize(hash.size()))) throw IoError("feature bank truncated");
  std::vector<int> ids(n);
  for (auto& id : ids) id = get<std::int32_t>(is);
  Mat phi(n, k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < k; ++j) phi(i, j) = get<double>(is);
  return FeatureBank(std::move(phi), std::move(ids), lambda, seed, std::move(hash));
}

std::string scores_to_csv(const ScoreMatrix& m) {
  CsvRow header{"id"};
  header.insert(header.end(), m.phrases.begin(), m.phrases.end());
  std::vector<CsvRow> rows;
  for (Eigen::Index i = 0; i < m.raw.rows(); ++i) {
    CsvRow r{std::to_string(m.ids[i])};
    for (Eigen::Index j = 0; j < m.raw.cols(); ++j) r.push_back(format_double(m.raw(i, j)));
    rows.push_back(std::move(r));
  }
  return to_csv(header, rows);
}

ScoreMatrix scores_from_csv(const std::string& text, ObjectiveMode mode) {
  const auto rows = parse_csv(text);
  if (rows.empty() || rows[0].empty() || rows[0][0] != "id") throw IoError("score CSV lacks an id header");
  ScoreMatrix m;
  m.mode = mode;
  m.phrases.assign(rows[0].begin() + 1, rows[0].end());
  m.raw.resize(Eigen::Index(rows.size() - 1), Eigen::Index(m.phrases.size()));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw IoError("score CSV row has the wrong width");
    int id = 0;
    const auto& f = rows[i][0];
    const auto res = std::from_chars(f.data(), f.data() + f.size(), id);
    if (res.ec != std::errc() || res.ptr != f.data() + f.size()) throw IoError("score CSV id is not an integer: " + f);
    m.ids.push_back(id);
    for (std::size_t j = 1; j < rows[i].size(); ++j) m.raw(Eigen::Index(i - 1), Eigen::Index(j - 1)) = parse_double(rows[i][j]);
  }
  return m;
}

}  // namespace shield
