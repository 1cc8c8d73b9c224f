#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "shield/diffusion.hpp"
#include "shield/projection.hpp"

namespace shield {

enum class ObjectiveMode { kCopyrightSpatial, kTrakLoss, kDtrakNorm };

std::string to_string(ObjectiveMode m);
ObjectiveMode parse_objective(const std::string& s);

inline constexpr std::uint64_t kFeatureNoiseSeed = 0xfea7fea7fea7ULL;
inline constexpr double kDefaultDampingScale = 1e-6;

// Gradient draws: `draws` timesteps evenly spaced over [1, T], noise keyed by
// (sample id, t) from `noise_seed`.
struct DrawConfig {
  int draws = 8;
  std::uint64_t noise_seed = kFeatureNoiseSeed;

  std::vector<int> timesteps(int T) const;
  std::string hash() const;
};

// Mean over the draws of the parameter gradient of the noise-prediction loss.
Vec mean_loss_grad(const DenoiserParams& p, const TrainingSample& sample, const NoiseSchedule& s,
                   const DrawConfig& draws);

struct GradFeature {
  Vec vector;
  int sample_id = -1;
  std::string draw_hash;
};

GradFeature grad_feature(const DenoiserParams& p, const TrainingSample& sample, const ProjectionMatrix& P,
                         const NoiseSchedule& s, const DrawConfig& draws);

// Stacked features Phi (N x k) with the damped k x k Gram G = Phi^T Phi + lambda I
// factored once. A negative lambda selects 1e-6 * trace(Phi^T Phi) / k.
class FeatureBank {
 public:
  FeatureBank() = default;
  FeatureBank(Mat phi, std::vector<int> ids, double lambda = -1.0, std::uint64_t projection_seed = 0,
              std::string draw_hash = {});

  const Mat& phi() const { return phi_; }
  const std::vector<int>& ids() const { return ids_; }
  Eigen::Index size() const { return phi_.rows(); }
  Eigen::Index k() const { return phi_.cols(); }
  double lambda() const { return lambda_; }
  std::uint64_t projection_seed() const { return projection_seed_; }
  const std::string& draw_hash() const { return draw_hash_; }

  const Mat& gram() const { return gram_; }
  const Mat& gram_inverse() const { return gram_inv_; }

  // G^{-1} v
  Vec solve(const Vec& v) const;
  Mat solve(const Mat& V) const;

 private:
  Mat phi_;
  std::vector<int> ids_;
  double lambda_ = 0.0;
  std::uint64_t projection_seed_ = 0;
  std::string draw_hash_;
  Mat gram_;
  Mat gram_inv_;
};

FeatureBank grad_features(const DenoiserParams& p, const std::vector<TrainingSample>& data,
                          const ProjectionMatrix& P, const NoiseSchedule& s, const DrawConfig& draws = {},
                          double lambda = -1.0);

// tau_i = phi_target^T G^{-1} phi_i
Vec trak_score(const FeatureBank& bank, const Vec& phi_target);

// P G^{-1} phi_i
Vec delta_theta(const FeatureBank& bank, const ProjectionMatrix& P, const Vec& phi_i);

inline int default_t_ref(int T) { return std::max(1, T / 4); }

// d/dtheta copy_sim(reconstruct(theta; sample, t_ref), x0, M)
Vec spatial_objective_grad(const DenoiserParams& p, const TrainingSample& sample, const ImageTensor& x0,
                           const Mask& M, int t_ref, const NoiseSchedule& s,
                           std::uint64_t noise_seed = kReconstructNoiseSeed);

// Samples x phrases; rows follow the dataset order.
struct ScoreMatrix {
  Mat raw;
  std::vector<std::string> phrases;
  std::vector<int> ids;
  ObjectiveMode mode = ObjectiveMode::kCopyrightSpatial;
};

// raw[i][j] = g_i(mask_j)^T dtheta_i with dtheta_i the parameter step that
// training on sample i induces. Phrases whose mask is empty get a zero column.
ScoreMatrix copyright_scores(const DenoiserParams& p, const std::vector<TrainingSample>& data, const ImageTensor& x0,
                             const std::vector<Mask>& masks, const std::vector<std::string>& phrases,
                             const ProjectionMatrix& P, const FeatureBank& bank, int t_ref, const NoiseSchedule& s);

ScoreMatrix copyright_scores(const DenoiserParams& p, const std::vector<TrainingSample>& data, const ImageTensor& x0,
                             const std::vector<Mask>& masks, const std::vector<std::string>& phrases,
                             const ProjectionMatrix& P, double lambda, int t_ref, const NoiseSchedule& s,
                             const DrawConfig& draws = {});

// Projected gradient of the baseline measurement on (x0, trigger):
// trak_loss uses the noise-prediction loss, dtrak_norm the squared output norm.
Vec measurement_feature(const DenoiserParams& p, const ImageTensor& x0, const Caption& trigger,
                        const ProjectionMatrix& P, ObjectiveMode mode, const NoiseSchedule& s,
                        const DrawConfig& draws = {});

Vec baseline_scores(const DenoiserParams& p, const ImageTensor& x0, const Caption& trigger,
                    const ProjectionMatrix& P, const FeatureBank& bank, ObjectiveMode mode, const NoiseSchedule& s,
                    const DrawConfig& draws = {});

// Spearman correlation between subset-summed scores and actual outputs.
double eval_lds(const Vec& scores, const std::vector<std::vector<int>>& subsets, const Vec& actual_outputs);

// Header (magic, N, k, lambda, projection seed, draw hash) + ids + row-major f64 Phi.
void save_bank(const std::filesystem::path& path, const FeatureBank& bank);
FeatureBank load_bank(const std::filesystem::path& path);

std::string scores_to_csv(const ScoreMatrix& m);
ScoreMatrix scores_from_csv(const std::string& text, ObjectiveMode mode = ObjectiveMode::kCopyrightSpatial);

}  // namespace shield
