#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "shield/caption.hpp"
#include "shield/dataset.hpp"
#include "shield/image.hpp"
#include "shield/rng.hpp"

namespace shield {

// Linear-beta DDPM schedule. Timesteps are 1-based: t in [1, T].
struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  double beta(int t) const { return betas[check(t)]; }
  double alpha(int t) const { return alphas[check(t)]; }
  double alpha_bar(int t) const { return alpha_bars[check(t)]; }

 private:
  std::size_t check(int t) const {
    if (t < 1 || t > T) throw IndexError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
    return std::size_t(t - 1);
  }
};

NoiseSchedule build_schedule(int T, double beta_start, double beta_end);

// z_t = sqrt(abar_t) x + sqrt(1 - abar_t) eps
ImageTensor forward_noise(const ImageTensor& x, int t, const ImageTensor& eps, const NoiseSchedule& s);

// Fixed 3-layer tanh MLP: [vec(z); emb(t); y] -> H -> H -> D.
struct DenoiserArch {
  int image_height = 16;
  int image_width = 16;
  int channels = 3;
  int hidden = 128;
  int time_dim = 16;
  int caption_dim = kDefaultCaptionDim;

  int image_dim() const { return image_height * image_width * channels; }
  int input_dim() const { return image_dim() + time_dim + caption_dim; }
  Eigen::Index num_params() const;
  bool operator==(const DenoiserArch&) const = default;
};

// Parameter-free skip added to the MLP output:
//   skip(z, t) = c_t (z - sqrt(abar_t) mu),  c_t = sqrt(1 - abar_t) / (abar_t s^2 + 1 - abar_t)
// which is the exact noise predictor for an isotropic N(mu, s^2) pixel prior.
// It gives the bottlenecked MLP an identity path; directions the MLP cannot
// represent then denoise toward the prior instead of diverging. Empty tables
// mean no skip.
struct PriorSkip {
  double mean = 0.5;
  double stddev = 0.2;
  std::vector<double> scale;  // c_t, index t - 1
  std::vector<double> shift;  // c_t sqrt(abar_t) mu

  bool enabled() const { return !scale.empty(); }
};

PriorSkip make_prior_skip(const NoiseSchedule& s, double mean, double stddev);

// Flat parameter vector. Layout: W1 (H x In, column-major), b1, W2 (H x H),
// b2, W3 (D x H), b3. The skip tables are derived from the schedule and are
// not trainable or checkpointed.
struct DenoiserParams {
  DenoiserArch arch;
  Vec theta;
  PriorSkip skip;

  DenoiserParams() = default;
  explicit DenoiserParams(const DenoiserArch& a) : arch(a), theta(Vec::Zero(a.num_params())) {}

  Eigen::Map<const Mat> W1() const;
  Eigen::Map<const Vec> b1() const;
  Eigen::Map<const Mat> W2() const;
  Eigen::Map<const Vec> b2() const;
  Eigen::Map<const Mat> W3() const;
  Eigen::Map<const Vec> b3() const;

  // Scaled-normal init (std 1/sqrt(fan_in)), zero biases.
  static DenoiserParams init(const DenoiserArch& arch, RngStream& rng);
};

Vec timestep_embedding(int t, int dim);

// Activations kept from a batched forward pass for the backward pass.
struct ForwardCache {
  Mat input;  // In x B
  Mat h1;     // H x B, post-tanh
  Mat h2;     // H x B, post-tanh
  std::vector<int> ts;
};

// Batched forward: Z is D x B, Y is E_c x B, one timestep per column.
Mat denoiser_forward_batch(const DenoiserParams& p, const Mat& Z, const Mat& Y, std::span<const int> ts,
                           ForwardCache* cache = nullptr);

// Reverse mode for <upstream, eps_hat>. Adds the summed parameter gradient
// into *grad_theta (if non-null) and writes the input gradient w.r.t. Z into
// *grad_z (if non-null).
void denoiser_backward_batch(const DenoiserParams& p, const ForwardCache& cache, const Mat& upstream,
                             Vec* grad_theta, Mat* grad_z);

ImageTensor denoiser_forward(const DenoiserParams& p, const ImageTensor& z, const Vec& y, int t);

struct DenoiserGrad {
  Vec grad_theta;
  ImageTensor grad_z;
};
DenoiserGrad denoiser_backward(const DenoiserParams& p, const ImageTensor& z, const Vec& y, int t,
                               const ImageTensor& upstream);

double train_loss(const DenoiserParams& p, const TrainingSample& sample, int t, const ImageTensor& eps,
                  const NoiseSchedule& s);

// Loss value and parameter gradient of the mean-squared noise error.
double train_loss_grad(const DenoiserParams& p, const TrainingSample& sample, int t, const ImageTensor& eps,
                       const NoiseSchedule& s, Vec& grad);

struct OptimConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW); 0 gives plain Adam
  int batch_size = 8;
  double caption_dropout = 0.1;
};

struct OptimState {
  Vec m;
  Vec v;
  std::int64_t step = 0;
  OptimConfig cfg;

  OptimState() = default;
  OptimState(Eigen::Index d, const OptimConfig& c) : m(Vec::Zero(d)), v(Vec::Zero(d)), cfg(c) {}
  void apply(Vec& theta, const Vec& grad);
};

struct EpochStats {
  double mean_loss = 0.0;
  double mean_extra = 0.0;
  int steps = 0;
};

// Called once per optimizer step with the current parameters; adds its
// gradient into `grad` and returns its loss contribution.
using ExtraGradient = std::function<double(const DenoiserParams&, Vec& grad)>;

// One shuffled pass over `data`. Per sample the training stream supplies,
// in order: caption dropout coin, t ~ U[1, T], eps ~ N(0, I).
EpochStats train_epoch(DenoiserParams& p, OptimState& opt, const std::vector<TrainingSample>& data,
                       const NoiseSchedule& s, RngStream& rng, const ExtraGradient& extra = {});

// Ancestral DDPM sampling with classifier-free guidance
// eps = eps_u + w (eps_c - eps_u); w == 1 skips the unconditional branch.
std::vector<ImageTensor> sample_images(const DenoiserParams& p, const Caption& c, double w, const NoiseSchedule& s,
                                       RngStream& rng, int count);
ImageTensor sample_image(const DenoiserParams& p, const Caption& c, double w, const NoiseSchedule& s,
                         RngStream& rng);
// Pure conditional sampling (no unconditional branch at all).
std::vector<ImageTensor> sample_images_conditional(const DenoiserParams& p, const Caption& c,
                                                   const NoiseSchedule& s, RngStream& rng, int count);

// Noise keyed by (sample id, t) so any stage can regenerate it.
ImageTensor keyed_noise(std::uint64_t base_seed, int sample_id, int t, int h, int w, int c);

inline constexpr std::uint64_t kReconstructNoiseSeed = 0x5eed5eed5eedULL;

// One-step reconstruction x_hat = (z_t - sqrt(1 - abar) eps_hat) / sqrt(abar)
// with z_t built from the keyed noise for (sample.id, t_ref).
ImageTensor reconstruct(const DenoiserParams& p, const TrainingSample& sample, int t_ref, const NoiseSchedule& s,
                        std::uint64_t noise_seed = kReconstructNoiseSeed);

// Checkpoint: "SHLD", u32 version, 6 x u32 (D, H, E_t, E_c, T, channels),
// then the parameters as little-endian f64.
void save_checkpoint(const std::filesystem::path& path, const DenoiserParams& p, int T);
DenoiserParams load_checkpoint(const std::filesystem::path& path, int* T = nullptr);

}  // namespace shield
