#include "shield/diffusion.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace shield {

NoiseSchedule build_schedule(int T, double beta_start, double beta_end) {
  if (T < 2) throw ConfigError("schedule needs T >= 2");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw ConfigError("schedule needs 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(T);
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    const double b = beta_start + (beta_end - beta_start) * double(i) / double(T - 1);
    s.betas[i] = b;
    s.alphas[i] = 1.0 - b;
    prod *= s.alphas[i];
    s.alpha_bars[i] = prod;
  }
  return s;
}

ImageTensor forward_noise(const ImageTensor& x, int t, const ImageTensor& eps, const NoiseSchedule& s) {
  require_same_shape(x, eps, "forward_noise");
  const double ab = s.alpha_bar(t);
  return ImageTensor(x.height, x.width, x.channels, (std::sqrt(ab) * x.pixels + std::sqrt(1.0 - ab) * eps.pixels).eval());
}

PriorSkip make_prior_skip(const NoiseSchedule& s, double mean, double stddev) {
  if (!(stddev > 0.0)) throw ConfigError("prior skip needs a positive stddev");
  PriorSkip k;
  k.mean = mean;
  k.stddev = stddev;
  for (int t = 1; t <= s.T; ++t) {
    const double ab = s.alpha_bar(t);
    const double c = std::sqrt(1.0 - ab) / (ab * stddev * stddev + 1.0 - ab);
    k.scale.push_back(c);
    k.shift.push_back(c * std::sqrt(ab) * mean);
  }
  return k;
}

Eigen::Index DenoiserArch::num_params() const {
  const Eigen::Index in = input_dim(), h = hidden, d = image_dim();
  return h * in + h + h * h + h + d * h + d;
}

namespace {

struct Offsets {
  Eigen::Index w1, b1, w2, b2, w3, b3;
};

Offsets offsets(const DenoiserArch& a) {
  const Eigen::Index in = a.input_dim(), h = a.hidden, d = a.image_dim();
  Offsets o{};
  o.w1 = 0;
  o.b1 = o.w1 + h * in;
  o.w2 = o.b1 + h;
  o.b2 = o.w2 + h * h;
  o.w3 = o.b2 + h;
  o.b3 = o.w3 + d * h;
  return o;
}

std::size_t skip_index(const PriorSkip& k, int t) {
  if (t < 1 || std::size_t(t) > k.scale.size()) throw IndexError("timestep outside the prior-skip table");
  return std::size_t(t - 1);
}

void check_params(const DenoiserParams& p) {
  if (p.theta.size() != p.arch.num_params())
    throw DimensionError("parameter vector does not match the architecture descriptor");
}

}  // namespace

Eigen::Map<const Mat> DenoiserParams::W1() const {
  return {theta.data() + offsets(arch).w1, arch.hidden, arch.input_dim()};
}
Eigen::Map<const Vec> DenoiserParams::b1() const { return {theta.data() + offsets(arch).b1, arch.hidden}; }
Eigen::Map<const Mat> DenoiserParams::W2() const {
  return {theta.data() + offsets(arch).w2, arch.hidden, arch.hidden};
}
Eigen::Map<const Vec> DenoiserParams::b2() const { return {theta.data() + offsets(arch).b2, arch.hidden}; }
Eigen::Map<const Mat> DenoiserParams::W3() const {
  return {theta.data() + offsets(arch).w3, arch.image_dim(), arch.hidden};
}
Eigen::Map<const Vec> DenoiserParams::b3() const { return {theta.data() + offsets(arch).b3, arch.image_dim()}; }

DenoiserParams DenoiserParams::init(const DenoiserArch& arch, RngStream& rng) {
  DenoiserParams p(arch);
  const Offsets o = offsets(arch);
  auto fill = [&](Eigen::Index start, Eigen::Index count, int fan_in) {
    const double sd = 1.0 / std::sqrt(double(fan_in));
    for (Eigen::Index i = 0; i < count; ++i) p.theta[start + i] = sd * rng.normal();
  };
  fill(o.w1, o.b1 - o.w1, arch.input_dim());
  fill(o.w2, o.b2 - o.w2, arch.hidden);
  fill(o.w3, o.b3 - o.w3, arch.hidden);
  return p;
}

Vec timestep_embedding(int t, int dim) {
  Vec e(dim);
  const int half = dim / 2;
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * double(k) / double(half));
    e[k] = std::sin(double(t) * freq);
    e[half + k] = std::cos(double(t) * freq);
  }
  if (dim % 2) e[dim - 1] = 0.0;
  return e;
}

Mat denoiser_forward_batch(const DenoiserParams& p, const Mat& Z, const Mat& Y, std::span<const int> ts,
                           ForwardCache* cache) {
  check_params(p);
  const auto& a = p.arch;
  const Eigen::Index B = Z.cols();
  if (Z.rows() != a.image_dim() || Y.rows() != a.caption_dim || Y.cols() != B || Eigen::Index(ts.size()) != B)
    throw DimensionError("denoiser input dimensions do not match the architecture");

  Mat X(a.input_dim(), B);
  X.topRows(a.image_dim()) = Z;
  for (Eigen::Index j = 0; j < B; ++j) X.col(j).segment(a.image_dim(), a.time_dim) = timestep_embedding(ts[j], a.time_dim);
  X.bottomRows(a.caption_dim) = Y;

  Mat h1 = ((p.W1() * X).colwise() + p.b1()).array().tanh().matrix();
  Mat h2 = ((p.W2() * h1).colwise() + p.b2()).array().tanh().matrix();
  Mat out = (p.W3() * h2).colwise() + p.b3();
  if (p.skip.enabled()) {
    for (Eigen::Index j = 0; j < B; ++j) {
      const auto k = skip_index(p.skip, ts[j]);
      out.col(j).array() += p.skip.scale[k] * Z.col(j).array() - p.skip.shift[k];
    }
  }
  if (cache) {
    cache->ts.assign(ts.begin(), ts.end());
    cache->input = std::move(X);
    cache->h1 = std::move(h1);
    cache->h2 = std::move(h2);
  }
  return out;
}

void denoiser_backward_batch(const DenoiserParams& p, const ForwardCache& c, const Mat& U, Vec* grad_theta,
                             Mat* grad_z) {
  check_params(p);
  const auto& a = p.arch;
  if (U.rows() != a.image_dim() || U.cols() != c.h2.cols()) throw DimensionError("upstream gradient shape mismatch");

  const Mat dA2 = ((p.W3().transpose() * U).array() * (1.0 - c.h2.array().square())).matrix();
  const Mat dA1 = ((p.W2().transpose() * dA2).array() * (1.0 - c.h1.array().square())).matrix();

  if (grad_theta) {
    if (grad_theta->size() != p.theta.size()) throw DimensionError("gradient buffer size mismatch");
    const Offsets o = offsets(a);
    Vec& g = *grad_theta;
    Eigen::Map<Mat>(g.data() + o.w1, a.hidden, a.input_dim()).noalias() += dA1 * c.input.transpose();
    g.segment(o.b1, a.hidden) += dA1.rowwise().sum();
    Eigen::Map<Mat>(g.data() + o.w2, a.hidden, a.hidden).noalias() += dA2 * c.h1.transpose();
    g.segment(o.b2, a.hidden) += dA2.rowwise().sum();
    Eigen::Map<Mat>(g.data() + o.w3, a.image_dim(), a.hidden).noalias() += U * c.h2.transpose();
    g.segment(o.b3, a.image_dim()) += U.rowwise().sum();
  }
  if (grad_z) {
    *grad_z = p.W1().leftCols(a.image_dim()).transpose() * dA1;
    if (p.skip.enabled())
      for (Eigen::Index j = 0; j < U.cols(); ++j) grad_z->col(j) += p.skip.scale[skip_index(p.skip, c.ts[j])] * U.col(j);
  }
}

ImageTensor denoiser_forward(const DenoiserParams& p, const ImageTensor& z, const Vec& y, int t) {
  if (z.size() != p.arch.image_dim()) throw DimensionError("image does not match denoiser input dimension");
  const int ts[1] = {t};
  Mat out = denoiser_forward_batch(p, z.pixels, y, ts);
  return ImageTensor(z.height, z.width, z.channels, Vec(out.col(0)));
}

DenoiserGrad denoiser_backward(const DenoiserParams& p, const ImageTensor& z, const Vec& y, int t,
                               const ImageTensor& upstream) {
  require_same_shape(z, upstream, "denoiser_backward");
  if (z.size() != p.arch.image_dim()) throw DimensionError("image does not match denoiser input dimension");
  const int ts[1] = {t};
  ForwardCache cache;
  denoiser_forward_batch(p, z.pixels, y, ts, &cache);
  DenoiserGrad g{Vec::Zero(p.theta.size()), ImageTensor()};
  Mat gz;
  denoiser_backward_batch(p, cache, upstream.pixels, &g.grad_theta, &gz);
  g.grad_z = ImageTensor(z.height, z.width, z.channels, Vec(gz.col(0)));
  return g;
}

double train_loss(const DenoiserParams& p, const TrainingSample& sample, int t, const ImageTensor& eps,
                  const NoiseSchedule& s) {
  const ImageTensor z = forward_noise(sample.image, t, eps, s);
  const Vec y = embed_caption(sample.caption, p.arch.caption_dim);
  const ImageTensor pred = denoiser_forward(p, z, y, t);
  return (eps.pixels - pred.pixels).squaredNorm() / double(eps.size());
}

double train_loss_grad(const DenoiserParams& p, const TrainingSample& sample, int t, const ImageTensor& eps,
                       const NoiseSchedule& s, Vec& grad) {
  const ImageTensor z = forward_noise(sample.image, t, eps, s);
  const Vec y = embed_caption(sample.caption, p.arch.caption_dim);
  const int ts[1] = {t};
  ForwardCache cache;
  const Mat pred = denoiser_forward_batch(p, z.pixels, y, ts, &cache);
  const Vec diff = pred.col(0) - eps.pixels;
  const double n = double(eps.size());
  if (grad.size() != p.theta.size()) grad = Vec::Zero(p.theta.size());
  denoiser_backward_batch(p, cache, (2.0 / n) * diff, &grad, nullptr);
  return diff.squaredNorm() / n;
}

void OptimState::apply(Vec& theta, const Vec& grad) {
  ++step;
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, double(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(step));
  const double lr = cfg.learning_rate;
  theta.array() -= lr * ((m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon) + cfg.weight_decay * theta.array());
}

EpochStats train_epoch(DenoiserParams& p, OptimState& opt, const std::vector<TrainingSample>& data,
                       const NoiseSchedule& s, RngStream& rng, const ExtraGradient& extra) {
  if (data.empty()) throw ConfigError("train_epoch on an empty dataset");
  check_params(p);
  if (opt.m.size() != p.theta.size()) throw DimensionError("optimizer state does not match parameters");
  const auto& a = p.arch;
  const int D = a.image_dim();
  const int n = int(data.size());
  const int B = std::max(1, opt.cfg.batch_size);

  Mat Yall(a.caption_dim, n);
  for (int i = 0; i < n; ++i) Yall.col(i) = embed_caption(data[i].caption, a.caption_dim);

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);

  EpochStats stats;
  Vec grad(p.theta.size());
  for (int start = 0; start < n; start += B) {
    const int b = std::min(B, n - start);
    Mat Z(D, b), Y(a.caption_dim, b), E(D, b);
    std::vector<int> ts(b);
    for (int j = 0; j < b; ++j) {
      const TrainingSample& smp = data[perm[start + j]];
      if (smp.image.size() != D) throw DimensionError("training image does not match the architecture");
      const bool drop = rng.bernoulli(opt.cfg.caption_dropout);
      ts[j] = rng.uniform_int(1, s.T);
      for (int i = 0; i < D; ++i) E(i, j) = rng.normal();
      const double ab = s.alpha_bar(ts[j]);
      Z.col(j) = std::sqrt(ab) * smp.image.pixels + std::sqrt(1.0 - ab) * E.col(j);
      if (drop)
        Y.col(j).setZero();
      else
        Y.col(j) = Yall.col(perm[start + j]);
    }
    ForwardCache cache;
    const Mat diff = denoiser_forward_batch(p, Z, Y, ts, &cache) - E;
    const double denom = double(D) * b;
    stats.mean_loss += diff.squaredNorm() / denom;
    grad.setZero();
    denoiser_backward_batch(p, cache, (2.0 / denom) * diff, &grad, nullptr);
    if (extra) stats.mean_extra += extra(p, grad);
    opt.apply(p.theta, grad);
    ++stats.steps;
  }
  stats.mean_loss /= stats.steps;
  stats.mean_extra /= stats.steps;
  return stats;
}

namespace {

std::vector<ImageTensor> run_sampler(const DenoiserParams& p, const Caption& c, double w, const NoiseSchedule& s,
                                     RngStream& rng, int count, bool conditional_only) {
  if (w < 0.0) throw ConfigError("guidance scale must be >= 0");
  if (count < 1) return {};
  const auto& a = p.arch;
  const int D = a.image_dim();
  Mat Zt(D, count);
  for (int g = 0; g < count; ++g)
    for (int i = 0; i < D; ++i) Zt(i, g) = rng.normal();

  const Vec yc = embed_caption(c, a.caption_dim);
  const bool single_branch = conditional_only || w == 1.0;
  const int cols = single_branch ? count : 2 * count;
  Mat Y = Mat::Zero(a.caption_dim, cols);
  for (int g = 0; g < count; ++g) Y.col(g) = yc;
  Mat Zin(D, cols);
  std::vector<int> ts(cols);

  for (int t = s.T; t >= 1; --t) {
    std::fill(ts.begin(), ts.end(), t);
    Zin.leftCols(count) = Zt;
    if (!single_branch) Zin.rightCols(count) = Zt;
    const Mat out = denoiser_forward_batch(p, Zin, Y, ts);
    Mat eps;
    if (single_branch) {
      eps = out;
    } else {
      const auto eps_c = out.leftCols(count);
      const auto eps_u = out.rightCols(count);
      eps = eps_u + w * (eps_c - eps_u);
    }
    const double beta = s.beta(t), alpha = s.alpha(t), ab = s.alpha_bar(t);
    Mat mean = (Zt - (beta / std::sqrt(1.0 - ab)) * eps) / std::sqrt(alpha);
    if (t > 1) {
      const double var = beta * (1.0 - s.alpha_bar(t - 1)) / (1.0 - ab);
      const double sd = std::sqrt(var);
      for (int g = 0; g < count; ++g)
        for (int i = 0; i < D; ++i) mean(i, g) += sd * rng.normal();
    }
    Zt = std::move(mean);
  }
  std::vector<ImageTensor> out;
  out.reserve(count);
  for (int g = 0; g < count; ++g)
    out.push_back(ImageTensor(a.image_height, a.image_width, a.channels, Vec(Zt.col(g))).clamped());
  return out;
}

}  // namespace

std::vector<ImageTensor> sample_images(const DenoiserParams& p, const Caption& c, double w, const NoiseSchedule& s,
                                       RngStream& rng, int count) {
  return run_sampler(p, c, w, s, rng, count, false);
}

std::vector<ImageTensor> sample_images_conditional(const DenoiserParams& p, const Caption& c,
                                                   const NoiseSchedule& s, RngStream& rng, int count) {
  return run_sampler(p, c, 1.0, s, rng, count, true);
}

ImageTensor sample_image(const DenoiserParams& p, const Caption& c, double w, const NoiseSchedule& s,
                         RngStream& rng) {
  return sample_images(p, c, w, s, rng, 1).front();
}

ImageTensor keyed_noise(std::uint64_t base_seed, int sample_id, int t, int h, int w, int c) {
  RngStream rng = RngStream(base_seed).child(std::uint64_t(sample_id), std::uint64_t(t));
  ImageTensor e(h, w, c);
  for (Eigen::Index i = 0; i < e.size(); ++i) e.pixels[i] = rng.normal();
  return e;
}

ImageTensor reconstruct(const DenoiserParams& p, const TrainingSample& sample, int t_ref, const NoiseSchedule& s,
                        std::uint64_t noise_seed) {
  const double ab = s.alpha_bar(t_ref);
  const auto& x = sample.image;
  const ImageTensor eps = keyed_noise(noise_seed, sample.id, t_ref, x.height, x.width, x.channels);
  const ImageTensor z = forward_noise(x, t_ref, eps, s);
  const ImageTensor pred = denoiser_forward(p, z, embed_caption(sample.caption, p.arch.caption_dim), t_ref);
  return ImageTensor(x.height, x.width, x.channels,
                     ((z.pixels - std::sqrt(1.0 - ab) * pred.pixels) / std::sqrt(ab)).eval());
}

namespace {

constexpr char kMagic[4] = {'S', 'H', 'L', 'D'};
constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "little-endian host assumed");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DenoiserParams& p, int T) {
  check_params(p);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Written beside the target and renamed, so resume never sees half a file.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint " + path.string());
    os.write(kMagic, 4);
    put<std::uint32_t>(os, kCheckpointVersion);
    const auto& a = p.arch;
    for (int v : {a.image_dim(), a.hidden, a.time_dim, a.caption_dim, T, a.channels}) put<std::uint32_t>(os, std::uint32_t(v));
    for (Eigen::Index i = 0; i < p.theta.size(); ++i) put<double>(os, p.theta[i]);
    if (!os) throw IoError("write failed for checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

DenoiserParams load_checkpoint(const std::filesystem::path& path, int* T) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError("not a checkpoint: bad magic");
  if (get<std::uint32_t>(is) != kCheckpointVersion) throw IoError("unsupported checkpoint version");
  std::array<std::uint32_t, 6> f{};
  for (auto& v : f) v = get<std::uint32_t>(is);
  DenoiserArch a;
  a.channels = int(f[5]);
  const int pixels = int(f[0]) / std::max(1, a.channels);
  const int side = int(std::lround(std::sqrt(double(pixels))));
  if (side * side != pixels) throw IoError("checkpoint image dimension is not square");
  a.image_height = a.image_width = side;
  a.hidden = int(f[1]);
  a.time_dim = int(f[2]);
  a.caption_dim = int(f[3]);
  if (T) *T = int(f[4]);
  DenoiserParams p(a);
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta[i] = get<double>(is);
  return p;
}

}  // namespace shield
