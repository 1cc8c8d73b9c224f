#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "shield/defense.hpp"
#include "shield/forge.hpp"

namespace shield {

struct ExperimentConfig {
  SceneStyle scenario = SceneStyle::kDomain;
  int dataset_size = 600;
  double poison_rate = 0.1;  // 0 runs a clean control
  int elements = 4;
  double stealth_threshold = 0.5;

  DenoiserArch arch;
  int timesteps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double skip_mean = 0.5;
  double skip_stddev = 0.1;  // <= 0 disables the prior skip
  OptimConfig optim;
  double guidance = 7.5;

  int projection_dim = 128;
  double lambda = -1.0;  // negative: 1e-6 * trace(Phi^T Phi) / k
  int draws = 8;
  int t_ref = 0;  // 0: T / 4
  double segment_tolerance = 0.4;

  double threshold = kDefaultThreshold;
  DefenseMode defense_mode = DefenseMode::kFull;

  int epochs = 100;
  int g_cir = 100;
  int g_fae = 10;
  int heldout_size = 100;
  std::uint64_t seed = 7;

  NoiseSchedule schedule() const;
  int reference_timestep() const;
  void validate() const;
  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  // FNV-1a over the canonical (key-sorted) JSON; independent of key order in
  // the source file.
  std::string hash() const;
};

// Fresh parameters for `cfg` with the prior skip attached.
DenoiserParams make_model(const ExperimentConfig& cfg, const NoiseSchedule& s);
// Loaded parameters get the prior skip re-attached; it is not checkpointed.
DenoiserParams load_model(const ExperimentConfig& cfg, const std::filesystem::path& path, const NoiseSchedule& s);

using ImageGenerator = std::function<ImageTensor(RngStream&)>;

// Fraction of G draws from `gen` that infringe on `target`.
double compute_cir(const ImageGenerator& gen, const CopyrightTarget& target, int G, RngStream& rng);
double compute_cir(const DenoiserParams& p, const Caption& trigger, const CopyrightTarget& target, int G,
                   RngStream& rng, const NoiseSchedule& s, double guidance);

// First 1-based epoch whose probe similarity exceeds 0.5; `cap` if none.
int compute_fae(const std::vector<double>& probe_similarity, int cap);

// Max similarity to the target over `g` trigger generations, drawn from the
// probe stream keyed by epoch.
double probe_similarity(const DenoiserParams& p, const CopyrightTarget& target, int g, const NoiseSchedule& s,
                        double guidance, std::uint64_t seed, int epoch);

// Mean noise-prediction loss over the draw timesteps with keyed noise.
double heldout_loss(const DenoiserParams& p, const std::vector<TrainingSample>& heldout, const NoiseSchedule& s,
                    const DrawConfig& draws = {});

void save_target(const std::filesystem::path& path, const CopyrightTarget& t);
CopyrightTarget load_target(const std::filesystem::path& path);

struct ModelMetrics {
  double cir = 0.0;
  int fae = 0;
  double quality = 0.0;  // held-out clean loss
};

struct RunReport {
  std::string config_hash;
  std::uint64_t seed = 0;
  double poison_rate = 0.0;
  std::string defense_mode;
  ModelMetrics undefended;
  ModelMetrics defended;
  DetectionMetrics detection;
  int flagged = 0;
  double threshold = 0.0;
  double detection_auc = 0.0;  // max normalized score, poisoned vs clean; NaN without both classes
  std::vector<std::string> phrases;
  std::vector<std::string> masks;  // run-length encoded
  std::string dataset_hash;

  std::string to_json() const;
  static RunReport from_json(const std::string& text);
};

// One run directory:
//   config.json dataset/ target.json checkpoints/ attack_trace.csv exemplar.json
//   scores.csv detection.csv defense_trace.csv report.json summary.csv timing.json
// Every stage reads its inputs from disk and skips itself when its outputs
// already exist, so an interrupted run resumes where it stopped.
class Experiment {
 public:
  Experiment(ExperimentConfig cfg, std::filesystem::path dir);

  const ExperimentConfig& config() const { return cfg_; }
  const std::filesystem::path& dir() const { return dir_; }

  void forge();
  void train();
  void attribute();
  void detect();
  void defend();
  RunReport evaluate();
  RunReport run_all();

  // Wraps a stage so library errors surface as StageError tagged with `name`.
  template <class F>
  auto stage(const std::string& name, F&& f) -> decltype(f());

 private:
  void require(const std::string& stage, const std::vector<std::string>& files) const;
  bool done(const std::vector<std::string>& files) const;
  void record_time(const std::string& stage, double seconds);

  ExperimentConfig cfg_;
  std::filesystem::path dir_;
  NoiseSchedule sched_;
};

RunReport run_full(const ExperimentConfig& cfg, const std::filesystem::path& dir);

// Table-style rows (rate, Pre, Rec, F1, CIR, FAE), one per report, plus the
// mean row when several are given.
std::string summary_csv(const std::vector<RunReport>& reports);

template <class F>
auto Experiment::stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace shield
