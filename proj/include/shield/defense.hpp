#pragma once

#include <functional>
#include <string>
#include <vector>

#include "shield/detector.hpp"
#include "shield/diffusion.hpp"

namespace shield {

enum class DefenseMode { kFull, kRemoveOnly, kPenaltyAll };

std::string to_string(DefenseMode m);
DefenseMode parse_defense_mode(const std::string& s);

// Masked pixels replaced by the per-channel mean of the unmasked pixels.
ImageTensor cleanse_image(const ImageTensor& z, const Mask& m);

struct PenaltyEntry {
  int id = -1;
  double weight = 0.0;
  ImageTensor image;
  ImageTensor cleansed;
  Caption caption;
};

struct DefensePlan {
  DefenseMode mode = DefenseMode::kFull;
  std::vector<int> excluded;  // ids left out of the base loss
  std::vector<PenaltyEntry> penalty;
};

// full: flagged samples keep training and get a penalty toward their image
// cleansed on the mask of their top phrase. remove_only: flagged samples are
// dropped. penalty_all: every sample is penalized with its normalized score.
DefensePlan make_plan(const std::vector<TrainingSample>& data, const DetectionResult& det,
                      const std::vector<Mask>& phrase_masks, DefenseMode mode);

inline constexpr int kPenaltyBatch = 4;

struct PenaltyDraw {
  int entry = 0;
  int t = 1;
  ImageTensor eps;
};

struct PenaltyValue {
  double loss = 0.0;
  Vec grad;
};

// mean_j w_j * mse(eps_hat(z_t, y_j, t), eps_d) with z_t from the original
// image and eps_d the noise that maps z_t back to the cleansed image.
PenaltyValue penalty_loss(const DenoiserParams& p, const std::vector<PenaltyEntry>& entries,
                          const std::vector<PenaltyDraw>& draws, const NoiseSchedule& s);

// Draws up to kPenaltyBatch entries, t and noise from `rng`. An empty penalty
// set returns zeros without touching the stream.
PenaltyValue penalty_term(const DenoiserParams& p, const DefensePlan& plan, const NoiseSchedule& s, RngStream& rng);

struct EpochRecord {
  int epoch = 0;
  double base_loss = 0.0;
  double penalty = 0.0;
  double probe = 0.0;
};

// Called after every epoch; returns the probe similarity for the trace.
using EpochProbe = std::function<double(const DenoiserParams&, int epoch)>;

struct DefenseRun {
  DenoiserParams params;
  OptimState optimizer;
  std::vector<EpochRecord> trace;
};

DefenseRun defend_train(const DenoiserParams& init, const std::vector<TrainingSample>& data, const DefensePlan& plan,
                        int epochs, const OptimConfig& opt, const NoiseSchedule& s, RngStream& training,
                        RngStream& penalty, const EpochProbe& probe = {});

std::string trace_to_csv(const std::vector<EpochRecord>& trace);
std::vector<EpochRecord> trace_from_csv(const std::string& text);

}  // namespace shield
