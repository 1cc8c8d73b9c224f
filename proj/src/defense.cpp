#include "shield/defense.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "shield/errors.hpp"
#include "shield/persist.hpp"

namespace shield {

std::string to_string(DefenseMode m) {
  switch (m) {
    case DefenseMode::kFull: return "full";
    case DefenseMode::kRemoveOnly: return "remove_only";
    case DefenseMode::kPenaltyAll: return "penalty_all";
  }
  return "?";
}

DefenseMode parse_defense_mode(const std::string& s) {
  if (s == "full") return DefenseMode::kFull;
  if (s == "remove_only") return DefenseMode::kRemoveOnly;
  if (s == "penalty_all") return DefenseMode::kPenaltyAll;
  throw ConfigError("unknown defense mode: " + s);
}

ImageTensor cleanse_image(const ImageTensor& z, const Mask& m) {
  if (!m.matches(z)) throw DimensionError("mask does not match the image");
  const int support = m.support();
  if (support == 0) return z;
  if (support == m.num_pixels()) throw DefenseError("cannot cleanse under a full-frame mask");
  ImageTensor out = z;
  const int C = z.channels;
  for (int ch = 0; ch < C; ++ch) {
    double sum = 0.0;
    for (int px = 0; px < m.num_pixels(); ++px)
      if (!m.at_flat(px)) sum += z.pixels[Eigen::Index(px) * C + ch];
    const double mean = sum / double(m.num_pixels() - support);
    for (int px = 0; px < m.num_pixels(); ++px)
      if (m.at_flat(px)) out.pixels[Eigen::Index(px) * C + ch] = mean;
  }
  return out;
}

DefensePlan make_plan(const std::vector<TrainingSample>& data, const DetectionResult& det,
                      const std::vector<Mask>& phrase_masks, DefenseMode mode) {
  if (det.flags.size() != data.size()) throw DimensionError("detection rows do not match the dataset");
  if (std::size_t(det.normalized.cols()) != phrase_masks.size())
    throw DimensionError("detection columns do not match the phrase masks");
  const Vec mx = det.max_score();
  const auto arg = det.argmax_phrase();

  DefensePlan plan;
  plan.mode = mode;
  auto entry = [&](std::size_t i) {
    const TrainingSample& smp = data[i];
    const ImageTensor cleansed = arg[i] >= 0 ? cleanse_image(smp.image, phrase_masks[arg[i]]) : smp.image;
    return PenaltyEntry{smp.id, std::clamp(mx[i], 0.0, 1.0), smp.image, cleansed, smp.caption};
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    switch (mode) {
      case DefenseMode::kFull:
        if (det.flags[i]) plan.penalty.push_back(entry(i));
        break;
      case DefenseMode::kRemoveOnly:
        if (det.flags[i]) plan.excluded.push_back(data[i].id);
        break;
      case DefenseMode::kPenaltyAll:
        plan.penalty.push_back(entry(i));
        break;
    }
  }
  return plan;
}

PenaltyValue penalty_loss(const DenoiserParams& p, const std::vector<PenaltyEntry>& entries,
                          const std::vector<PenaltyDraw>& draws, const NoiseSchedule& s) {
  PenaltyValue out{0.0, Vec::Zero(p.theta.size())};
  if (draws.empty()) return out;
  const auto& a = p.arch;
  const int D = a.image_dim();
  const int B = int(draws.size());
  Mat Z(D, B), Y(a.caption_dim, B), target(D, B);
  Vec w(B);
  std::vector<int> ts(B);
  for (int j = 0; j < B; ++j) {
    const PenaltyDraw& d = draws[j];
    const PenaltyEntry& e = entries.at(d.entry);
    if (e.image.size() != D || e.cleansed.size() != D || d.eps.size() != D)
      throw DimensionError("penalty image does not match the architecture");
    const double ab = s.alpha_bar(d.t);
    ts[j] = d.t;
    Z.col(j) = std::sqrt(ab) * e.image.pixels + std::sqrt(1.0 - ab) * d.eps.pixels;
    target.col(j) = (Z.col(j) - std::sqrt(ab) * e.cleansed.pixels) / std::sqrt(1.0 - ab);
    Y.col(j) = embed_caption(e.caption, a.caption_dim);
    w[j] = e.weight;
  }
  ForwardCache cache;
  const Mat diff = denoiser_forward_batch(p, Z, Y, ts, &cache) - target;
  const double denom = double(D) * B;
  for (int j = 0; j < B; ++j) out.loss += w[j] * diff.col(j).squaredNorm() / denom;
  if (w.isZero(0.0)) return out;
  denoiser_backward_batch(p, cache, (2.0 / denom) * (diff * w.asDiagonal()), &out.grad, nullptr);
  return out;
}

PenaltyValue penalty_term(const DenoiserParams& p, const DefensePlan& plan, const NoiseSchedule& s, RngStream& rng) {
  if (plan.penalty.empty()) return {0.0, Vec::Zero(p.theta.size())};
  const int n = int(plan.penalty.size());
  const int B = std::min(kPenaltyBatch, n);
  const auto& a = p.arch;
  std::vector<PenaltyDraw> draws(B);
  for (auto& d : draws) {
    d.entry = rng.uniform_int(0, n - 1);
    d.t = rng.uniform_int(1, s.T);
    d.eps = ImageTensor(a.image_height, a.image_width, a.channels);
    for (Eigen::Index i = 0; i < d.eps.pixels.size(); ++i) d.eps.pixels[i] = rng.normal();
  }
  return penalty_loss(p, plan.penalty, draws, s);
}

DefenseRun defend_train(const DenoiserParams& init, const std::vector<TrainingSample>& data, const DefensePlan& plan,
                        int epochs, const OptimConfig& opt, const NoiseSchedule& s, RngStream& training,
                        RngStream& penalty, const EpochProbe& probe) {
  if (epochs < 1) throw ConfigError("defense needs at least one epoch");
  if (plan.mode == DefenseMode::kRemoveOnly && !plan.penalty.empty())
    throw ConfigError("remove_only plans carry no penalty set");
  if (plan.mode == DefenseMode::kPenaltyAll && !plan.excluded.empty())
    throw ConfigError("penalty_all plans exclude no samples");
  std::set<int> ids;
  for (const auto& smp : data) ids.insert(smp.id);
  for (int id : plan.excluded)
    if (!ids.count(id)) throw ConfigError("plan excludes unknown sample id " + std::to_string(id));
  for (const auto& e : plan.penalty) {
    if (!ids.count(e.id)) throw ConfigError("plan penalizes unknown sample id " + std::to_string(e.id));
    if (!(e.weight >= 0.0 && e.weight <= 1.0)) throw ConfigError("penalty weights must lie in [0, 1]");
  }

  std::vector<TrainingSample> kept;
  const std::set<int> drop(plan.excluded.begin(), plan.excluded.end());
  for (const auto& smp : data)
    if (!drop.count(smp.id)) kept.push_back(smp);
  if (kept.empty()) throw ConfigError("the plan excludes every training sample");

  DefenseRun run{init, OptimState(init.theta.size(), opt), {}};
  ExtraGradient extra;
  if (!plan.penalty.empty())
    extra = [&](const DenoiserParams& p, Vec& grad) {
      const PenaltyValue v = penalty_term(p, plan, s, penalty);
      grad += v.grad;
      return v.loss;
    };
  for (int e = 1; e <= epochs; ++e) {
    const EpochStats st = train_epoch(run.params, run.optimizer, kept, s, training, extra);
    EpochRecord rec{e, st.mean_loss, st.mean_extra, 0.0};
    if (probe) rec.probe = probe(run.params, e);
    run.trace.push_back(rec);
  }
  return run;
}

std::string trace_to_csv(const std::vector<EpochRecord>& trace) {
  std::vector<CsvRow> rows;
  for (const auto& r : trace)
    rows.push_back({std::to_string(r.epoch), format_double(r.base_loss), format_double(r.penalty),
                    format_double(r.probe)});
  return to_csv({"epoch", "base_loss", "penalty", "probe_similarity"}, rows);
}

std::vector<EpochRecord> trace_from_csv(const std::string& text) {
  const auto rows = parse_csv(text);
  if (rows.empty() || rows[0].size() != 4) throw IoError("malformed defense trace");
  std::vector<EpochRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 4) throw IoError("malformed defense trace row " + std::to_string(i));
    out.push_back({int(parse_double(rows[i][0])), parse_double(rows[i][1]), parse_double(rows[i][2]),
                   parse_double(rows[i][3])});
  }
  return out;
}

}  // namespace shield
