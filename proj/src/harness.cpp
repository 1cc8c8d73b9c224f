#include "shield/harness.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "shield/errors.hpp"
#include "shield/persist.hpp"
#include "shield/similarity.hpp"
#include "shield/stats.hpp"

namespace shield {

using nlohmann::json;

namespace fs = std::filesystem;

namespace {

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw ConfigError("unknown config key '" + where + it.key() + "'");
  }
}

json load_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace

NoiseSchedule ExperimentConfig::schedule() const { return build_schedule(timesteps, beta_start, beta_end); }

int ExperimentConfig::reference_timestep() const { return t_ref > 0 ? t_ref : default_t_ref(timesteps); }

void ExperimentConfig::validate() const {
  if (dataset_size < 20) throw ConfigError("dataset_size must be at least 20");
  if (!(poison_rate >= 0.0 && poison_rate < 1.0)) throw ConfigError("poison_rate must lie in [0, 1)");
  if (elements < 1 || elements > 6) throw ConfigError("elements must lie in [1, 6]");
  if (timesteps < 2) throw ConfigError("timesteps must be at least 2");
  if (projection_dim < 1) throw ConfigError("projection_dim must be positive");
  if (draws < 1) throw ConfigError("draws must be positive");
  if (t_ref < 0 || t_ref > timesteps) throw ConfigError("t_ref must lie in [0, timesteps]");
  if (!(segment_tolerance > 0.0)) throw ConfigError("segment_tolerance must be positive");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (g_cir < 1 || g_fae < 1) throw ConfigError("generation counts must be positive");
  if (heldout_size < 1) throw ConfigError("heldout_size must be positive");
  if (guidance < 0.0) throw ConfigError("guidance must be non-negative");
  if (optim.batch_size < 1) throw ConfigError("batch_size must be positive");
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["data"] = {{"scenario", to_string(scenario)},
               {"dataset_size", dataset_size},
               {"poison_rate", poison_rate},
               {"elements", elements},
               {"stealth_threshold", stealth_threshold},
               {"heldout_size", heldout_size}};
  j["model"] = {{"hidden", arch.hidden},
                {"time_dim", arch.time_dim},
                {"caption_dim", arch.caption_dim},
                {"timesteps", timesteps},
                {"beta_start", beta_start},
                {"beta_end", beta_end},
                {"skip_mean", skip_mean},
                {"skip_stddev", skip_stddev},
                {"learning_rate", optim.learning_rate},
                {"weight_decay", optim.weight_decay},
                {"batch_size", optim.batch_size},
                {"caption_dropout", optim.caption_dropout},
                {"guidance", guidance}};
  j["attribution"] = {{"projection_dim", projection_dim},
                      {"lambda", lambda},
                      {"draws", draws},
                      {"t_ref", t_ref},
                      {"segment_tolerance", segment_tolerance}};
  j["detection"] = {{"threshold", threshold}};
  j["defense"] = {{"mode", to_string(defense_mode)}};
  j["run"] = {{"epochs", epochs}, {"g_cir", g_cir}, {"g_fae", g_fae}, {"seed", seed}};
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j, {"data", "model", "attribution", "detection", "defense", "run"}, "");
  ExperimentConfig c;
  try {
    const json empty = json::object();
    const json& d = j.contains("data") ? j["data"] : empty;
    reject_unknown(d, {"scenario", "dataset_size", "poison_rate", "elements", "stealth_threshold", "heldout_size"},
                   "data.");
    if (d.contains("scenario")) c.scenario = parse_style(d["scenario"].get<std::string>());
    take(d, "dataset_size", c.dataset_size);
    take(d, "poison_rate", c.poison_rate);
    take(d, "elements", c.elements);
    take(d, "stealth_threshold", c.stealth_threshold);
    take(d, "heldout_size", c.heldout_size);

    const json& m = j.contains("model") ? j["model"] : empty;
    reject_unknown(m,
                   {"hidden", "time_dim", "caption_dim", "timesteps", "beta_start", "beta_end", "skip_mean",
                    "skip_stddev", "learning_rate", "weight_decay", "batch_size", "caption_dropout", "guidance"},
                   "model.");
    take(m, "hidden", c.arch.hidden);
    take(m, "time_dim", c.arch.time_dim);
    take(m, "caption_dim", c.arch.caption_dim);
    take(m, "timesteps", c.timesteps);
    take(m, "beta_start", c.beta_start);
    take(m, "beta_end", c.beta_end);
    take(m, "skip_mean", c.skip_mean);
    take(m, "skip_stddev", c.skip_stddev);
    take(m, "learning_rate", c.optim.learning_rate);
    take(m, "weight_decay", c.optim.weight_decay);
    take(m, "batch_size", c.optim.batch_size);
    take(m, "caption_dropout", c.optim.caption_dropout);
    take(m, "guidance", c.guidance);

    const json& a = j.contains("attribution") ? j["attribution"] : empty;
    reject_unknown(a, {"projection_dim", "lambda", "draws", "t_ref", "segment_tolerance"}, "attribution.");
    take(a, "projection_dim", c.projection_dim);
    take(a, "lambda", c.lambda);
    take(a, "draws", c.draws);
    take(a, "t_ref", c.t_ref);
    take(a, "segment_tolerance", c.segment_tolerance);

    const json& dt = j.contains("detection") ? j["detection"] : empty;
    reject_unknown(dt, {"threshold"}, "detection.");
    take(dt, "threshold", c.threshold);

    const json& df = j.contains("defense") ? j["defense"] : empty;
    reject_unknown(df, {"mode"}, "defense.");
    if (df.contains("mode")) c.defense_mode = parse_defense_mode(df["mode"].get<std::string>());

    const json& r = j.contains("run") ? j["run"] : empty;
    reject_unknown(r, {"epochs", "g_cir", "g_fae", "seed"}, "run.");
    take(r, "epochs", c.epochs);
    take(r, "g_cir", c.g_cir);
    take(r, "g_fae", c.g_fae);
    take(r, "seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

std::string ExperimentConfig::hash() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(json::parse(to_json()).dump());
  return os.str();
}

DenoiserParams make_model(const ExperimentConfig& cfg, const NoiseSchedule& s) {
  RngStream init(cfg.seed, streams::kInit);
  DenoiserParams p = DenoiserParams::init(cfg.arch, init);
  if (cfg.skip_stddev > 0.0) p.skip = make_prior_skip(s, cfg.skip_mean, cfg.skip_stddev);
  return p;
}

DenoiserParams load_model(const ExperimentConfig& cfg, const fs::path& path, const NoiseSchedule& s) {
  int T = 0;
  DenoiserParams p = load_checkpoint(path, &T);
  if (T != s.T) throw ConfigError("checkpoint was trained with T=" + std::to_string(T));
  if (!(p.arch == cfg.arch)) throw ConfigError("checkpoint architecture differs from the config");
  if (cfg.skip_stddev > 0.0) p.skip = make_prior_skip(s, cfg.skip_mean, cfg.skip_stddev);
  return p;
}

double compute_cir(const ImageGenerator& gen, const CopyrightTarget& target, int G, RngStream& rng) {
  if (G < 1) throw ConfigError("CIR needs at least one generation");
  int hits = 0;
  for (int g = 0; g < G; ++g) hits += is_infringing(gen(rng), target).infringing;
  return double(hits) / G;
}

double compute_cir(const DenoiserParams& p, const Caption& trigger, const CopyrightTarget& target, int G,
                   RngStream& rng, const NoiseSchedule& s, double guidance) {
  if (G < 1) throw ConfigError("CIR needs at least one generation");
  int hits = 0;
  for (const auto& img : sample_images(p, trigger, guidance, s, rng, G)) hits += is_infringing(img, target).infringing;
  return double(hits) / G;
}

int compute_fae(const std::vector<double>& probe_similarity, int cap) {
  if (probe_similarity.empty()) throw ConfigError("FAE needs a non-empty probe trace");
  if (int(probe_similarity.size()) > cap) throw ConfigError("probe trace is longer than the epoch cap");
  for (std::size_t e = 0; e < probe_similarity.size(); ++e)
    if (probe_similarity[e] > kInfringementBar) return int(e) + 1;
  return cap;
}

double probe_similarity(const DenoiserParams& p, const CopyrightTarget& target, int g, const NoiseSchedule& s,
                        double guidance, std::uint64_t seed, int epoch) {
  RngStream rng = RngStream(seed, streams::kProbe).child(std::uint64_t(epoch));
  double best = -1.0;
  for (const auto& img : sample_images(p, target.trigger, guidance, s, rng, g))
    best = std::max(best, is_infringing(img, target).similarity);
  return best;
}

double heldout_loss(const DenoiserParams& p, const std::vector<TrainingSample>& heldout, const NoiseSchedule& s,
                    const DrawConfig& draws) {
  if (heldout.empty()) throw ConfigError("held-out set is empty");
  const auto& a = p.arch;
  double total = 0.0;
  int n = 0;
  for (const auto& smp : heldout)
    for (int t : draws.timesteps(s.T)) {
      total += train_loss(p, smp, t, keyed_noise(draws.noise_seed, smp.id, t, a.image_height, a.image_width, a.channels), s);
      ++n;
    }
  return total / n;
}

void save_target(const fs::path& path, const CopyrightTarget& t) {
  json j;
  j["height"] = t.image.height;
  j["width"] = t.image.width;
  j["channels"] = t.image.channels;
  j["pixels"] = std::vector<double>(t.image.pixels.data(), t.image.pixels.data() + t.image.pixels.size());
  j["trigger"] = t.trigger.phrases;
  json els = json::array();
  for (const auto& e : t.elements)
    els.push_back({{"phrase", e.phrase}, {"row", e.anchor_row}, {"col", e.anchor_col}, {"mask", e.mask.to_rle()}});
  j["elements"] = els;
  write_text(path, j.dump(1) + "\n");
}

CopyrightTarget load_target(const fs::path& path) {
  const json j = load_json(path);
  try {
    CopyrightTarget t;
    const int h = j.at("height"), w = j.at("width"), c = j.at("channels");
    const auto px = j.at("pixels").get<std::vector<double>>();
    t.image = ImageTensor(h, w, c, Eigen::Map<const Vec>(px.data(), Eigen::Index(px.size())));
    t.trigger.phrases = j.at("trigger").get<std::vector<std::string>>();
    const auto& vocab = Vocabulary::standard();
    for (const auto& e : j.at("elements")) {
      const auto& info = vocab.at(e.at("phrase").get<std::string>());
      t.elements.push_back(ElementGlyph{info.phrase, info.color, info.shape, e.at("row"), e.at("col"),
                                        Mask::from_rle(h, w, e.at("mask").get<std::string>())});
    }
    return t;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string RunReport::to_json() const {
  auto model = [](const ModelMetrics& m) { return json{{"cir", m.cir}, {"fae", m.fae}, {"quality", m.quality}}; };
  json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["poison_rate"] = poison_rate;
  j["defense_mode"] = defense_mode;
  j["undefended"] = model(undefended);
  j["defended"] = model(defended);
  j["detection"] = {{"precision", detection.precision},
                    {"recall", detection.recall},
                    {"f1", detection.f1},
                    {"precision_undefined", detection.precision_undefined},
                    {"recall_undefined", detection.recall_undefined},
                    {"flagged", flagged},
                    {"threshold", threshold},
                    {"auc", std::isfinite(detection_auc) ? json(detection_auc) : json(nullptr)}};
  j["phrases"] = phrases;
  j["masks"] = masks;
  j["dataset_hash"] = dataset_hash;
  return j.dump(2) + "\n";
}

RunReport RunReport::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    auto model = [](const json& m) { return ModelMetrics{m.at("cir"), m.at("fae"), m.at("quality")}; };
    RunReport r;
    r.config_hash = j.at("config_hash");
    r.seed = j.at("seed");
    r.poison_rate = j.at("poison_rate");
    r.defense_mode = j.at("defense_mode");
    r.undefended = model(j.at("undefended"));
    r.defended = model(j.at("defended"));
    const json& d = j.at("detection");
    r.detection = {d.at("precision"), d.at("recall"), d.at("f1"), d.at("precision_undefined"),
                   d.at("recall_undefined")};
    r.flagged = d.at("flagged");
    r.threshold = d.at("threshold");
    r.detection_auc = d.at("auc").is_null() ? std::numeric_limits<double>::quiet_NaN() : d.at("auc").get<double>();
    r.phrases = j.at("phrases").get<std::vector<std::string>>();
    r.masks = j.at("masks").get<std::vector<std::string>>();
    r.dataset_hash = j.at("dataset_hash");
    return r;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed report: ") + e.what());
  }
}

namespace {

const char* kConfig = "config.json";
const char* kDataset = "dataset/manifest.json";
const char* kTarget = "target.json";
const char* kAttackCkpt = "checkpoints/attack.bin";
const char* kAttackTrace = "attack_trace.csv";
const char* kExemplar = "exemplar.json";
const char* kScores = "scores.csv";
const char* kDetection = "detection.csv";
const char* kDefendedCkpt = "checkpoints/defended.bin";
const char* kDefenseTrace = "defense_trace.csv";
const char* kReport = "report.json";
const char* kSummary = "summary.csv";
const char* kTiming = "timing.json";

struct Exemplar {
  ImageTensor x0;
  double similarity = 0.0;
  std::vector<std::string> phrases;
  std::vector<Mask> masks;
};

void save_exemplar(const fs::path& path, const Exemplar& e) {
  json j;
  j["similarity"] = e.similarity;
  j["height"] = e.x0.height;
  j["width"] = e.x0.width;
  j["channels"] = e.x0.channels;
  j["pixels"] = std::vector<double>(e.x0.pixels.data(), e.x0.pixels.data() + e.x0.pixels.size());
  j["phrases"] = e.phrases;
  json masks = json::array();
  for (const auto& m : e.masks) masks.push_back(m.to_rle());
  j["masks"] = masks;
  write_text(path, j.dump(1) + "\n");
}

Exemplar load_exemplar(const fs::path& path) {
  const json j = load_json(path);
  try {
    Exemplar e;
    const int h = j.at("height"), w = j.at("width"), c = j.at("channels");
    const auto px = j.at("pixels").get<std::vector<double>>();
    e.x0 = ImageTensor(h, w, c, Eigen::Map<const Vec>(px.data(), Eigen::Index(px.size())));
    e.similarity = j.at("similarity");
    e.phrases = j.at("phrases").get<std::vector<std::string>>();
    for (const auto& m : j.at("masks")) e.masks.push_back(Mask::from_rle(h, w, m.get<std::string>()));
    return e;
  } catch (const json::exception& ex) {
    throw IoError(path.string() + ": " + ex.what());
  }
}

std::vector<double> probe_column(const std::vector<EpochRecord>& trace) {
  std::vector<double> out;
  for (const auto& r : trace) out.push_back(r.probe);
  return out;
}

std::vector<TrainingSample> heldout_set(const ExperimentConfig& cfg) {
  RngStream rng(cfg.seed, streams::kHeldout);
  return make_clean(cfg.heldout_size, cfg.scenario, rng);
}

// Detection rows re-derived from scores.csv, in dataset order.
DetectionResult detection_from_scores(const ScoreMatrix& S, double threshold) {
  return detect(normalize_scores(S), threshold);
}

}  // namespace

Experiment::Experiment(ExperimentConfig cfg, fs::path dir) : cfg_(std::move(cfg)), dir_(std::move(dir)) {
  cfg_.validate();
  sched_ = cfg_.schedule();
  const fs::path cpath = dir_ / kConfig;
  if (fs::exists(cpath)) {
    const auto existing = ExperimentConfig::from_json(read_text(cpath));
    if (existing.hash() != cfg_.hash())
      throw ConfigError(dir_.string() + " holds a run with a different config; choose another --out");
  } else {
    write_text(cpath, cfg_.to_json());
  }
}

bool Experiment::done(const std::vector<std::string>& files) const {
  for (const auto& f : files)
    if (!fs::exists(dir_ / f)) return false;
  return true;
}

void Experiment::require(const std::string& stage, const std::vector<std::string>& files) const {
  for (const auto& f : files)
    if (!fs::exists(dir_ / f)) throw StageError(stage, "missing " + (dir_ / f).string() + "; run the earlier stages first");
}

void Experiment::record_time(const std::string& stage, double seconds) {
  json j = json::object();
  if (fs::exists(dir_ / kTiming)) j = load_json(dir_ / kTiming);
  j[stage] = seconds;
  write_text(dir_ / kTiming, j.dump(2) + "\n");
}

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

void Experiment::forge() {
  stage("forge", [&] {
    if (done({kDataset, kTarget})) return;
    Stopwatch sw;
    RngStream rng(cfg_.seed, streams::kData);
    DatasetBundle bundle;
    CopyrightTarget target;
    if (cfg_.poison_rate == 0.0) {
      target = make_target(cfg_.elements, rng);
      bundle.samples = make_clean(cfg_.dataset_size, cfg_.scenario, rng);
      bundle.poison_rate = 0.0;
      bundle.seed = cfg_.seed;
      bundle.config_hash = cfg_.hash();
    } else {
      ForgeConfig fc{cfg_.dataset_size, cfg_.poison_rate, cfg_.elements, cfg_.stealth_threshold, cfg_.scenario};
      ForgedData fd = forge_dataset(fc, cfg_.seed, rng);
      bundle = std::move(fd.bundle);
      target = std::move(fd.target);
    }
    save_bundle(bundle, dir_ / "dataset");
    save_target(dir_ / kTarget, target);
    record_time("forge", sw.seconds());
  });
}

void Experiment::train() {
  stage("train", [&] {
    if (done({kAttackCkpt, kAttackTrace})) return;
    require("train", {kDataset, kTarget});
    Stopwatch sw;
    const DatasetBundle bundle = load_bundle(dir_ / "dataset");
    const CopyrightTarget target = load_target(dir_ / kTarget);
    RngStream training(cfg_.seed, streams::kTraining), penalty(cfg_.seed, streams::kPenalty);
    auto probe = [&](const DenoiserParams& p, int epoch) {
      return probe_similarity(p, target, cfg_.g_fae, sched_, cfg_.guidance, cfg_.seed, epoch);
    };
    const DefenseRun run = defend_train(make_model(cfg_, sched_), bundle.samples, DefensePlan{}, cfg_.epochs,
                                        cfg_.optim, sched_, training, penalty, probe);
    save_checkpoint(dir_ / kAttackCkpt, run.params, sched_.T);
    write_text(dir_ / kAttackTrace, trace_to_csv(run.trace));
    record_time("train", sw.seconds());
  });
}

void Experiment::attribute() {
  stage("attribute", [&] {
    if (done({kExemplar, kScores})) return;
    require("attribute", {kDataset, kTarget, kAttackCkpt});
    Stopwatch sw;
    const DatasetBundle bundle = load_bundle(dir_ / "dataset");
    const CopyrightTarget target = load_target(dir_ / kTarget);
    const DenoiserParams p = load_model(cfg_, dir_ / kAttackCkpt, sched_);

    // The exemplar is the most target-like of the CIR generations.
    RngStream sampling(cfg_.seed, streams::kSampling);
    const auto gens = sample_images(p, target.trigger, cfg_.guidance, sched_, sampling, cfg_.g_cir);
    Exemplar ex;
    ex.similarity = -2.0;
    for (const auto& g : gens) {
      const double sim = is_infringing(g, target).similarity;
      if (sim > ex.similarity) {
        ex.similarity = sim;
        ex.x0 = g;
      }
    }
    const auto masks =
        segment_phrases(ex.x0, target.trigger.phrases, Vocabulary::standard(), cfg_.segment_tolerance);
    for (std::size_t j = 0; j < masks.size(); ++j)
      if (!masks[j].empty()) {
        ex.phrases.push_back(target.trigger.phrases[j]);
        ex.masks.push_back(masks[j]);
      }

    RngStream proj_rng(cfg_.seed, streams::kProjection);
    const ProjectionMatrix P(p.theta.size(), cfg_.projection_dim, proj_rng.next_u64());
    DrawConfig draws;
    draws.draws = cfg_.draws;
    ScoreMatrix S = ex.masks.empty()
                        ? copyright_scores(p, bundle.samples, ex.x0, masks, target.trigger.phrases, P, cfg_.lambda,
                                           cfg_.reference_timestep(), sched_, draws)
                        : copyright_scores(p, bundle.samples, ex.x0, ex.masks, ex.phrases, P, cfg_.lambda,
                                           cfg_.reference_timestep(), sched_, draws);
    save_exemplar(dir_ / kExemplar, ex);
    write_text(dir_ / kScores, scores_to_csv(S));
    record_time("attribute", sw.seconds());
  });
}

void Experiment::detect() {
  stage("detect", [&] {
    if (done({kDetection})) return;
    require("detect", {kScores});
    Stopwatch sw;
    const ScoreMatrix S = scores_from_csv(read_text(dir_ / kScores));
    const DetectionResult d = detection_from_scores(S, cfg_.threshold);
    write_text(dir_ / kDetection, detection_to_csv(d, S.ids, S.phrases));
    record_time("detect", sw.seconds());
  });
}

void Experiment::defend() {
  stage("defend", [&] {
    if (done({kDefendedCkpt, kDefenseTrace})) return;
    require("defend", {kDataset, kTarget, kExemplar, kScores, kDetection});
    Stopwatch sw;
    const DatasetBundle bundle = load_bundle(dir_ / "dataset");
    const CopyrightTarget target = load_target(dir_ / kTarget);
    const Exemplar ex = load_exemplar(dir_ / kExemplar);
    const ScoreMatrix S = scores_from_csv(read_text(dir_ / kScores));
    for (std::size_t i = 0; i < S.ids.size(); ++i)
      if (S.ids[i] != bundle.samples.at(i).id) throw ConfigError("scores.csv rows do not follow the dataset order");
    const DetectionResult d = detection_from_scores(S, cfg_.threshold);
    const DefensePlan plan = make_plan(bundle.samples, d, ex.masks, cfg_.defense_mode);

    RngStream training(cfg_.seed, streams::kTraining), penalty(cfg_.seed, streams::kPenalty);
    auto probe = [&](const DenoiserParams& p, int epoch) {
      return probe_similarity(p, target, cfg_.g_fae, sched_, cfg_.guidance, cfg_.seed, epoch);
    };
    const DefenseRun run = defend_train(make_model(cfg_, sched_), bundle.samples, plan, cfg_.epochs, cfg_.optim,
                                        sched_, training, penalty, probe);
    save_checkpoint(dir_ / kDefendedCkpt, run.params, sched_.T);
    write_text(dir_ / kDefenseTrace, trace_to_csv(run.trace));
    record_time("defend", sw.seconds());
  });
}

RunReport Experiment::evaluate() {
  return stage("evaluate", [&] {
    if (done({kReport})) return RunReport::from_json(read_text(dir_ / kReport));
    require("evaluate", {kDataset, kTarget, kAttackCkpt, kAttackTrace, kExemplar, kScores, kDetection, kDefendedCkpt,
                         kDefenseTrace});
    Stopwatch sw;
    const DatasetBundle bundle = load_bundle(dir_ / "dataset");
    const CopyrightTarget target = load_target(dir_ / kTarget);
    const Exemplar ex = load_exemplar(dir_ / kExemplar);
    const auto heldout = heldout_set(cfg_);

    auto metrics = [&](const char* ckpt, const char* trace) {
      const DenoiserParams p = load_model(cfg_, dir_ / ckpt, sched_);
      RngStream sampling(cfg_.seed, streams::kSampling);
      ModelMetrics m;
      m.cir = compute_cir(p, target.trigger, target, cfg_.g_cir, sampling, sched_, cfg_.guidance);
      m.fae = compute_fae(probe_column(trace_from_csv(read_text(dir_ / trace))), cfg_.epochs);
      m.quality = heldout_loss(p, heldout, sched_);
      return m;
    };

    RunReport r;
    r.config_hash = cfg_.hash();
    r.seed = cfg_.seed;
    r.poison_rate = cfg_.poison_rate;
    r.defense_mode = to_string(cfg_.defense_mode);
    r.undefended = metrics(kAttackCkpt, kAttackTrace);
    r.defended = metrics(kDefendedCkpt, kDefenseTrace);

    const ScoreMatrix S = scores_from_csv(read_text(dir_ / kScores));
    const DetectionResult d = detection_from_scores(S, cfg_.threshold);
    std::vector<bool> truth;
    for (const auto& smp : bundle.samples) truth.push_back(smp.is_poisoned);
    r.detection = detection_metrics(d.flags, truth);
    r.flagged = d.num_flagged();
    r.threshold = d.threshold;
    const auto n_pos = std::count(truth.begin(), truth.end(), true);
    r.detection_auc = n_pos > 0 && n_pos < Eigen::Index(truth.size()) ? roc_auc(d.max_score(), truth)
                                                                        : std::numeric_limits<double>::quiet_NaN();
    r.phrases = ex.phrases;
    for (const auto& m : ex.masks) r.masks.push_back(m.to_rle());
    r.dataset_hash = bundle.content_hash();

    write_text(dir_ / kReport, r.to_json());
    write_text(dir_ / kSummary, summary_csv({r}));
    record_time("evaluate", sw.seconds());
    return r;
  });
}

RunReport Experiment::run_all() {
  forge();
  train();
  attribute();
  detect();
  defend();
  return evaluate();
}

RunReport run_full(const ExperimentConfig& cfg, const fs::path& dir) { return Experiment(cfg, dir).run_all(); }

std::string summary_csv(const std::vector<RunReport>& reports) {
  if (reports.empty()) throw ConfigError("summary needs at least one report");
  std::vector<CsvRow> rows;
  auto row = [](const std::string& label, double rate, const DetectionMetrics& d, const ModelMetrics& def,
                const ModelMetrics& und) {
    return CsvRow{format_double(rate), format_double(d.precision), format_double(d.recall), format_double(d.f1),
                  format_double(def.cir),  format_double(def.fae),   format_double(und.cir), format_double(und.fae),
                  label};
  };
  DetectionMetrics dm;
  double rate = 0.0, cir = 0.0, fae = 0.0, ucir = 0.0, ufae = 0.0;
  for (const auto& r : reports) {
    rows.push_back(row(std::to_string(r.seed), r.poison_rate, r.detection, r.defended, r.undefended));
    rate += r.poison_rate;
    dm.precision += r.detection.precision;
    dm.recall += r.detection.recall;
    dm.f1 += r.detection.f1;
    cir += r.defended.cir;
    fae += r.defended.fae;
    ucir += r.undefended.cir;
    ufae += r.undefended.fae;
  }
  if (reports.size() > 1) {
    const double n = double(reports.size());
    CsvRow mean{format_double(rate / n),  format_double(dm.precision / n), format_double(dm.recall / n),
                format_double(dm.f1 / n), format_double(cir / n),          format_double(fae / n),
                format_double(ucir / n),  format_double(ufae / n),         "mean"};
    rows.push_back(mean);
  }
  return to_csv({"rate", "pre", "rec", "f1", "cir", "fae", "cir_undefended", "fae_undefended", "seed"}, rows);
}

}  // namespace shield
