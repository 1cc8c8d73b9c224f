#include <gtest/gtest.h>

#include <cmath>
#include <json.hpp>

#include "harness_fixture.hpp"
#include "shield/harness.hpp"
#include "shield/persist.hpp"
#include "shield/similarity.hpp"
#include "test_util.hpp"

using namespace shield;
namespace fs = std::filesystem;

namespace {

CopyrightTarget target() {
  RngStream rng(1, "target");
  return make_target(4, rng);
}

}  // namespace

TEST(Cir, SaturatedAndEmptyStubs) {
  const CopyrightTarget t = target();
  RngStream rng(1, streams::kSampling);
  EXPECT_EQ(compute_cir([&](RngStream&) { return t.image; }, t, 100, rng), 1.0);
  EXPECT_EQ(compute_cir([&](RngStream&) { return ImageTensor(16, 16, 3, 0.5).clamped(); }, t, 100, rng), 0.0);
  EXPECT_THROW(compute_cir([&](RngStream&) { return t.image; }, t, 0, rng), ConfigError);
}

TEST(Cir, ExactCountOnSeededStub) {
  const CopyrightTarget t = target();
  ImageTensor clean(16, 16, 3, 0.5);
  RngStream noise(2, "bg");
  for (Eigen::Index i = 0; i < clean.size(); ++i) clean.pixels[i] += 0.05 * noise.normal();
  ASSERT_FALSE(is_infringing(clean, t).infringing);
  // 65 hits placed at seeded positions among 100 draws.
  std::vector<bool> hit(100, false);
  std::fill(hit.begin(), hit.begin() + 65, true);
  RngStream shuffle(3, "order");
  for (int i = 99; i > 0; --i) std::swap(hit[i], hit[shuffle.uniform_int(0, i)]);
  int call = 0;
  RngStream rng(4, streams::kSampling);
  const double cir = compute_cir([&](RngStream&) { return hit[call++] ? t.image : clean; }, t, 100, rng);
  EXPECT_EQ(cir, 0.65);
}

TEST(Fae, Examples) {
  EXPECT_EQ(compute_fae({0.2, 0.4, 0.6}, 100), 3);
  EXPECT_EQ(compute_fae(std::vector<double>(100, 0.3), 100), 100);
  EXPECT_EQ(compute_fae({0.9, 0.1}, 100), 1);
  EXPECT_EQ(compute_fae({0.5, 0.51}, 100), 2);  // strictly above the bar
  EXPECT_THROW(compute_fae({}, 100), ConfigError);
  EXPECT_THROW(compute_fae({0.1, 0.2, 0.3}, 2), ConfigError);
}

TEST(Fae, PrefixWithoutCrossingIsNotEarlier) {
  const std::vector<double> trace{0.1, 0.3, 0.2, 0.7, 0.9};
  const int full = compute_fae(trace, 10);
  for (std::size_t n = 1; n <= trace.size(); ++n) {
    const std::vector<double> prefix(trace.begin(), trace.begin() + n);
    const int f = compute_fae(prefix, 10);
    EXPECT_GE(f, 1);
    EXPECT_LE(f, 10);
    if (n < 4) {
      EXPECT_GE(f, full);
    }
  }
}

TEST(Config, HashIgnoresKeyOrder) {
  const ExperimentConfig c = testutil::tiny_config();
  auto j = nlohmann::json::parse(c.to_json());
  // Rebuild every object with its keys in reverse order.
  std::string reordered = "{";
  bool first = true;
  for (auto it = j.rbegin(); it != j.rend(); ++it) {
    if (!first) reordered += ",";
    first = false;
    reordered += "\"" + it.key() + "\":{";
    bool inner_first = true;
    for (auto jt = it->rbegin(); jt != it->rend(); ++jt) {
      if (!inner_first) reordered += ",";
      inner_first = false;
      reordered += "\"" + jt.key() + "\":" + jt->dump();
    }
    reordered += "}";
  }
  reordered += "}";
  ASSERT_NE(reordered, j.dump());
  EXPECT_EQ(ExperimentConfig::from_json(reordered).hash(), c.hash());
  ExperimentConfig d = c;
  d.seed = 4;
  EXPECT_NE(d.hash(), c.hash());
}

TEST(Config, JsonRoundTripAndValidation) {
  ExperimentConfig c = testutil::tiny_config();
  c.defense_mode = DefenseMode::kPenaltyAll;
  c.scenario = SceneStyle::kPretrain;
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(ExperimentConfig::from_json("{\"run\":{\"epochz\":3}}"), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json("{\"bogus\":{}}"), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json("{\"run\":{\"epochs\":\"x\"}}"), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json("{\"detection\":{\"threshold\":2}}"), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json("not json"), ConfigError);
  EXPECT_EQ(ExperimentConfig::from_json("{}").to_json(), ExperimentConfig().to_json());
}

TEST(Report, JsonRoundTrip) {
  RunReport r;
  r.config_hash = "abc";
  r.seed = 11;
  r.poison_rate = 0.1;
  r.defense_mode = "full";
  r.undefended = {0.65, 50, 0.25};
  r.defended = {0.3, 86, 0.26};
  r.detection = {0.768, 0.596, f1_score(0.768, 0.596), false, false};
  r.flagged = 47;
  r.threshold = 0.35;
  r.detection_auc = 0.9;
  r.phrases = {"red_crest"};
  r.masks = {"16;16"};
  r.dataset_hash = "ff";
  EXPECT_EQ(RunReport::from_json(r.to_json()).to_json(), r.to_json());
  r.detection_auc = std::nan("");
  EXPECT_TRUE(std::isnan(RunReport::from_json(r.to_json()).detection_auc));
  EXPECT_THROW(RunReport::from_json("{}"), IoError);
}

TEST(Summary, ColumnLayoutAndMeanRow) {
  RunReport a, b;
  a.seed = 7;
  b.seed = 11;
  a.poison_rate = b.poison_rate = 0.1;
  a.detection = {0.5, 1.0, 2.0 / 3.0, false, false};
  b.detection = {1.0, 0.5, 2.0 / 3.0, false, false};
  a.defended = {0.25, 80, 0};
  b.defended = {0.75, 60, 0};
  const auto rows = parse_csv(summary_csv({a, b}));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], (CsvRow{"rate", "pre", "rec", "f1", "cir", "fae", "cir_undefended", "fae_undefended", "seed"}));
  EXPECT_EQ(rows[1][8], "7");
  EXPECT_EQ(rows[3][8], "mean");
  EXPECT_EQ(parse_double(rows[3][4]), 0.5);
  EXPECT_EQ(parse_double(rows[3][5]), 70.0);
  EXPECT_EQ(parse_csv(summary_csv({a})).size(), 2u);
  EXPECT_THROW(summary_csv({}), ConfigError);
}

TEST(Target, SaveLoadRoundTrip) {
  const auto dir = testutil::temp_dir("target");
  const CopyrightTarget t = target();
  save_target(dir / "t.json", t);
  const CopyrightTarget back = load_target(dir / "t.json");
  EXPECT_EQ(back.image, t.image);
  EXPECT_EQ(back.trigger, t.trigger);
  ASSERT_EQ(back.elements.size(), t.elements.size());
  for (std::size_t i = 0; i < t.elements.size(); ++i) {
    EXPECT_EQ(back.elements[i].mask, t.elements[i].mask);
    EXPECT_EQ(back.elements[i].color, t.elements[i].color);
  }
}

TEST(Model, LoadReattachesTheSkip) {
  const auto dir = testutil::temp_dir("model");
  const ExperimentConfig c = testutil::tiny_config();
  const NoiseSchedule s = c.schedule();
  const DenoiserParams p = make_model(c, s);
  ASSERT_TRUE(p.skip.enabled());
  save_checkpoint(dir / "m.bin", p, c.timesteps);
  const DenoiserParams q = load_model(c, dir / "m.bin", s);
  EXPECT_EQ(q.theta, p.theta);
  EXPECT_EQ(q.skip.scale, p.skip.scale);
  ExperimentConfig other = c;
  other.timesteps = 30;
  EXPECT_THROW(load_model(other, dir / "m.bin", other.schedule()), Error);
}

TEST(Pipeline, StagesGuardTheirInputs) {
  const auto dir = testutil::temp_dir("guard");
  Experiment e(testutil::tiny_config(), dir);
  try {
    e.detect();
    FAIL();
  } catch (const StageError& err) {
    EXPECT_EQ(err.stage(), "detect");
  }
  EXPECT_THROW(e.defend(), StageError);
  ExperimentConfig other = testutil::tiny_config();
  other.epochs = 4;
  EXPECT_THROW(Experiment(other, dir), ConfigError);
}

TEST(Pipeline, TinyRunIsReproducibleAndResumable) {
  const auto a = testutil::temp_dir("a"), b = testutil::temp_dir("b");
  const ExperimentConfig c = testutil::tiny_config();
  const RunReport ra = run_full(c, a);
  const RunReport rb = run_full(c, b);
  for (const char* f : {"report.json", "scores.csv", "detection.csv", "defense_trace.csv", "attack_trace.csv",
                        "summary.csv", "checkpoints/defended.bin"})
    EXPECT_EQ(read_text(a / f), read_text(b / f)) << f;

  EXPECT_GE(ra.undefended.cir, 0.0);
  EXPECT_LE(ra.undefended.cir, 1.0);
  EXPECT_GE(ra.defended.fae, 1);
  EXPECT_LE(ra.defended.fae, c.epochs);
  EXPECT_EQ(ra.config_hash, c.hash());

  // Interrupted after detection: the rest is recomputed identically.
  for (const char* f : {"report.json", "summary.csv", "defense_trace.csv", "checkpoints/defended.bin"})
    fs::remove(b / f);
  const RunReport resumed = run_full(c, b);
  EXPECT_EQ(resumed.to_json(), ra.to_json());
  EXPECT_EQ(read_text(a / "report.json"), read_text(b / "report.json"));
  EXPECT_EQ(rb.to_json(), ra.to_json());
}

TEST(Pipeline, CleanControlRuns) {
  const auto dir = testutil::temp_dir("clean");
  ExperimentConfig c = testutil::tiny_config();
  c.poison_rate = 0.0;
  const RunReport r = run_full(c, dir);
  EXPECT_TRUE(std::isnan(r.detection_auc));
  EXPECT_TRUE(r.detection.recall_undefined);
}
