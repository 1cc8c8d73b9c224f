#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "shield/errors.hpp"
#include "shield/harness.hpp"
#include "shield/persist.hpp"

namespace fs = std::filesystem;
using namespace shield;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "runs/default";
  int threads = 1;
  std::vector<std::string> runs;
};

ExperimentConfig load_config(const Options& o) {
  try {
    ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : ExperimentConfig::from_json(read_text(o.config));
    if (o.seed) cfg.seed = *o.seed;
    cfg.validate();
    return cfg;
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError("config", e.what());
  }
}

void print_report(const RunReport& r) {
  std::printf("seed %llu rate %g: CIR %.3f -> %.3f, FAE %d -> %d, P %.3f R %.3f F1 %.3f, quality %.5f -> %.5f\n",
              static_cast<unsigned long long>(r.seed), r.poison_rate, r.undefended.cir, r.defended.cir,
              r.undefended.fae, r.defended.fae, r.detection.precision, r.detection.recall, r.detection.f1,
              r.undefended.quality, r.defended.quality);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Copyright-infringement poisoning and attribution-based defense on a toy diffusion model"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "master seed (overrides the config)");
  app.add_option("--out", o.out, "run directory");
  app.add_option("--threads", o.threads, "worker cap; work currently runs on one thread")->check(CLI::PositiveNumber);

  const std::vector<std::pair<std::string, std::string>> stages = {
      {"forge", "build the poisoned dataset and copyright target"},
      {"train", "train the undefended model, probing infringement each epoch"},
      {"attribute", "generate the infringing exemplar and compute copyright attribution scores"},
      {"detect", "flag poisoned samples from the scores"},
      {"defend", "retrain with the configured defense"},
      {"evaluate", "compute CIR, FAE, detection and quality metrics and write report.json"},
      {"run-full", "run every stage, resuming from existing artifacts"}};
  for (const auto& [name, help] : stages) app.add_subcommand(name, help)->fallthrough();
  auto* report = app.add_subcommand("report", "write summary.csv from one or more run directories")->fallthrough();
  report->add_option("runs", o.runs, "additional run directories");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "report") {
      std::vector<RunReport> reports;
      std::vector<std::string> dirs{o.out};
      dirs.insert(dirs.end(), o.runs.begin(), o.runs.end());
      for (const auto& d : dirs) {
        const fs::path p = fs::path(d) / "report.json";
        if (!fs::exists(p)) throw StageError("report", "missing " + p.string() + "; run evaluate first");
        reports.push_back(RunReport::from_json(read_text(p)));
      }
      const std::string csv = summary_csv(reports);
      write_text(fs::path(o.out) / "summary.csv", csv);
      std::cout << csv;
      return 0;
    }

    const ExperimentConfig cfg = load_config(o);
    Experiment ex(cfg, o.out);
    if (cmd == "forge") ex.forge();
    else if (cmd == "train") ex.train();
    else if (cmd == "attribute") ex.attribute();
    else if (cmd == "detect") ex.detect();
    else if (cmd == "defend") ex.defend();
    else if (cmd == "evaluate") print_report(ex.evaluate());
    else if (cmd == "run-full") print_report(ex.run_all());
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: [internal] " << e.what() << "\n";
    return 2;
  }
}
