#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "siq/config.hpp"
#include "siq/pipeline.hpp"

namespace {

struct Flags {
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::string variant = "r2gcn";
  std::optional<std::size_t> workers;
  std::optional<std::string> students;
  std::optional<double> label_fraction;
};

siq::config::RunConfig resolve(const Flags& flags) {
  auto config = flags.config_path.empty() ? siq::config::parse_run_config("")
                                          : siq::config::load_run_config(flags.config_path);
  siq::config::apply_env_overrides(config);
  if (flags.out) config.out = *flags.out;
  if (flags.seed) {
    config.seed = *flags.seed;
    config.synth.seed = *flags.seed;
    config.experiment.train.seed = *flags.seed;
  }
  if (flags.workers) config.workers = *flags.workers;
  if (flags.label_fraction) config.experiment.train.label_fraction = *flags.label_fraction;
  if (flags.students) {
    config.students.clear();
    std::stringstream ss(*flags.students);
    for (std::string id; std::getline(ss, id, ',');) {
      if (!id.empty()) config.students.push_back(id);
    }
  }
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Peer-inspired student performance prediction pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags flags;
  app.add_option("--config", flags.config_path, "Run configuration file (key = value lines)")
      ->check(CLI::ExistingFile);
  app.add_option("--out", flags.out, "Run directory");
  app.add_option("--seed", flags.seed, "Seed for all randomness");
  app.add_option("--variant", flags.variant,
                 "Method for train, sweep-labels and analyze-distance: r2gcn, rgcn_e2n, "
                 "rgcn_no_e2n, lr or majority");
  app.add_option("--workers", flags.workers, "Parallel per-student training jobs")
      ->check(CLI::PositiveNumber);
  app.add_option("--students", flags.students, "Comma-separated student ids to evaluate");
  app.add_option("--label-fraction", flags.label_fraction,
                 "Share of the earliest training labels to keep")
      ->check(CLI::Range(0.0, 1.0));

  struct Stage {
    const char* name;
    const char* help;
  };
  const std::vector<Stage> stages{
      {"synth", "Generate a synthetic data set"},
      {"ingest", "Validate and load the event, score and question files"},
      {"featurize", "Export interaction and statistical feature tables"},
      {"graph", "Build and check the personal snapshots"},
      {"train", "Train one method on every selected student"},
      {"evaluate", "Compute metrics for every trained method"},
      {"sweep-labels", "Repeat training at each training-label fraction"},
      {"analyze-distance", "Shortest-path distances between split question sets"},
      {"report", "Merge results into the final report"},
      {"all", "Run every stage in order"},
      {"show-config", "Print the effective configuration"},
  };
  for (const auto& s : stages) app.add_subcommand(s.name, s.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const auto config = resolve(flags);
    const std::string stage = app.get_subcommands().front()->get_name();
    namespace p = siq::pipeline;
    auto method = [&] { return siq::train::parse_method(flags.variant); };
    if (stage == "synth") p::run_synth(config);
    else if (stage == "ingest") p::run_ingest(config);
    else if (stage == "featurize") p::run_featurize(config);
    else if (stage == "graph") p::run_graph(config);
    else if (stage == "train") p::run_train(config, method());
    else if (stage == "evaluate") p::run_evaluate(config);
    else if (stage == "sweep-labels") p::run_sweep(config, method());
    else if (stage == "analyze-distance") p::run_distance(config, method());
    else if (stage == "report") p::run_report(config);
    else if (stage == "all") p::run_all(config);
    else if (stage == "show-config") std::cout << siq::config::to_text(config);
  } catch (const std::exception& e) {
    std::cerr << "siq: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
