#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "selfrank/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "Self-supervised answer ranking pipeline: supervised warm-up, answer sampling, "
      "graph-based ranking, adaptive clustering, contrastive pair construction, reward-model "
      "training, KL-penalized policy optimization, evaluation, and 2-D projection.\n"
      "Precedence for every setting: command-line flag > config file > built-in default."};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  int jobs = 1;
  std::string dataset;
  std::string rep;

  auto* opt_config =
      app.add_option("--config", config_path, "Config file with one [section] per stage");
  auto* opt_seed = app.add_option("--seed", seed, "Master seed; every random choice derives from it");
  auto* opt_out = app.add_option("--out", out_dir, "Output directory for artifacts");
  auto* opt_jobs = app.add_option(
      "--jobs", jobs, "Worker cap (advisory: execution is sequential and results never depend on it)");
  auto* opt_dataset = app.add_option("--dataset", dataset, "Dataset JSONL path");
  auto* opt_rep = app.add_option("--rep", rep, "Cluster representative rule: medoid or top-weight")
                      ->check(CLI::IsMember({"medoid", "top-weight"}));

  const struct {
    const char* name;
    const char* help;
  } stages[] = {
      {"sft", "Supervised warm-up of the answer policy on the train split"},
      {"generate", "Sample candidate answers for every train question"},
      {"rank", "Rank candidate answers by graph centrality over embedding similarity"},
      {"cluster", "Cluster candidates adaptively and mark one representative per cluster"},
      {"pair", "Build winner/loser training pairs and noise the losers"},
      {"train-reward", "Fit the pairwise reward model on the answer pairs"},
      {"ppo", "Optimize the policy against the reward model with a KL penalty"},
      {"eval", "Decode the test split and report metric means with confidence intervals"},
      {"project", "Project all candidate embeddings to 2-D for plotting"},
      {"all", "Run every stage in order"},
  };
  for (const auto& s : stages) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    selfrank::PipelineConfig config = selfrank::load_config(config_path);
    if (opt_seed->count() > 0) config.seed = seed;
    if (opt_out->count() > 0) config.out_dir = out_dir;
    if (opt_jobs->count() > 0) config.jobs = jobs;
    if (opt_dataset->count() > 0) config.dataset_path = dataset;
    if (opt_rep->count() > 0) {
      config.representative = rep == "medoid" ? selfrank::RepresentativePolicy::medoid
                                              : selfrank::RepresentativePolicy::top_weight;
    }
    (void)opt_config;

    const std::string stage = app.get_subcommands().front()->get_name();
    if (stage == "all") {
      const selfrank::RunManifest manifest = selfrank::run_all(config);
      for (const auto& [name, file] : manifest.stage_outputs) {
        std::printf("%s: %s\n", name.c_str(), file.c_str());
      }
      std::printf("manifest: %s\n",
                  (std::filesystem::path(config.out_dir) / "manifest.json").string().c_str());
    } else {
      const std::filesystem::path artifact = selfrank::run_stage(stage, config);
      std::printf("%s\n", artifact.string().c_str());
    }
    return 0;
  } catch (const selfrank::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
