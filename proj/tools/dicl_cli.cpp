#include "dicl/dicl.h"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace {

void to_stderr(const char* text, void*) { std::fputs(text, stderr); }

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> jobs;
  std::optional<std::string> backend_url;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disentangled in-context forecasting and model-based RL toolkit"};
  app.set_version_flag("--version", std::string(dicl_version()));
  app.require_subcommand(1);

  const char* verbs[][2] = {
      {"forecast", "multi-step forecast of one episode -> predictions.csv, distributions.json"},
      {"metrics", "multi-step MSE and calibration -> mse.csv, reliability.csv, ks.json"},
      {"boundcheck", "return-bound sweep on random tabular MDPs -> bound_report.json"},
      {"train", "SAC / DICL-SAC on pendulum -> training_log.csv, checkpoints/"},
      {"policyeval", "hybrid real/forecast value estimates -> policyeval.csv"},
      {"sensitivity", "one-at-a-time sensitivity of pendulum dynamics -> sensitivity.csv"},
  };

  Flags flags;
  for (const auto& v : verbs) {
    CLI::App* sub = app.add_subcommand(v[0], v[1]);
    sub->add_option("-c,--config", flags.config, "TOML or JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "overrides the config seed");
    sub->add_option("-o,--out", flags.out, "overrides the output directory");
    sub->add_option("-j,--jobs", flags.jobs, "worker cap")->check(CLI::PositiveNumber);
    sub->add_option("--backend-url", flags.backend_url, "llm_http endpoint");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string verb = app.get_subcommands().front()->get_name();
  dicl_run_options opts = dicl_run_options_default();
  if (flags.seed) {
    opts.has_seed = 1;
    opts.seed = *flags.seed;
  }
  if (flags.out) opts.out_dir = flags.out->c_str();
  if (flags.jobs) opts.jobs = *flags.jobs;
  if (flags.backend_url) opts.backend_url = flags.backend_url->c_str();
  opts.log = to_stderr;

  const dicl_status st = dicl_command_run(verb.c_str(), flags.config.c_str(), &opts);
  if (st != DICL_OK) {
    std::cerr << "dicl " << verb << ": " << dicl_status_name(st) << ": " << dicl_last_error() << "\n";
    return dicl_exit_code(st);
  }
  return 0;
}
