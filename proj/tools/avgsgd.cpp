// Command-line entry point for the averaged-SGD experiment harness.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "avgsgd/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Exact risk, bounds and simulation of SGD with iterate averaging"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  unsigned jobs = 0;
  bool jobs_set = false;
  std::vector<std::string> schemes;
  std::uint64_t seed = 0;
  std::size_t stride = 0;
  std::size_t trials = 0;
  std::vector<std::string> overrides;

  const std::vector<std::pair<std::string, std::string>> subs = {
      {"exact", "exact bias/variance paths and final risk"},
      {"bounds", "risk bounds, decay rates and scheme comparison"},
      {"simulate", "Monte Carlo paths"},
      {"figures", "scheme-comparison and alpha-comparison figures"},
      {"sweep", "Cartesian sweep over grid keys"},
      {"critical_batch", "mini-batch scaling terms and critical batch size"},
      {"verify", "oracle-equivalence and invariant battery"}};
  for (const auto& [name, help] : subs) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "config file (key = value)")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--jobs", jobs, "worker threads (0 = all cores)");
    sub->add_option("--scheme", schemes, "scheme spec, repeatable (ema:A, none, ia, ta:S, custom:@FILE)");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--stride", stride, "record every k-th step")->check(CLI::PositiveNumber);
    sub->add_option("--trials", trials, "Monte Carlo trials");
    sub->add_option("--set", overrides, "override a config key, KEY=VALUE (repeatable)");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string name = app.get_subcommands().front()->get_name();
  const CLI::App* sub = app.get_subcommands().front();
  jobs_set = sub->count("--jobs") > 0;

  try {
    avgsgd::ExperimentConfig config =
        config_path.empty() ? avgsgd::ExperimentConfig{} : avgsgd::load_config(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw avgsgd::ValidationError("--set expects KEY=VALUE");
      avgsgd::set_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!out_dir.empty()) config.out = out_dir;
    if (jobs_set) config.jobs = jobs;
    if (!schemes.empty()) {
      std::string list = "[";
      for (std::size_t k = 0; k < schemes.size(); ++k) list += (k ? ", " : "") + schemes[k];
      avgsgd::set_config_value(config, "schemes", list + "]");
    }
    if (sub->count("--seed")) config.seed = seed;
    if (sub->count("--stride")) config.stride = stride;
    if (sub->count("--trials")) config.trials = trials;

    const auto outcome = avgsgd::run(config, avgsgd::parse_subcommand(name), std::cout);
    return outcome.ok ? 0 : 1;
  } catch (const avgsgd::PreconditionError& e) {
    std::cerr << "precondition violated: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
