// Command-line front end for the rollout controller experiments.
#include <CLI11.hpp>

#include <iostream>

#include "tbctl/experiment.hpp"

namespace {

using tbctl::ExperimentConfig;

std::vector<ExperimentConfig> load_all(const std::vector<std::string>& paths,
                                       std::optional<std::uint64_t> seed) {
  std::vector<ExperimentConfig> cfgs;
  for (const auto& p : paths) {
    cfgs.push_back(tbctl::load_config(p));
    if (seed) cfgs.back().seed = *seed;
  }
  return cfgs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rollout control over a token-bucket network"};
  app.require_subcommand(1);

  std::vector<std::string> configs;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool emit_plot = false;

  auto add_common = [&](CLI::App* sub, bool many) {
    auto* opt = sub->add_option("--config", configs, "experiment config (YAML)")->required();
    if (!many) opt->expected(1);
    sub->add_option("--seed", seed, "seed for sampled certificates");
  };
  auto* check = app.add_subcommand("check-spec", "parameter and precondition report");
  add_common(check, false);
  auto* sim = app.add_subcommand("simulate", "closed-loop run, writes CSV and summary");
  add_common(sim, false);
  sim->add_option("--out", out_dir, "output directory");
  sim->add_flag("--emit-plot", emit_plot, "also write a gnuplot script");
  auto* cmp = app.add_subcommand("compare", "runs several configs and compares cumulated cost");
  add_common(cmp, true);
  cmp->add_option("--out", out_dir, "output directory");
  cmp->add_flag("--emit-plot", emit_plot, "also write gnuplot scripts");
  auto* verify = app.add_subcommand("verify-terminal", "synthesize and certify the terminal ingredients");
  add_common(verify, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : tbctl::kExitConfig;
  }

  try {
    const auto cfgs = load_all(configs, seed);
    const auto dir = [&](const ExperimentConfig& c) {
      return out_dir.empty() ? c.out_dir : std::filesystem::path(out_dir);
    };
    tbctl::CommandResult res;
    if (*check) {
      res = tbctl::cmd_check_spec(cfgs.front());
    } else if (*sim) {
      res = tbctl::cmd_simulate(cfgs.front(), dir(cfgs.front()), emit_plot);
    } else if (*cmp) {
      res = tbctl::cmd_compare(cfgs, dir(cfgs.front()), emit_plot);
    } else {
      res = tbctl::cmd_verify_terminal(cfgs.front());
    }
    std::cout << res.report;
    for (const auto& f : res.files) std::cout << "wrote " << f.string() << "\n";
    return res.exit_code;
  } catch (const tbctl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return tbctl::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return tbctl::kExitFailure;
  }
}
