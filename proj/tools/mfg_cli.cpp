// Experiment front end: run | sweep | compare | plot.

#include "mfg/io/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

namespace {

/// "0.02,0.05, 0.1" -> {0.02, 0.05, 0.1}; false on a malformed entry.
bool parse_sigma_list(const std::string& text, std::vector<double>& out) {
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    item = item.substr(b, e - b + 1);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) return false;
    } catch (const std::exception&) {
      return false;
    }
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace mfg::io;
  CLI::App app{"policy iteration and Newton solvers for mean field games on the torus"};
  app.require_subcommand(1);

  CommandOptions opts;
  std::string sigma_text;

  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", opts.config, "experiment file");
    if (needs_config) c->required();
    sub->add_option("--out", opts.out, "output directory (plot: SVG file)");
    sub->add_option("--max-iter", opts.max_iter, "override solver.max_iter");
    sub->add_option("--tol", opts.tol, "override solver.tol");
    sub->add_option("--seed", opts.seed, "seed of the randomized validation hooks");
  };

  auto* run = app.add_subcommand("run", "solve one configuration");
  common(run, true);
  auto* sweep = app.add_subcommand("sweep", "tabulate contraction factors over sigma");
  common(sweep, true);
  sweep->add_option("--sigma", sigma_text, "comma-separated sigma values")->required();
  auto* compare = app.add_subcommand("compare", "policy iteration against Newton");
  common(compare, true);
  auto* plot = app.add_subcommand("plot", "SVG convergence chart of a report.csv");
  std::string report;
  plot->add_option("report", report, "report.csv to plot")->required();
  plot->add_option("--out", opts.out, "SVG file to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (*run) return cmd_run(opts, std::cout, std::cerr);
  if (*sweep) {
    if (!parse_sigma_list(sigma_text, opts.sigma)) {
      std::cerr << "config error: --sigma: malformed list '" << sigma_text << "'\n";
      return exit_config;
    }
    return cmd_sweep(opts, std::cout, std::cerr);
  }
  if (*compare) return cmd_compare(opts, std::cout, std::cerr);
  const std::filesystem::path out = plot->count("--out") ? opts.out : std::filesystem::path("plot.svg");
  return cmd_plot(report, out, std::cout, std::cerr);
}
