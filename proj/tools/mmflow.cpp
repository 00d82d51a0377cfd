// mmflow: run minimizing-movement scenarios and audits from a JSON config.
//
//   mmflow run    --config scenario.json --out results/ [--seed N] [--jobs N]
//   mmflow verify --config verify.json
//   mmflow rates  --config scenario.json --jobs 4
//   mmflow list

#include "mmflow/cli.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
  CLI::App app{"Minimizing movement schemes and gradient-flow audits"};
  app.require_subcommand(1);

  mmflow::CommandOptions opt;
  std::string config, out_dir = ".";
  std::uint64_t seed = 0;
  unsigned jobs = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "scenario file (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--jobs", jobs, "parallel scheme runs in convergence studies")->check(CLI::PositiveNumber);
  };
  add_common(app.add_subcommand("run", "convergence study, scheme and flow audits"));
  add_common(app.add_subcommand("verify", "audit a serialized trajectory"));
  add_common(app.add_subcommand("rates", "convergence study only"));
  app.add_subcommand("list", "catalog of spaces, functionals and audits");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const CLI::App* sub = app.get_subcommands().front();
  opt.command = sub->get_name();
  opt.config = config;
  opt.out_dir = out_dir;
  if (opt.command != "list" && sub->count("--seed") > 0) opt.seed = seed;
  opt.jobs = jobs;
  return mmflow::run_command(opt, std::cout, std::cerr);
}
