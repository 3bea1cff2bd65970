#include <iostream>

#include "CLI11.hpp"
#include "mfpm/app.hpp"
#include "mfpm/verify.hpp"

int main(int argc, char** argv) {
  CLI::App cli{"Multifocal projection mapping: plan, render, schedule, simulate and verify"};
  cli.require_subcommand(1);
  mfpm::app::Options o;

  std::string config, scene, out, from;
  double fixed_power = 0.0;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "run configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--scene", scene, "built-in scene name or scene file");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "random seed");
  };
  auto* plan = cli.add_subcommand("plan", "sample powers, frame budget and lens drive");
  auto* render = cli.add_subcommand("render", "per-eye slice images and the illumination image");
  auto* schedule = cli.add_subcommand("schedule", "timing chart, its diagnostics and the lens waveform");
  auto* simulate = cli.add_subcommand("simulate", "retinal images and the focus report");
  auto* verify = cli.add_subcommand("verify", "invariant checks, optionally with an injected fault");
  for (auto* sub : {plan, render, schedule, simulate, verify}) common(sub);
  for (auto* sub : {plan, render, schedule, simulate}) {
    sub->add_flag("--no-compensation", o.no_compensation, "disable lens-breathing compensation");
    sub->add_option("--fixed-power", fixed_power, "show every slice at this one power (D)");
  }
  simulate->add_option("--accommodation", o.accommodations, "accommodation distances, eye to focus plane (m)");
  simulate->add_option("--from", from, "directory holding earlier render/ and schedule/ output")
      ->check(CLI::ExistingDirectory);
  std::string faults = "fault to inject:";
  for (const auto& f : mfpm::verify::fault_modes()) faults += std::string(" ") + f.name;
  verify->add_option("--fault", o.fault, faults);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? 0 : 2;
  }

  CLI::App* chosen = cli.get_subcommands().front();
  if (!config.empty()) o.config = config;
  if (!scene.empty()) o.scene = scene;
  if (!out.empty()) o.out = out;
  if (!from.empty()) o.from = from;
  if (chosen->count("--seed")) o.seed = seed;
  if (chosen->get_option_no_throw("--fixed-power") && chosen->count("--fixed-power")) o.fixed_power = fixed_power;
  return mfpm::app::run(chosen->get_name(), o, std::cout, std::cerr);
}
