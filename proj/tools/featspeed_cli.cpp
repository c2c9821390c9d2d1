#include "featspeed/featspeed.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace fs = featspeed;
namespace fh = featspeed::harness;

namespace {

constexpr int kUsageError = 1;
constexpr int kAssertionFailure = 2;

int cmd_run(const std::string& id, const std::string& config_path, fh::ExperimentConfig overrides,
            const CLI::App& sub) {
  fh::ExperimentConfig cfg = config_path.empty() ? fh::ExperimentConfig{} : fh::load_config(config_path);
  // Flags given on the command line take precedence over the file.
  auto given = [&](const char* name) { return sub.count(name) > 0; };
  cfg.experiment = id;
  if (given("--seeds")) cfg.seeds = overrides.seeds;
  if (given("--dt")) cfg.dt = overrides.dt;
  if (given("--grid-L")) cfg.grid_L = overrides.grid_L;
  if (given("--grid-m")) cfg.grid_m = overrides.grid_m;
  if (given("--grid-beta")) cfg.grid_beta = overrides.grid_beta;
  if (given("--grid-c")) cfg.grid_c = overrides.grid_c;
  if (given("--out")) cfg.out = overrides.out;
  if (given("--workers")) cfg.workers = overrides.workers;
  if (given("--seed")) cfg.seed = overrides.seed;
  if (given("--svg")) cfg.svg = true;
  if (given("--setting")) cfg.setting = overrides.setting;
  for (auto [flag, field] : {std::pair{"--d", &fh::ExperimentConfig::d}, std::pair{"--m", &fh::ExperimentConfig::m},
                             std::pair{"--k", &fh::ExperimentConfig::k}, std::pair{"--L", &fh::ExperimentConfig::L},
                             std::pair{"--batch", &fh::ExperimentConfig::batch}})
    if (given(flag)) cfg.*field = overrides.*field;
  cfg.validate();

  const fh::RunResult res = fh::run(cfg);
  for (const auto& f : res.files) std::cout << "wrote " << f.string() << "\n";
  for (const auto& n : res.notes) std::cout << n << "\n";
  for (const auto& f : res.failures) std::cerr << "assertion failed: " << f << "\n";
  return res.ok() ? 0 : kAssertionFailure;
}

int cmd_schemes(const std::string& name, const fs::NamedScheme& spec) {
  fs::NamedScheme s = spec;
  s.name = fs::parse_scheme_name(name);
  const fs::ScalingScheme h = fs::named_scheme(s);
  const std::size_t L = s.L;
  std::cout << "scheme " << fs::to_string(s.name) << " (" << fs::to_string(s.setting) << ", d=" << s.d << " m=" << s.m
            << " k=" << s.k << " L=" << L << " beta=" << fh::format_number(s.beta) << ")\n";
  std::cout << "sigma_in  " << fh::format_number(h.sigma_in) << "\n"
            << "sigma_hid " << fh::format_number(h.sigma_hid) << "\n"
            << "sigma_out " << fh::format_number(h.sigma_out) << "\n"
            << "eta_in    " << fh::format_number(h.eta_in) << "\n"
            << "eta_hid   " << fh::format_number(h.eta_hid) << "\n"
            << "eta_out   " << fh::format_number(h.eta_out) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature speed diagnostics and scaling experiments"};
  app.require_subcommand(1);

  fh::ExperimentConfig ov;
  std::string id, config_path, setting = "Dense";
  std::size_t d = 0, m = 0, k = 0, L = 0, batch = 0;
  double dt = 0.0;
  auto* run = app.add_subcommand("run", "run an experiment and write CSV output");
  run->add_option("experiment", id, "experiment id")->required();
  run->add_option("--config", config_path, "JSON config file");
  run->add_option("--seeds", ov.seeds, "seeds per grid point");
  run->add_option("--dt", dt, "step size");
  run->add_option("--grid-L", ov.grid_L, "depth grid")->delimiter(',');
  run->add_option("--grid-m", ov.grid_m, "width grid")->delimiter(',');
  run->add_option("--grid-beta", ov.grid_beta, "branch scales, multiples of 1/sqrt(L)")->delimiter(',');
  run->add_option("--grid-c", ov.grid_c, "fig1c branch-scale constants")->delimiter(',');
  run->add_option("--out", ov.out, "output directory");
  run->add_option("--workers", ov.workers, "worker threads (0 = all cores)");
  run->add_option("--seed", ov.seed, "base seed");
  run->add_option("--setting", setting, "Dense or Sparse");
  run->add_option("--d", d, "input dimension");
  run->add_option("--m", m, "width");
  run->add_option("--k", k, "output dimension");
  run->add_option("--L", L, "depth");
  run->add_option("--batch", batch, "input samples");
  run->add_flag("--svg", "also write SVG plots");

  std::string csv_path, px, py, series, svg_out;
  bool logx = false, logy = false;
  auto* plot = app.add_subcommand("plot", "render a CSV file as SVG");
  plot->add_option("csv", csv_path, "input CSV")->required();
  plot->add_option("--x", px, "x column")->required();
  plot->add_option("--y", py, "y column")->required();
  plot->add_option("--series", series, "grouping column");
  plot->add_flag("--logx", logx, "log-scale x axis");
  plot->add_flag("--logy", logy, "log-scale y axis");
  plot->add_option("--out", svg_out, "output SVG path (default: CSV path with .svg)");

  std::string scheme_name, scheme_setting = "Dense";
  fs::NamedScheme ns{fs::SchemeName::FSC_MLP, fs::Setting::Dense, 10, 400, 1, 8, 1.0};
  auto* schemes = app.add_subcommand("schemes", "print the six hyper-parameters of a named scheme");
  schemes->add_option("name", scheme_name, "NTK, MFmuP, FSC_MLP or FSC_ResNet")->required();
  schemes->add_option("--d", ns.d, "input dimension");
  schemes->add_option("--m", ns.m, "width");
  schemes->add_option("--k", ns.k, "output dimension");
  schemes->add_option("--L", ns.L, "depth");
  schemes->add_option("--beta", ns.beta, "ResNet branch scale");
  schemes->add_option("--setting", scheme_setting, "Dense or Sparse");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageError;
  }

  try {
    if (*run) {
      ov.setting = fs::parse_setting(setting);
      if (run->count("--dt")) ov.dt = dt;
      if (run->count("--d")) ov.d = d;
      if (run->count("--m")) ov.m = m;
      if (run->count("--k")) ov.k = k;
      if (run->count("--L")) ov.L = L;
      if (run->count("--batch")) ov.batch = batch;
      return cmd_run(id, config_path, ov, *run);
    }
    if (*plot) {
      fh::PlotSpec spec{px, py, series, logx, logy, ""};
      const std::string out = svg_out.empty() ? std::filesystem::path(csv_path).replace_extension(".svg").string() : svg_out;
      fh::emit_plot(csv_path, spec, out);
      std::cout << "wrote " << out << "\n";
      return 0;
    }
    if (*schemes) {
      ns.setting = fs::parse_setting(scheme_setting);
      if (!schemes->count("--beta")) ns.beta = 1.0 / std::sqrt(static_cast<double>(ns.L));
      return cmd_schemes(scheme_name, ns);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  }
  return kUsageError;
}
