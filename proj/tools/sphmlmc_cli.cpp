#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "sphmlmc/fem.hpp"
#include "sphmlmc/grf.hpp"
#include "sphmlmc/harness.hpp"
#include "sphmlmc/mesh.hpp"
#include "sphmlmc/spectral.hpp"

using namespace sphmlmc;

namespace {

template <class Writer>
void write_to(const std::string& path, Writer&& w) {
  if (path.empty()) return;
  if (path == "-") {
    w(std::cout);
    return;
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  w(os);
  if (!os) throw std::runtime_error("write to " + path + " failed");
}

void kv(const char* key, double v) { std::printf("%s=%.17g\n", key, v); }
void kv(const char* key, long long v) { std::printf("%s=%lld\n", key, v); }
void kv(const char* key, const std::string& v) { std::printf("%s=%s\n", key, v.c_str()); }

struct FieldOpts {
  double alpha = 4.0;
  std::uint64_t seed = 1;
  std::uint32_t sample = 0;
  double mean = 0.0;
};

void add_field_opts(CLI::App* app, FieldOpts& o) {
  app->add_option("--alpha", o.alpha, "spectrum decay, A_l = (1 + l)^-alpha")->capture_default_str();
  app->add_option("--seed", o.seed, "master seed")->capture_default_str();
  app->add_option("--sample", o.sample, "sample index within the seed")->capture_default_str();
  app->add_option("--mean", o.mean, "mean of the Gaussian field")->capture_default_str();
}

RandomStream field_stream(const FieldOpts& o) { return RandomStream(o.seed, {StreamDomain::adhoc, 0, 0, o.sample}); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lognormal diffusion on the sphere: field sampling, solvers and MLMC"};
  app.require_subcommand(1);

  // sample-field
  FieldOpts sf;
  int sf_L = 16, sf_nt = 0, sf_np = 0;
  std::string sf_out = "-", sf_grid_out, sf_spectrum_out;
  auto* sample_cmd = app.add_subcommand("sample-field", "draw T^L and a^L = exp(T^L) on a Gauss-Legendre grid");
  add_field_opts(sample_cmd, sf);
  sample_cmd->add_option("--L", sf_L, "truncation degree")->capture_default_str();
  sample_cmd->add_option("--grid-ntheta", sf_nt, "colatitude nodes (default: smallest exact grid)");
  sample_cmd->add_option("--grid-nphi", sf_np, "longitude nodes (default: 2 ntheta)");
  sample_cmd->add_option("--out", sf_out, "coefficient CSV l,m,re,im ('-' for stdout)")->capture_default_str();
  sample_cmd->add_option("--grid-out", sf_grid_out, "a^L on the grid as theta,phi,value CSV");
  sample_cmd->add_option("--spectrum-out", sf_spectrum_out, "spectrum CSV l,A_l");

  // solve
  FieldOpts so;
  std::string method = "spectral", so_out, so_mesh_out;
  int La = 8, Lu = 8, fem_j = 3, fem_L = 8;
  auto* solve_cmd = app.add_subcommand("solve", "solve -div(a grad u) = Y10 for one coefficient sample");
  add_field_opts(solve_cmd, so);
  solve_cmd->add_option("--method", method, "spectral or fem")->check(CLI::IsMember({"spectral", "fem"}))->capture_default_str();
  solve_cmd->add_option("--La", La, "truncation degree of the coefficient (spectral)")->capture_default_str();
  solve_cmd->add_option("--Lu", Lu, "degree of the solution space (spectral)")->capture_default_str();
  solve_cmd->add_option("--j", fem_j, "icosphere refinement level (fem)")->capture_default_str();
  solve_cmd->add_option("--L", fem_L, "truncation degree of the coefficient (fem)")->capture_default_str();
  solve_cmd->add_option("--out", so_out, "solution: coefficients CSV (spectral) or x,y,z,u CSV (fem)");
  solve_cmd->add_option("--mesh-out", so_mesh_out, "OFF export of the mesh (fem)");

  // mlmc-convergence
  auto* conv_cmd = app.add_subcommand("mlmc-convergence", "MLMC error against a reference, over J = J_min..J");
  std::string config_path;
  bool quiet = false;
  conv_cmd->add_option("--config", config_path, "key = value file; flags below override it");
  conv_cmd->add_flag("--quiet", quiet, "no progress on stderr");
  std::map<std::string, std::string> overrides;
  const std::pair<const char*, const char*> keys[] = {
      {"alpha", "alpha"},         {"k", "k"},
      {"s", "s"},                 {"kappa", "kappa"},
      {"epsilon", "epsilon"},     {"L0", "L0"},
      {"j0", "j0"},               {"J", "J_max"},
      {"J-min", "J_min"},         {"seed", "seed"},
      {"ref-seed", "ref_seed"},   {"kappa-ref", "kappa_ref"},
      {"L0-ref", "L0_ref"},       {"n-ref", "n_ref"},
      {"n-err", "n_err"},         {"method", "method"},
      {"workers", "workers"},     {"mean", "mean"},
      {"eta1", "eta1"},           {"eta2", "eta2"},
      {"out-csv", "out_csv"},     {"out-svg", "out_svg"},
      {"out-levels", "out_levels"}, {"record-wall-time", "record_wall_time"},
      {"deterministic", "deterministic"}, {"quad-refinement", "quad_refinement"},
  };
  for (const auto& [flag, key] : keys) conv_cmd->add_option(std::string("--") + flag, overrides[key]);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sample_cmd) {
      const auto spec = power_law_spectrum(sf.alpha, sf_L);
      const SHCoefficients c = sample_coeffs(spec, sf.mean, sf_L, field_stream(sf));
      const int nt = sf_nt > 0 ? sf_nt : QuadGrid::for_degree(sf_L).n_theta();
      const QuadGrid grid(nt, sf_np > 0 ? sf_np : 2 * nt);
      const FieldSample s = synthesize_lognormal(c, grid);
      write_to(sf_out, [&](std::ostream& os) { write_coefficients_csv(os, c); });
      write_to(sf_grid_out, [&](std::ostream& os) { write_grid_csv(os, s.field); });
      write_to(sf_spectrum_out, [&](std::ostream& os) { write_spectrum_csv(os, spec); });
      std::fprintf(stderr, "a_min=%.17g\na_max=%.17g\n", s.a_min, s.a_max);
      return 0;
    }

    if (*solve_cmd) {
      const SHCoefficients f = y10_load();
      kv("method", method);
      if (method == "spectral") {
        const auto spec = power_law_spectrum(so.alpha, La);
        const SHCoefficients c = sample_coeffs(spec, so.mean, La, field_stream(so));
        const FieldSample a = synthesize_lognormal(c, spectral_quad_grid(Lu, La));
        const SpectralSystem sys = assemble_spectral(a, Lu, f);
        const SpectralSolution sol = solve_spectral(sys);
        write_to(so_out, [&](std::ostream& os) { write_coefficients_csv(os, sol.u); });
        kv("La", static_cast<long long>(La));
        kv("Lu", static_cast<long long>(Lu));
        kv("dofs", static_cast<long long>(sys.dimension()));
        kv("residual", sol.residual);
        kv("a_min", sys.a_min);
        kv("a_max", sys.a_max);
        kv("h1_norm", sol.h1_norm);
        kv("apriori_bound", sol.apriori_bound);
        kv("apriori_slack", sol.bound_slack());
        kv("apriori_ok", std::string(sol.apriori_ok ? "true" : "false"));
        return sol.apriori_ok ? 0 : 2;
      }
      FemContext ctx(fem_j, power_law_spectrum(so.alpha, fem_L), so.mean, f, 1);
      const FemSpace& sp = ctx.space(fem_j);
      const SHCoefficients c = sample_coeffs(ctx.spectrum(), so.mean, fem_L, field_stream(so));
      const FemSolution sol = ctx.solve(fem_j, c, 0);
      write_to(so_out, [&](std::ostream& os) {
        os << "x,y,z,u\n";
        char buf[128];
        for (int i = 0; i < sp.dofs(); ++i) {
          const Vec3 y = lift(sp.mesh().vertices[i]);
          std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", y.x(), y.y(), y.z(), sol.u[i]);
          os << buf;
        }
      });
      write_to(so_mesh_out, [&](std::ostream& os) { write_off(os, sp.mesh()); });
      kv("j", static_cast<long long>(fem_j));
      kv("L", static_cast<long long>(fem_L));
      kv("h", sp.mesh().h);
      kv("h_flat", sp.mesh().h_flat);
      kv("dofs", static_cast<long long>(sp.dofs() - 1));
      kv("residual", sol.residual);
      kv("multiplier", sol.multiplier);
      kv("h1_norm", sol.h1_norm);
      kv("apriori_bound", sol.apriori_bound);
      kv("apriori_slack", sol.apriori_bound - sol.h1_norm);
      kv("apriori_ok", std::string(sol.apriori_ok ? "true" : "false"));
      return sol.apriori_ok ? 0 : 2;
    }

    if (*conv_cmd) {
      ExperimentConfig cfg;
      if (!config_path.empty()) cfg = load_config(config_path);
      for (const auto& [flag, key] : keys)
        if (conv_cmd->get_option(std::string("--") + flag)->count() > 0) apply_setting(cfg, key, overrides[key]);
      cfg.validate();
      ProgressFn log;
      if (!quiet) log = [](const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); };
      const ConvergenceResult res = run_convergence(cfg, log);
      if (cfg.out_csv.empty()) write_convergence_csv(std::cout, res.rows);
      emit_outputs(res, cfg.out_csv, cfg.out_svg, cfg.out_levels);
      if (res.rows.size() >= 2) std::fprintf(stderr, "rate=%.6f\n", res.rate);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
