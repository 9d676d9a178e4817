#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rdpg/experiments.hpp"
#include "rdpg/serialize.hpp"

namespace rdpg {

namespace cli_detail {

inline ExperimentConfig load_config(const std::string& experiment, const std::string& config_path) {
  ExperimentConfig cfg = default_config(experiment);
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot read config: " + config_path);
    nlohmann::json j;
    in >> j;
    cfg = j.get<ExperimentConfig>();
    if (cfg.experiment == "custom") cfg.experiment = experiment;
  }
  return cfg;
}

inline Vector parse_number_list(const std::string& csv) {
  std::vector<double> vals;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) vals.push_back(parse_double(tok));
  return Eigen::Map<const Vector>(vals.data(), static_cast<Index>(vals.size()));
}

inline std::vector<int> parse_index_list(const std::string& csv) {
  std::vector<int> vals;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) vals.push_back(std::stoi(tok));
  return vals;
}

// Shared experiment flags; file values first, then flag overrides.
struct ExperimentFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  int reps = -1;
  std::string out;
  bool quick = false;
  int workers = -1;
  bool force = false;
  int n = -1, T = -1;
  double dt = -1.0;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file");
    app->add_option("--seed", seed, "master seed (overrides config)");
    app->add_option("--reps", reps, "Monte Carlo repetitions");
    app->add_option("--out", out, "output directory");
    app->add_flag("--quick", quick, "desk-scale defaults (halved n)");
    app->add_option("--workers", workers, "concurrent repetition workers");
    app->add_flag("--force", force, "overwrite an existing run directory");
    app->add_option("--n", n, "node count");
    app->add_option("--T", T, "time steps");
    app->add_option("--dt", dt, "step size");
  }

  ExperimentConfig build(const std::string& experiment, const CLI::App* app) const {
    ExperimentConfig cfg = load_config(experiment, config_path);
    if (app->count("--seed")) cfg.master_seed = seed;
    if (reps > 0) cfg.reps = reps;
    if (!out.empty()) cfg.output_dir = out;
    if (quick) cfg.quick = true;
    if (workers > 0) cfg.workers = workers;
    if (force) cfg.force = true;
    if (n > 0) cfg.n = n;
    if (T > 0) cfg.T = T;
    if (dt > 0.0) cfg.dt = dt;
    return cfg;
  }
};

}  // namespace cli_detail

// Exit codes: 0 success, 1 validation/usage error, 2 numerical failure.
inline int cli_dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  CLI::App app{"RDPG latent-dynamics toolkit"};
  app.require_subcommand(1);

  // ---- simulate ----------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "integrate a dynamics spec from X0");
  std::string sim_spec, sim_x0, sim_out;
  int sim_steps = 50;
  double sim_dt = 0.05;
  bool sim_bundle = false;
  sim->add_option("--spec", sim_spec, "dynamics spec JSON")->required();
  sim->add_option("--x0", sim_x0, "initial configuration CSV/JSON")->required();
  sim->add_option("--steps", sim_steps, "step count");
  sim->add_option("--dt", sim_dt, "step size");
  sim->add_option("--out", sim_out, "output directory (or .json bundle)")->required();
  sim->add_flag("--bundle", sim_bundle, "write a single JSON bundle");

  // ---- sample ------------------------------------------------------------
  auto* smp = app.add_subcommand("sample", "draw Bernoulli adjacency samples from P");
  std::string smp_p, smp_out;
  int smp_m = 1;
  std::uint64_t smp_seed = 1;
  smp->add_option("--p", smp_p, "probability matrix CSV/JSON")->required();
  smp->add_option("--m", smp_m, "sample count");
  smp->add_option("--seed", smp_seed, "seed");
  smp->add_option("--out", smp_out, "output directory")->required();

  // ---- embed -------------------------------------------------------------
  auto* emb = app.add_subcommand("embed", "adjacency spectral embedding");
  std::string emb_in, emb_out;
  int emb_d = 2;
  emb->add_option("--input", emb_in, "adjacency CSV/JSON")->required();
  emb->add_option("--d", emb_d, "embedding dimension");
  emb->add_option("--out", emb_out, "output CSV")->required();

  // ---- align -------------------------------------------------------------
  auto* aln = app.add_subcommand("align", "align an embedding series");
  std::string aln_dir, aln_method = "sequential", aln_anchors, aln_out;
  int aln_ref = 0;
  aln->add_option("--series", aln_dir, "embedding series directory")->required();
  aln->add_option("--method", aln_method, "sequential | anchor | none");
  aln->add_option("--anchors", aln_anchors, "comma-separated anchor indices");
  aln->add_option("--ref", aln_ref, "reference frame for anchor alignment");
  aln->add_option("--out", aln_out, "output directory")->required();

  // ---- lift --------------------------------------------------------------
  auto* lft = app.add_subcommand("lift", "horizontal lift of a P-velocity");
  std::string lft_p, lft_pdot, lft_out;
  int lft_d = 2;
  lft->add_option("--p", lft_p, "probability matrix CSV/JSON")->required();
  lft->add_option("--pdot", lft_pdot, "P-velocity CSV/JSON")->required();
  lft->add_option("--d", lft_d, "rank");
  lft->add_option("--out", lft_out, "output CSV")->required();

  // ---- curvature -----------------------------------------------------------
  auto* crv = app.add_subcommand("curvature", "vertical bracket norm for two generators");
  std::string crv_x, crv_m1, crv_m2, crv_out;
  crv->add_option("--x", crv_x, "latent configuration CSV/JSON")->required();
  crv->add_option("--m1", crv_m1, "first symmetric generator")->required();
  crv->add_option("--m2", crv_m2, "second symmetric generator")->required();
  crv->add_option("--out", crv_out, "report JSON (optional)");

  // ---- psi -----------------------------------------------------------------
  auto* psi = app.add_subcommand("psi", "Laplacian commutator criterion Psi(X)");
  std::string psi_in, psi_out;
  psi->add_option("--input", psi_in, "latent configuration CSV/JSON")->required();
  psi->add_option("--out", psi_out, "output JSON (optional)");

  // ---- invert ---------------------------------------------------------------
  auto* inv = app.add_subcommand("invert", "Lyapunov inversion of a P-velocity");
  std::string inv_p, inv_pdot, inv_out;
  int inv_d = 2;
  inv->add_option("--p", inv_p, "probability matrix CSV/JSON")->required();
  inv->add_option("--pdot", inv_pdot, "P-velocity CSV/JSON")->required();
  inv->add_option("--d", inv_d, "rank");
  inv->add_option("--out", inv_out, "output directory")->required();

  // ---- fit ------------------------------------------------------------------
  auto* fit = app.add_subcommand("fit", "polynomial coefficient regression from a P-trajectory");
  std::string fit_traj, fit_out;
  int fit_degree = 1;
  fit->add_option("--traj", fit_traj, "trajectory directory or JSON bundle")->required();
  fit->add_option("--degree", fit_degree, "polynomial degree K");
  fit->add_option("--out", fit_out, "output CSV")->required();

  // ---- fisher ------------------------------------------------------------------
  auto* fsh = app.add_subcommand("fisher", "Fisher information for polynomial dynamics");
  std::string fsh_p, fsh_theta, fsh_out;
  int fsh_d = 2, fsh_T = 50;
  double fsh_dt = 0.05, fsh_floor = tol::kProbFloor;
  fsh->add_option("--p", fsh_p, "initial probability matrix CSV/JSON")->required();
  fsh->add_option("--d", fsh_d, "rank");
  fsh->add_option("--theta", fsh_theta, "comma-separated coefficients")->required();
  fsh->add_option("--T", fsh_T, "snapshot count (last index)");
  fsh->add_option("--dt", fsh_dt, "snapshot spacing");
  fsh->add_option("--floor", fsh_floor, "probability floor for Fisher weights");
  fsh->add_option("--out", fsh_out, "output directory")->required();

  // ---- experiments ------------------------------------------------------------
  cli_detail::ExperimentFlags exp1_flags, exp2_flags, hol_flags, fshs_flags;
  auto* exp1_cmd = app.add_subcommand("exp1", "anchor-alignment experiment");
  exp1_flags.attach(exp1_cmd);
  auto* exp2_cmd = app.add_subcommand("exp2", "spiral-dynamics recovery experiment");
  exp2_flags.attach(exp2_cmd);
  auto* hol_cmd = app.add_subcommand("holonomy", "polynomial vs Laplacian holonomy suite");
  hol_flags.attach(hol_cmd);
  auto* fshs_cmd = app.add_subcommand("fishersuite", "Fisher information scaling suite");
  fshs_flags.attach(fshs_cmd);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (sim->parsed()) {
      std::ifstream in(sim_spec);
      if (!in) throw IoError("cannot read spec: " + sim_spec);
      nlohmann::json j;
      in >> j;
      const DynamicsSpec spec = j.get<DynamicsSpec>();
      const Matrix x0 = read_matrix_auto(sim_x0);
      const Trajectory traj = integrate(spec, LatentConfig(x0), sim_steps, sim_dt);
      if (sim_bundle)
        write_trajectory_bundle(sim_out, traj);
      else
        write_trajectory_dir(sim_out, traj);
      out << "simulate: " << traj.length() << " states (" << family_name(spec.family) << ") -> "
          << sim_out << "\n";
    } else if (smp->parsed()) {
      const Matrix p = read_matrix_auto(smp_p);
      std::filesystem::create_directories(smp_out);
      const ProbMatrix pm(p, p.rows());
      for (int s = 0; s < smp_m; ++s) {
        const auto sample =
            sample_adjacency(pm, derive_seed(smp_seed, {static_cast<std::uint64_t>(s)}));
        write_matrix_csv(std::filesystem::path(smp_out) / indexed_name("adjacency", s),
                         sample.adjacency);
      }
      out << "sample: " << smp_m << " adjacency draws -> " << smp_out << "\n";
    } else if (emb->parsed()) {
      const Matrix a = read_matrix_auto(emb_in);
      write_matrix_csv(emb_out, ase(a, emb_d));
      out << "embed: " << a.rows() << " nodes, d = " << emb_d << " -> " << emb_out << "\n";
    } else if (aln->parsed()) {
      const EmbeddingSeries series = read_series_dir(aln_dir);
      AlignmentResult res;
      if (aln_method == "sequential") {
        res = align_sequential(series);
      } else if (aln_method == "anchor") {
        res = align_anchor(series, cli_detail::parse_index_list(aln_anchors), aln_ref);
      } else if (aln_method == "none") {
        res = align_none(series);
      } else {
        err << "unknown method: " << aln_method << "\n";
        return 1;
      }
      write_series_dir(aln_out, res.aligned);
      std::ofstream rp(std::filesystem::path(aln_out) / "alignment_report.json");
      rp << alignment_report_to_json(res.report).dump(2) << '\n';
      out << "align: method = " << aln_method << ", " << series.frame_count() << " frames -> "
          << aln_out << "\n";
    } else if (lft->parsed()) {
      const Matrix p = read_matrix_auto(lft_p);
      const Matrix pdot = read_matrix_auto(lft_pdot);
      const auto dec = spectral_decompose(p, lft_d, 1e-12);
      write_matrix_csv(lft_out, horizontal_lift(dec, pdot));
      out << "lift: wrote horizontal lift -> " << lft_out << "\n";
    } else if (crv->parsed()) {
      const Matrix x = read_matrix_auto(crv_x);
      const auto rep =
          curvature_norm(LatentConfig(x), read_matrix_auto(crv_m1), read_matrix_auto(crv_m2));
      if (!crv_out.empty()) {
        std::ofstream o(crv_out);
        o << curvature_report_to_json(rep).dump(2) << '\n';
      }
      out << "curvature: vertical bracket norm_sq = " << format_double(rep.vertical_bracket_norm_sq)
          << "\n";
    } else if (psi->parsed()) {
      const Matrix x = read_matrix_auto(psi_in);
      const Matrix p = laplacian_psi(LatentConfig(x));
      out << "psi:";
      for (Index i = 0; i < p.rows(); ++i)
        for (Index j = 0; j < p.cols(); ++j) out << ' ' << format_double(p(i, j));
      out << "\n";
      if (!psi_out.empty()) {
        std::ofstream o(psi_out);
        o << matrix_to_json(p).dump(2) << '\n';
      }
    } else if (inv->parsed()) {
      const Matrix p = read_matrix_auto(inv_p);
      const Matrix pdot = read_matrix_auto(inv_pdot);
      const auto dec = spectral_decompose(p, inv_d, 1e-12);
      const auto inversion = lyapunov_invert(dec, pdot);
      std::filesystem::create_directories(inv_out);
      write_matrix_csv(std::filesystem::path(inv_out) / "range_range.csv", inversion.range_range);
      write_matrix_csv(std::filesystem::path(inv_out) / "cross.csv", inversion.cross);
      std::ofstream o(std::filesystem::path(inv_out) / "inversion.json");
      o << lyapunov_inversion_to_json(inversion).dump(2) << '\n';
      out << "invert: determined " << inversion.determined_count() << " entries, residual = "
          << format_double(inversion.residual) << " -> " << inv_out << "\n";
    } else if (fit->parsed()) {
      const Trajectory traj = read_trajectory_auto(fit_traj);
      Trajectory ptraj = traj;
      if (ptraj.kind == TrajectoryKind::latent) {
        ptraj = probability_trajectory(traj);
      }
      const auto pf = fit_polynomial_coeffs(ptraj, fit_degree);
      CsvTable table({"k", "alpha", "cond", "relative_residual"});
      for (Index k = 0; k < pf.coeffs.size(); ++k)
        table.add_row({std::to_string(k), format_double(pf.coeffs(k)),
                       format_double(pf.condition_number), format_double(pf.relative_residual)});
      table.write(fit_out);
      out << "fit: alpha =";
      for (Index k = 0; k < pf.coeffs.size(); ++k) out << ' ' << format_double(pf.coeffs(k));
      out << " (cond " << format_double(pf.condition_number) << ") -> " << fit_out << "\n";
    } else if (fsh->parsed()) {
      const Matrix p = read_matrix_auto(fsh_p);
      const auto dec = spectral_decompose(p, fsh_d, 1e-12);
      const Vector theta = cli_detail::parse_number_list(fsh_theta);
      const auto rep = fisher_polynomial(dec, theta, fsh_T, fsh_dt, fsh_floor);
      std::filesystem::create_directories(fsh_out);
      std::ofstream o(std::filesystem::path(fsh_out) / "fisher.json");
      o << fisher_report_to_json(rep).dump(2) << '\n';
      fisher_per_time_table(rep).write(std::filesystem::path(fsh_out) / "fisher_per_time.csv");
      out << "fisher: trace(I) = " << format_double(rep.info_matrix.trace())
          << ", crb_trace = " << format_double(rep.crb_trace) << " -> " << fsh_out << "\n";
    } else if (exp1_cmd->parsed()) {
      const auto rec = run_experiment1(exp1_flags.build("exp1_anchor", exp1_cmd));
      out << "exp1: done in " << rec.wall_seconds << " s -> "
          << rec.config["output_dir"].get<std::string>() << "\n";
    } else if (exp2_cmd->parsed()) {
      const auto rec = run_experiment2(exp2_flags.build("exp2_pipeline", exp2_cmd));
      out << "exp2: done in " << rec.wall_seconds << " s -> "
          << rec.config["output_dir"].get<std::string>() << "\n";
    } else if (hol_cmd->parsed()) {
      const auto rec = run_holonomy_suite(hol_flags.build("holonomy_suite", hol_cmd));
      out << "holonomy: done in " << rec.wall_seconds << " s -> "
          << rec.config["output_dir"].get<std::string>() << "\n";
    } else if (fshs_cmd->parsed()) {
      const auto rec = run_fisher_suite(fshs_flags.build("fisher_suite", fshs_cmd));
      out << "fishersuite: done in " << rec.wall_seconds << " s -> "
          << rec.config["output_dir"].get<std::string>() << "\n";
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

inline int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_dispatch(args);
}

}  // namespace rdpg
