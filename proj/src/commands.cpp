#include "mfg/io/commands.hpp"

#include "mfg/io/config.hpp"
#include "mfg/io/csv.hpp"
#include "mfg/io/svg.hpp"
#include "mfg/mfg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mfg::io {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string yes_no(bool b) { return b ? "1" : "0"; }

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

/// Loads the config and applies --max-iter and --tol.
Experiment load(const CommandOptions& opts) {
  Experiment ex = load_experiment(opts.config);
  if (opts.max_iter) {
    if (*opts.max_iter < 1) throw ConfigError(0, "--max-iter must be >= 1");
    ex.run.max_iter = *opts.max_iter;
  }
  if (opts.tol) {
    if (!(*opts.tol > 0)) throw ConfigError(0, "--tol must be positive");
    ex.run.tol = *opts.tol;
  }
  return ex;
}

/// Maps the error classes to exit codes; `body` returns the success code.
template <typename Fn>
int guarded(std::ostream& err, Fn&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const SolverError& e) {
    err << "solver aborted: " << e.what() << '\n';
    return exit_solver;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    err << "solver aborted: " << e.what() << '\n';
    return exit_solver;
  }
}

CsvTable report_table(const IterationReport& rep) {
  CsvTable t;
  t.header = {"n", "du_norm", "dm_norm", "dq_norm", "lambda", "dlambda", "combined", "ratio", "projection_active"};
  for (const auto& r : rep.rows)
    t.rows.push_back({std::to_string(r.n), format_number(r.du_norm), format_number(r.dm_norm),
                      format_number(r.dq_norm), format_number(r.lambda), format_number(r.dlambda),
                      format_number(r.combined), format_number(r.ratio), yes_no(r.projection_active)});
  return t;
}

CsvTable timing_table(const IterationReport& rep) {
  CsvTable t;
  t.header = {"n", "fp_time", "hjb_time", "update_time"};
  for (const auto& r : rep.rows)
    t.rows.push_back({std::to_string(r.n), format_number(r.fp_time), format_number(r.hjb_time),
                      format_number(r.update_time)});
  return t;
}

std::vector<std::string> coordinate_header(const TorusGrid& g) {
  return g.dim() == 1 ? std::vector<std::string>{"x"} : std::vector<std::string>{"x", "y"};
}

std::vector<std::string> drift_header(const TorusGrid& g) {
  return g.dim() == 1 ? std::vector<std::string>{"q_x"} : std::vector<std::string>{"q_x", "q_y"};
}

/// Node-major: all levels of node 0, then node 1, ...
CsvTable solution_table(const TorusGrid& g, const MatrixX<double>& u, const MatrixX<double>& m,
                        const SpaceTimeVectorField<double>& policy) {
  CsvTable t;
  const bool timed = g.has_time();
  t.header = {"node"};
  for (auto& c : coordinate_header(g)) t.header.push_back(c);
  if (timed) {
    t.header.push_back("level");
    t.header.push_back("t");
  }
  t.header.push_back("u");
  t.header.push_back("m");
  for (auto& c : drift_header(g)) t.header.push_back(c);

  std::vector<VectorField<double>> q;
  for (const auto& level : policy) q.push_back(drift(level));
  const int levels = timed ? g.levels() : 1;
  for (Index i = 0; i < g.nodes(); ++i) {
    for (int k = 0; k < levels; ++k) {
      std::vector<std::string> row{std::to_string(i)};
      for (int a = 0; a < g.dim(); ++a) row.push_back(format_number(g.coordinate(i, a)));
      if (timed) {
        row.push_back(std::to_string(k));
        row.push_back(format_number(g.time(k)));
      }
      row.push_back(format_number(u(i, k)));
      row.push_back(format_number(m(i, k)));
      for (int a = 0; a < g.dim(); ++a) row.push_back(format_number(q[k].values()(i, a)));
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

std::vector<Series> report_series(const std::vector<double>& n, const CsvTable& rep) {
  std::vector<Series> out;
  for (const char* col : {"du_norm", "dm_norm", "dq_norm", "combined"}) out.push_back({col, n, rep.numbers(col)});
  return out;
}

std::string report_chart(const std::vector<double>& n, const CsvTable& rep) {
  return line_chart_svg({"convergence history", "iteration", "difference", true}, report_series(n, rep));
}

void write_table(const std::filesystem::path& path, const CsvTable& t) { write_atomic(path, t.render()); }

void add_pair(CsvTable& t, const std::string& key, const std::string& value) { t.rows.push_back({key, value}); }

}  // namespace

int cmd_run(const CommandOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const Experiment ex = load(opts);
    const RunConfig<double>& cfg = ex.run;
    std::filesystem::create_directories(opts.out);

    IterationReport rep;
    MatrixX<double> u, m;
    SpaceTimeVectorField<double> policy;
    if (cfg.ergodic()) {
      auto res = run_ergodic(cfg);
      rep = res.report;
      u = res.u.values();
      m = res.m.values();
      policy = {res.policy};
    } else {
      auto res = run_finite_horizon(cfg);
      rep = res.report;
      u = res.u.values();
      m = res.m.values();
      policy = res.policy;
    }

    const CsvTable report = report_table(rep);
    write_table(opts.out / "report.csv", report);
    write_table(opts.out / "timing.csv", timing_table(rep));
    write_table(opts.out / "solution.csv", solution_table(cfg.grid, u, m, policy));

    // randomized validation hook: the only consumer of --seed
    const MonotonicityReport mono = check_monotone(cfg.coupling, 8, opts.seed);

    CsvTable summary;
    summary.header = {"key", "value"};
    add_pair(summary, "mode", cfg.ergodic() ? "ergodic" : "finite_horizon");
    add_pair(summary, "sigma", format_number(cfg.sigma()));
    add_pair(summary, "converged", yes_no(rep.converged));
    add_pair(summary, "iterations", std::to_string(rep.rows.size()));
    add_pair(summary, "final_residual", format_number(rep.final_residual));
    add_pair(summary, "lambda", format_number(cfg.ergodic() ? rep.rows.back().lambda : kNaN));
    std::string c_star;
    try {
      c_star = format_number(contraction_factor(rep).c_star);
    } catch (const InsufficientData&) {
    }
    add_pair(summary, "c_star", c_star);
    add_pair(summary, "seed", std::to_string(opts.seed));
    add_pair(summary, "coupling_monotone_sampled", yes_no(mono.monotone));
    add_pair(summary, "flags", join(rep.flags, "; "));
    write_table(opts.out / "summary.csv", summary);

    log << (rep.converged ? "converged" : "not converged") << " after " << rep.rows.size()
        << " iterations, residual " << format_number(rep.final_residual);
    if (!c_star.empty()) log << ", C* " << c_star;
    log << '\n';
    for (const auto& f : rep.flags) log << "note: " << f << '\n';
    return static_cast<int>(exit_ok);
  });
}

int cmd_sweep(const CommandOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.sigma.empty()) throw ConfigError(0, "--sigma list is empty; give at least one value");
    for (double s : opts.sigma)
      if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError(0, "--sigma values must be finite and >= 0");
    const Experiment ex = load(opts);
    std::filesystem::create_directories(opts.out);

    std::vector<double> sigmas = opts.sigma;
    std::stable_sort(sigmas.begin(), sigmas.end());
    const SweepTable table = sigma_sweep(ex.run, sigmas);

    CsvTable csv;
    csv.header = {"sigma", "converged", "iterations", "final_residual", "c_star", "order", "error"};
    Series cs{"C*", {}, {}};
    bool failed = false;
    for (const auto& r : table.rows) {
      const double c = r.contraction ? r.contraction->c_star : kNaN;
      csv.rows.push_back({format_number(r.sigma), yes_no(r.converged), std::to_string(r.iterations),
                          format_number(r.final_residual), format_number(c),
                          format_number(r.order ? r.order->order : kNaN), r.error});
      cs.x.push_back(r.sigma);
      cs.y.push_back(c);
      failed = failed || !r.error.empty();
      log << "sigma " << format_number(r.sigma) << ": "
          << (r.error.empty() ? (r.converged ? "converged" : "not converged") : "failed: " + r.error) << '\n';
    }
    write_table(opts.out / "sweep.csv", csv);

    CsvTable summary;
    summary.header = {"key", "value"};
    add_pair(summary, "rows", std::to_string(table.rows.size()));
    add_pair(summary, "monotone_trend", yes_no(table.monotone_trend));
    add_pair(summary, "empirical_threshold", format_number(table.empirical_threshold.value_or(kNaN)));
    write_table(opts.out / "sweep_summary.csv", summary);

    write_atomic(opts.out / "sweep.svg",
                 line_chart_svg({"contraction factor against sigma", "sigma", "C*", true}, {cs}));
    return static_cast<int>(failed ? exit_solver : exit_ok);
  });
}

int cmd_compare(const CommandOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    Experiment ex = load(opts);
    RunConfig<double>& cfg = ex.run;
    if (cfg.ergodic()) throw ConfigError(0, "compare needs a finite-horizon config; Newton covers the time-dependent system only");
    if (cfg.sigma() > 0.0 && !cfg.coupling.has_derivative())
      throw ConfigError(0, "compare runs Newton, which needs a local coupling F(x, m(x)) with a known dF/dm; the "
                           "configured '" + ex.coupling_kind + "' coupling is nonlocal, so its derivative would fill "
                           "the Jacobian densely. Use [coupling] kind = local or sigma = 0");
    std::filesystem::create_directories(opts.out);

    // both methods must see one Hamiltonian: freeze the automatic truncation first
    if (cfg.auto_truncation_factor) {
      const auto first = resume_finite_horizon(cfg, initial_state(cfg), 1);
      cfg.hamiltonian = first.state.hamiltonian;
      cfg.auto_truncation_factor.reset();
    }

    std::vector<MatrixX<double>> pi_u, pi_m;
    const auto pi = run_finite_horizon(cfg, [&](int, const MatrixX<double>& u, const MatrixX<double>& m) {
      pi_u.push_back(u);
      pi_m.push_back(m);
    });
    std::vector<double> pi_res;
    for (std::size_t n = 0; n < pi_u.size(); ++n)
      pi_res.push_back(residual_map(cfg, SpaceTimeField<double>(cfg.grid, pi_u[n]), SpaceTimeField<double>(cfg.grid, pi_m[n])).max());

    const TorusGrid& g = cfg.grid;
    std::vector<MatrixX<double>> nt_u{pi_u.front()};
    const auto newton = run_newton(cfg, newton_state(cfg, SpaceTimeField<double>(g, pi_u.front()), SpaceTimeField<double>(g, pi_m.front())),
                                   [&](int, const NewtonState<double>& s) { nt_u.push_back(s.u.values()); });

    const std::size_t rows = std::max(pi_u.size(), newton.rows.size());
    CsvTable csv, timing;
    csv.header = {"iteration", "pi_residual", "newton_residual", "u_gap"};
    timing.header = {"iteration", "pi_time", "newton_time"};
    Series s_pi{"policy iteration", {}, {}}, s_nt{"Newton", {}, {}};
    for (std::size_t n = 0; n < rows; ++n) {
      const double pr = n < pi_res.size() ? pi_res[n] : kNaN;
      const double nr = n < newton.rows.size() ? newton.rows[n].residual : kNaN;
      const double gap = n < pi_u.size() && n < nt_u.size() ? (pi_u[n] - nt_u[n]).cwiseAbs().maxCoeff() : kNaN;
      csv.rows.push_back({std::to_string(n), format_number(pr), format_number(nr), format_number(gap)});
      const double pt = n < pi.report.rows.size()
                            ? pi.report.rows[n].fp_time + pi.report.rows[n].hjb_time + pi.report.rows[n].update_time
                            : kNaN;
      timing.rows.push_back({std::to_string(n), format_number(pt), format_number(n < newton.rows.size() ? newton.rows[n].time : kNaN)});
      s_pi.x.push_back(static_cast<double>(n));
      s_pi.y.push_back(pr);
      s_nt.x.push_back(static_cast<double>(n));
      s_nt.y.push_back(nr);
    }
    write_table(opts.out / "compare.csv", csv);
    write_table(opts.out / "compare_timing.csv", timing);

    const double du = (pi.u.values() - newton.u.values()).cwiseAbs().maxCoeff();
    const double dm = (pi.m.values() - newton.m.values()).cwiseAbs().maxCoeff();
    CsvTable summary;
    summary.header = {"key", "value"};
    add_pair(summary, "pi_converged", yes_no(pi.report.converged));
    add_pair(summary, "pi_iterations", std::to_string(pi.report.rows.size()));
    add_pair(summary, "newton_converged", yes_no(newton.converged));
    add_pair(summary, "newton_iterations", std::to_string(newton.rows.size()));
    add_pair(summary, "final_u_gap", format_number(du));
    add_pair(summary, "final_m_gap", format_number(dm));
    std::vector<std::string> flags = pi.report.flags;
    for (const auto& f : newton.flags) flags.push_back("Newton: " + f);
    add_pair(summary, "flags", join(flags, "; "));
    write_table(opts.out / "compare_summary.csv", summary);
    write_atomic(opts.out / "compare.svg",
                 line_chart_svg({"residual of the discrete system", "iteration", "max residual", true}, {s_pi, s_nt}));

    log << "policy iteration: " << pi.report.rows.size() << " iterations; Newton: " << newton.rows.size()
        << " iterations; final L-inf gap u " << format_number(du) << ", m " << format_number(dm) << '\n';
    return static_cast<int>(newton.diverged ? exit_solver : exit_ok);
  });
}

int cmd_plot(const std::filesystem::path& report, const std::filesystem::path& out, std::ostream& log,
             std::ostream& err) {
  return guarded(err, [&] {
    CsvTable rep;
    try {
      rep = read_csv(report);
    } catch (const std::exception& e) {
      throw ConfigError(0, std::string("cannot read report: ") + e.what());
    }
    if (rep.rows.empty()) throw ConfigError(0, "report " + report.string() + " has no rows");
    std::vector<double> n;
    try {
      n = rep.numbers("n");
      rep.column("du_norm");
      rep.column("dm_norm");
      rep.column("dq_norm");
      rep.column("combined");
    } catch (const std::out_of_range& e) {
      throw ConfigError(0, "report " + report.string() + " lacks a required column (" + e.what() + ")");
    }
    if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
    write_atomic(out, report_chart(n, rep));
    log << "wrote " << out.string() << '\n';
    return static_cast<int>(exit_ok);
  });
}

}  // namespace mfg::io
