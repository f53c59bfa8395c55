#include "qmetro/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "qmetro/csv.hpp"
#include "qmetro/metrology.hpp"
#include "qmetro/simulation.hpp"
#include "qmetro/weights.hpp"

namespace qmetro {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double ratio(double num, double den) { return den > 0.0 ? num / den : kNaN; }

struct Moments {
  double mean = 0.0;
  double std = 0.0;     // sample standard deviation
  double stderr_ = 0.0;
};

// Two-pass mean and spread over a column; exact zeros for constant data.
Moments moments(const std::vector<double>& xs) {
  Moments m;
  if (xs.empty()) return {kNaN, kNaN, kNaN};
  bool constant = true;
  for (double x : xs) constant = constant && x == xs[0];
  if (constant) return {xs[0], 0.0, 0.0};
  double s = 0.0, c = 0.0;
  for (double x : xs) {
    const double t = s + x;
    c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
    s = t;
  }
  const double n = static_cast<double>(xs.size());
  m.mean = (s + c) / n;
  if (xs.size() > 1) {
    double v = 0.0;
    for (double x : xs) v += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(v / (n - 1.0));
    m.stderr_ = m.std / std::sqrt(n);
  }
  return m;
}

std::ofstream open_csv(const fs::path& p) {
  fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
  std::ofstream f(p);
  if (!f) throw ExperimentError("cannot write " + p.string());
  return f;
}

std::string fmt_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

EnsembleSpec ensemble_spec(const ExperimentConfig& cfg, const std::vector<std::int64_t>& grid) {
  EnsembleSpec spec;
  spec.params = cfg.params;
  spec.init.fixed = cfg.init;
  spec.init.randomize = cfg.randomize_init;
  spec.n_traj = cfg.n_traj;
  spec.horizon_steps = cfg.total_steps();
  spec.steps = grid;
  spec.base_seed = cfg.seed;
  spec.jobs = cfg.jobs;
  return spec;
}

// Runs the ensemble and maps every snapshot through f into [traj][record].
// Any failed trajectory aborts the command with the full list.
template <class T, class F>
std::vector<std::vector<T>> gather(const ExperimentConfig& cfg, const Policy& policy,
                                   const std::vector<std::int64_t>& grid, F f) {
  const auto spec = ensemble_spec(cfg, grid);
  std::vector<std::vector<T>> out(cfg.n_traj, std::vector<T>(grid.size()));
  const auto summary = run_ensemble(spec, policy, [&](std::size_t k, std::size_t rec,
                                                      const Snapshot& s) { out[k][rec] = f(s); });
  if (!summary.failures.empty()) {
    std::string msg = std::to_string(summary.failures.size()) + " trajectories failed under '" +
                      policy.name() + "':";
    for (const auto& fl : summary.failures) {
      msg += "\n  trajectory " + std::to_string(fl.index) + " at step " +
             std::to_string(fl.step) + ": " + fl.message;
    }
    throw ExperimentError(msg);
  }
  return out;
}

std::vector<double> grid_times(const ExperimentConfig& cfg, const std::vector<std::int64_t>& g) {
  std::vector<double> t;
  for (auto s : g) t.push_back(static_cast<double>(s) * cfg.params.dt);
  return t;
}

std::vector<double> column(const std::vector<std::vector<double>>& v, std::size_t rec) {
  std::vector<double> c;
  c.reserve(v.size());
  for (const auto& row : v) c.push_back(row[rec]);
  return c;
}

// Record indices of the sample times (or the horizon when none are given).
std::vector<std::size_t> sample_indices(const ExperimentConfig& cfg,
                                        const std::vector<std::int64_t>& grid) {
  std::vector<std::int64_t> want;
  for (double t : cfg.sample_times) {
    want.push_back(std::min<std::int64_t>(std::llround(t / cfg.params.dt), cfg.total_steps()));
  }
  if (want.empty()) want.push_back(cfg.total_steps());
  std::vector<std::size_t> idx;
  for (auto w : want) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i] == w) {
        idx.push_back(i);
        break;
      }
    }
  }
  return idx;
}

FisherReport fisher_report(const ExperimentConfig& cfg, const Policy& policy,
                           const std::vector<std::int64_t>& grid) {
  const auto samples = gather<FisherSample>(cfg, policy, grid, fisher_sample);
  const auto times = grid_times(cfg, grid);
  return effective_qfi(times, samples);
}

void prepare(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);
}

}  // namespace

std::unique_ptr<Policy> make_policy(const std::string& strategy, const ExperimentConfig& cfg) {
  if (strategy == "none") return std::make_unique<NoControl>();
  if (strategy == "open_loop") return std::make_unique<OpenLoop>();
  if (strategy == "neural") {
    auto w = std::make_shared<const NeuralWeights>(load_weights(cfg.weights));
    NeuralOptions opt;
    opt.deterministic = cfg.deterministic;
    opt.action_bound = cfg.action_bound;
    return std::make_unique<NeuralPolicy>(std::move(w), opt);
  }
  throw ExperimentError("unknown strategy '" + strategy + "'");
}

Outputs cmd_simulate(const ExperimentConfig& cfg) {
  prepare(cfg);
  Outputs out;
  const auto grid = cfg.grid();
  InitSampler sampler;
  sampler.fixed = cfg.init;
  sampler.randomize = cfg.randomize_init;
  for (const auto& s : cfg.strategies) {
    const auto policy = make_policy(s, cfg);
    const auto run = run_trajectory(cfg.params, sampler.sample(cfg.seed, 0), cfg.seed,
                                    cfg.total_steps(), *policy, grid, 0);
    const fs::path p = cfg.output_dir / ("trace_" + s + ".csv");
    auto f = open_csv(p);
    write_trace_csv(f, run.series);
    out.push_back(p);
  }
  return out;
}

Outputs cmd_compare(const ExperimentConfig& cfg) {
  prepare(cfg);
  Outputs out;
  const auto grid = cfg.grid();
  std::vector<FisherReport> reports;
  for (const auto& s : cfg.strategies) {
    const auto policy = make_policy(s, cfg);
    reports.push_back(fisher_report(cfg, *policy, grid));
    const fs::path p = cfg.output_dir / ("compare_" + s + ".csv");
    auto f = open_csv(p);
    write_fisher_csv(f, reports.back());
    out.push_back(p);
  }
  const fs::path merged = cfg.output_dir / "compare.csv";
  auto f = open_csv(merged);
  csv::RowWriter w(f);
  w << "t";
  for (const auto& s : cfg.strategies) {
    w << ("fhom_over_t_" + s) << ("qbar_c_" + s) << ("qeff_over_t_" + s) << ("stderr_qeff_" + s);
  }
  w.end();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    w << reports[0].times[i];
    for (const auto& r : reports) w << r.fhom_over_t[i] << r.qbar_c[i] << r.qeff_over_t[i] << r.stderr_qeff[i];
    w.end();
  }
  out.push_back(merged);
  return out;
}

Outputs cmd_hist_perp(const ExperimentConfig& cfg) {
  prepare(cfg);
  Outputs out;
  const auto grid = cfg.grid();
  const auto picks = sample_indices(cfg, grid);
  const double xi0 = squeezing_db(riccati_steady_state(cfg.params, 0.0));
  const double xi_ol = squeezing_db(steady_state_covariance(cfg.params));
  const int n_bins = static_cast<int>(std::lround((kHistMaxDb - kHistMinDb) / kHistBinDb));
  for (const auto& s : cfg.strategies) {
    const auto policy = make_policy(s, cfg);
    const auto xi = gather<double>(cfg, *policy, grid, [](const Snapshot& snap) {
      return perpendicular_squeezing_db(snap.state).value_or(kNaN);
    });
    const fs::path p = cfg.output_dir / ("hist_perp_" + s + ".csv");
    auto f = open_csv(p);
    f << "# strategy = " << s << "\n"
      << "# xi_0_db = " << csv::num(xi0) << "\n"
      << "# xi_ol_db = " << csv::num(xi_ol) << "\n";
    csv::RowWriter w(f);
    w << "t" << "bin_lo" << "bin_hi" << "count" << "density" << "clipped" << "n_undefined"
      << "n_traj";
    w.end();
    for (std::size_t rec : picks) {
      std::vector<long> count(n_bins, 0), clipped(n_bins, 0);
      long undefined = 0, defined = 0;
      for (const auto& row : xi) {
        const double x = row[rec];
        if (std::isnan(x)) {
          ++undefined;
          continue;
        }
        ++defined;
        const double pos = std::floor((x - kHistMinDb) / kHistBinDb);
        int b = 0;
        if (pos < 0.0) {
          ++clipped[0];
        } else if (pos >= n_bins) {
          b = n_bins - 1;
          ++clipped[b];
        } else {
          b = static_cast<int>(pos);
        }
        ++count[b];
      }
      const double t = static_cast<double>(grid[rec]) * cfg.params.dt;
      for (int b = 0; b < n_bins; ++b) {
        const double lo = kHistMinDb + b * kHistBinDb;
        const double density =
            defined ? static_cast<double>(count[b]) / (static_cast<double>(defined) * kHistBinDb)
                    : 0.0;
        w << t << lo << lo + kHistBinDb << count[b] << density << clipped[b] << undefined
          << cfg.n_traj;
        w.end();
      }
    }
    out.push_back(p);
  }
  return out;
}

Outputs cmd_mean_abs_r(const ExperimentConfig& cfg) {
  prepare(cfg);
  const auto grid = cfg.grid();
  std::vector<std::vector<Moments>> stats;
  for (const auto& s : cfg.strategies) {
    const auto policy = make_policy(s, cfg);
    const auto r = gather<double>(cfg, *policy, grid, [](const Snapshot& snap) {
      return norm(snap.state.r);
    });
    std::vector<Moments> m;
    for (std::size_t i = 0; i < grid.size(); ++i) m.push_back(moments(column(r, i)));
    stats.push_back(std::move(m));
  }
  const fs::path p = cfg.output_dir / "mean_abs_r.csv";
  auto f = open_csv(p);
  csv::RowWriter w(f);
  w << "t";
  for (const auto& s : cfg.strategies) w << ("mean_abs_r_" + s) << ("stderr_" + s);
  w.end();
  const auto times = grid_times(cfg, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    w << times[i];
    for (const auto& m : stats) w << m[i].mean << m[i].stderr_;
    w.end();
  }
  return {p};
}

Outputs cmd_omega_fb(const ExperimentConfig& cfg) {
  prepare(cfg);
  Outputs out;
  const auto grid = cfg.grid();
  const auto times = grid_times(cfg, grid);
  const std::size_t n_traces = std::min(cfg.n_sample_traces, cfg.n_traj);
  for (const auto& s : cfg.strategies) {
    const auto policy = make_policy(s, cfg);
    const auto fb = gather<double>(cfg, *policy, grid, [](const Snapshot& snap) {
      return snap.omega_fb;
    });
    const fs::path p = cfg.output_dir / ("omega_fb_" + s + ".csv");
    auto f = open_csv(p);
    csv::RowWriter w(f);
    w << "t" << "mean" << "std";
    for (std::size_t k = 0; k < n_traces; ++k) w << ("trace_" + std::to_string(k));
    w.end();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto m = moments(column(fb, i));
      w << times[i] << m.mean << m.std;
      for (std::size_t k = 0; k < n_traces; ++k) w << fb[k][i];
      w.end();
    }
    out.push_back(p);
  }
  return out;
}

Outputs cmd_scatter(const ExperimentConfig& cfg) {
  prepare(cfg);
  Outputs out;
  const auto grid = cfg.grid();
  const auto picks = sample_indices(cfg, grid);
  struct Row {
    double perp, sq, abs_r, fhom, qfi;
  };
  for (const auto& s : cfg.strategies) {
    const auto policy = make_policy(s, cfg);
    const auto rows = gather<Row>(cfg, *policy, grid, [](const Snapshot& snap) {
      return Row{perpendicular_squeezing_db(snap.state).value_or(kNaN),
                 squeezing_db(snap.state.sigma), norm(snap.state.r), snap.fhom_integral,
                 gaussian_qfi(snap.state, snap.tangent)};
    });
    const fs::path p = cfg.output_dir / ("scatter_" + s + ".csv");
    auto f = open_csv(p);
    csv::RowWriter w(f);
    w << "t" << "traj" << "perp_squeezing_db" << "squeezing_db" << "abs_r" << "fhom_traj"
      << "log_fhom_traj" << "qfi";
    w.end();
    for (std::size_t rec : picks) {
      const double t = static_cast<double>(grid[rec]) * cfg.params.dt;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const Row& r = rows[k][rec];
        w << t << k << r.perp << r.sq << r.abs_r << r.fhom
          << (r.fhom > 0.0 ? std::log(r.fhom) : kNaN) << r.qfi;
        w.end();
      }
    }
    out.push_back(p);
  }
  return out;
}

Outputs cmd_final_homodyne(const ExperimentConfig& cfg) {
  prepare(cfg);
  Outputs out;
  const auto grid = cfg.grid();
  const auto times = grid_times(cfg, grid);
  struct Row {
    double fhom, qfi, fhd_opt, fhd_theta0, theta_opt;
  };
  for (const auto& s : cfg.strategies) {
    const auto policy = make_policy(s, cfg);
    const auto rows = gather<Row>(cfg, *policy, grid, [](const Snapshot& snap) {
      const auto best = optimize_final_homodyne(snap.state, snap.tangent);
      return Row{snap.fhom_integral, gaussian_qfi(snap.state, snap.tangent), best.fi,
                 final_homodyne_fi(snap.state, snap.tangent, {0.0, kHomodyneZ}), best.theta};
    });
    const fs::path p = cfg.output_dir / ("final_homodyne_" + s + ".csv");
    auto f = open_csv(p);
    csv::RowWriter w(f);
    w << "t" << "fhom" << "qbar_c" << "fhd_opt" << "fhd_theta0" << "ratio_opt" << "ratio_theta0"
      << "qeff" << "feff_opt" << "feff_theta0" << "ratio_eff_opt" << "ratio_eff_theta0"
      << "mean_theta_opt";
    w.end();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      std::vector<double> fh, q, fo, f0, th;
      for (const auto& r : rows) {
        fh.push_back(r[i].fhom);
        q.push_back(r[i].qfi);
        fo.push_back(r[i].fhd_opt);
        f0.push_back(r[i].fhd_theta0);
        th.push_back(r[i].theta_opt);
      }
      const double mf = moments(fh).mean, mq = moments(q).mean, mo = moments(fo).mean,
                   m0 = moments(f0).mean;
      w << times[i] << mf << mq << mo << m0 << ratio(mo, mq) << ratio(m0, mq) << mf + mq
        << mf + mo << mf + m0 << ratio(mf + mo, mf + mq) << ratio(mf + m0, mf + mq)
        << moments(th).mean;
      w.end();
    }
    out.push_back(p);
  }
  return out;
}

Outputs cmd_sweep(const ExperimentConfig& cfg) {
  prepare(cfg);
  Outputs out;
  const auto grid = cfg.grid();
  const fs::path summary = cfg.output_dir / ("sweep_" + cfg.sweep_param + ".csv");
  auto sf = open_csv(summary);
  csv::RowWriter sw(sf);
  sw << cfg.sweep_param << "strategy" << "t" << "fhom_over_t" << "qbar_c" << "qeff_over_t"
     << "stderr_qeff" << "n_traj";
  sw.end();
  for (double v : cfg.sweep_values) {
    ExperimentConfig c = cfg;
    (cfg.sweep_param == "chi" ? c.params.chi : c.params.eta) = v;
    c.validate();
    for (const auto& s : cfg.strategies) {
      const auto policy = make_policy(s, c);
      const auto rep = fisher_report(c, *policy, grid);
      const fs::path p =
          cfg.output_dir / ("sweep_" + cfg.sweep_param + "_" + fmt_value(v) + "_" + s + ".csv");
      auto f = open_csv(p);
      write_fisher_csv(f, rep);
      out.push_back(p);
      const std::size_t last = rep.times.size() - 1;
      sw << v << s << rep.times[last] << rep.fhom_over_t[last] << rep.qbar_c[last]
         << rep.qeff_over_t[last] << rep.stderr_qeff[last] << rep.n_traj;
      sw.end();
    }
  }
  out.push_back(summary);
  return out;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"simulate", "compare", "hist-perp",
                                                 "mean-abs-r", "omega-fb", "scatter",
                                                 "final-homodyne", "sweep"};
  return names;
}

Outputs run_command(const std::string& name, const ExperimentConfig& cfg) {
  static const std::map<std::string, Outputs (*)(const ExperimentConfig&)> table = {
      {"simulate", cmd_simulate},       {"compare", cmd_compare},
      {"hist-perp", cmd_hist_perp},     {"mean-abs-r", cmd_mean_abs_r},
      {"omega-fb", cmd_omega_fb},       {"scatter", cmd_scatter},
      {"final-homodyne", cmd_final_homodyne}, {"sweep", cmd_sweep}};
  const auto it = table.find(name);
  if (it == table.end()) throw ExperimentError("unknown command '" + name + "'");
  return it->second(cfg);
}

}  // namespace qmetro
