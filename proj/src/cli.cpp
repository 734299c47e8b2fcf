#include "aaexp/cli.hpp"

#include <cstdio>
#include <ostream>

#include "CLI11.hpp"
#include "aaexp/engine.hpp"
#include "aaexp/error.hpp"
#include "aaexp/harness.hpp"

namespace aaexp {

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void print_cells(const StudySummary& s, std::ostream& out) {
  out << "design,T,n_trials,n_failed,mse,bias,empirical_variance_scaled,coverage\n";
  for (const auto& c : s.cells) {
    out << to_string(c.design) << ',' << c.T << ',' << c.n_trials << ',' << c.n_failed << ','
        << (c.mse ? fixed6(*c.mse) : "NA") << ',' << (c.bias ? fixed6(*c.bias) : "NA") << ','
        << fixed6(c.empirical_variance_scaled) << ','
        << (c.coverage ? fixed6(*c.coverage) : "NA") << '\n';
  }
}

void write_score_log(const TrialResult& tr, std::ostream& out) {
  const History& h = tr.history;
  out << 't';
  for (std::size_t j = 0; j < h.dim(); ++j) out << ",x" << j + 1;
  out << ",arm,y";
  for (std::size_t a = 0; a < h.num_arms(); ++a) out << ",w" << a;
  out << ",ratio,rejected_proposals,psi,ipw_term_1,ipw_term_0,plugin_term,importance_weight\n";
  for (std::size_t i = 0; i < h.size(); ++i) {
    const Round& r = h[i];
    out << i + 1;
    for (double v : r.x) out << ',' << num(v);
    out << ',' << r.a << ',' << num(r.y);
    for (double w : r.propensities) out << ',' << num(w);
    out << ',' << num(r.ratio_used) << ',' << r.rejected_proposals;
    if (i < tr.scores.size()) {
      const ScoreRecord& s = tr.scores[i];
      out << ',' << num(s.psi) << ',' << num(s.ipw_term_1) << ',' << num(s.ipw_term_0) << ','
          << num(s.plugin_term) << ',' << num(s.importance_weight);
    } else {
      out << ",,,,,";
    }
    out << '\n';
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive experimental design simulator", "aaexp"};
  app.require_subcommand(1);

  std::string study_path, output_dir;
  std::size_t workers = 0;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run a Monte Carlo study and write its outputs");
  run->add_option("study", study_path, "Study file (JSON)")->required();
  run->add_option("--output-dir", output_dir, "Override the study's output directory");
  run->add_option("--workers", workers, "Worker threads (0: available parallelism)");
  run->add_flag("--quiet", quiet, "Suppress the summary table");

  std::string scenario_path;
  std::size_t budget = 1'000'000;
  std::uint64_t seed = 1;
  auto* bound = app.add_subcommand("bound", "Efficiency bounds of a scenario as JSON");
  bound->add_option("scenario", scenario_path, "Scenario file (JSON)")->required();
  bound->add_option("--budget", budget, "Monte Carlo draws")->capture_default_str();
  bound->add_option("--seed", seed, "Random seed")->capture_default_str();

  double variance = 0.0, delta = 0.0, alpha = 0.0, beta = 0.0;
  bool squared = false;
  auto* ss = app.add_subcommand("sample-size", "Sample size for a target effect");
  ss->add_option("--variance", variance, "Asymptotic variance V")->required();
  ss->add_option("--delta", delta, "Effect size")->required();
  ss->add_option("--alpha", alpha, "Two-sided level")->required();
  ss->add_option("--beta", beta, "Type II error")->required();
  ss->add_flag("--squared", squared, "Use the squared-quantile form");

  std::string design_name;
  std::size_t horizon = 2000, burn_in = 25;
  std::uint64_t trial_seed = 1;
  auto* trial = app.add_subcommand("trial", "Run one trial and print its score log as CSV");
  trial->add_option("scenario", scenario_path, "Scenario file (JSON)")->required();
  trial->add_option("--design", design_name, "Design kind")->required();
  trial->add_option("--T", horizon, "Horizon")->capture_default_str();
  trial->add_option("--seed", trial_seed, "Random seed")->capture_default_str();
  trial->add_option("--burn-in", burn_in, "Uniform rounds before adaptation")
      ->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*run) {
      StudySpec spec = load_study(study_path);
      if (!output_dir.empty()) spec.output_dir = output_dir;
      if (run->count("--workers")) spec.workers = workers;
      const StudySummary summary = run_study(spec);
      write_outputs(spec, summary, spec.output_dir);
      if (!quiet) print_cells(summary, out);
      if (!summary.failures.empty())
        err << summary.failures.size() << " trial(s) failed and were excluded; see summary.json\n";
    } else if (*bound) {
      const Scenario s = load_scenario(scenario_path);
      RandomStream rng(seed);
      const BoundReport b = bound_report(s, budget, rng);
      const nlohmann::json j = {{"tau", b.tau},
                                {"tau_tilde", b.tau_tilde},
                                {"tau_star", b.tau_star},
                                {"gain_propensity", b.gain_propensity},
                                {"gain_density", b.gain_density},
                                {"tau_se", b.tau_se},
                                {"tau_tilde_se", b.tau_tilde_se},
                                {"tau_star_se", b.tau_star_se},
                                {"gain_propensity_se", b.gain_propensity_se},
                                {"gain_density_se", b.gain_density_se},
                                {"normalizer", b.normalizer},
                                {"draws", b.draws}};
      out << j.dump(2) << '\n';
    } else if (*ss) {
      out << fixed6(sample_size(variance, delta, alpha, beta, squared)) << '\n';
    } else if (*trial) {
      const Scenario s = load_scenario(scenario_path);
      const DesignKind kind = parse_design_kind(design_name);
      EngineConfig cfg;
      cfg.T = horizon;
      cfg.burn_in = burn_in;
      const TrialResult tr = run_trial(s, kind, cfg, trial_seed);
      write_score_log(tr, out);
      err << "theta_hat " << num(tr.estimate.theta_hat) << " ci [" << num(tr.estimate.ci_lo)
          << ", " << num(tr.estimate.ci_hi) << "]\n";
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace aaexp
