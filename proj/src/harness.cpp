#include "aaexp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "aaexp/error.hpp"
#include "aaexp/stats.hpp"

namespace aaexp {

using nlohmann::json;

namespace {

constexpr const char* kCsvHeader =
    "design,T,seed,theta_hat,var_hat,ci_lo,ci_hi,covered,arm1_count,rejected_proposals";

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& prefix) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw ConfigError(prefix + key, "unknown key");
}

template <class T>
T get_field(const json& obj, const std::string& key, const std::string& field) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(field, e.what());
  }
}

EngineConfig engine_from_json(const json& e) {
  if (!e.is_object()) throw ConfigError("engine", "must be an object");
  reject_unknown_keys(e,
                      {"burn_in", "clamp", "plugin_budget", "normalizer_mode", "normalizer_budget",
                       "rejection_cap", "oracle_budget", "frozen_means"},
                      "engine.");
  EngineConfig cfg;
  if (e.contains("burn_in")) cfg.burn_in = get_field<std::size_t>(e, "burn_in", "engine.burn_in");
  if (e.contains("clamp")) {
    const json& c = e.at("clamp");
    cfg.clamp = Clamp{get_field<double>(c, "lo", "engine.clamp.lo"),
                      get_field<double>(c, "hi", "engine.clamp.hi")};
  }
  if (e.contains("plugin_budget"))
    cfg.plugin_budget = get_field<std::size_t>(e, "plugin_budget", "engine.plugin_budget");
  if (e.contains("normalizer_mode")) {
    const auto m = get_field<std::string>(e, "normalizer_mode", "engine.normalizer_mode");
    if (m == "fresh_mc") cfg.normalizer_mode = NormalizerMode::fresh_mc;
    else if (m == "running_average") cfg.normalizer_mode = NormalizerMode::running_average;
    else throw ConfigError("engine.normalizer_mode", "expected fresh_mc or running_average");
  }
  if (e.contains("normalizer_budget"))
    cfg.normalizer_budget =
        get_field<std::size_t>(e, "normalizer_budget", "engine.normalizer_budget");
  if (e.contains("rejection_cap"))
    cfg.rejection_cap = get_field<std::uint64_t>(e, "rejection_cap", "engine.rejection_cap");
  if (e.contains("oracle_budget"))
    cfg.oracle_budget = get_field<std::size_t>(e, "oracle_budget", "engine.oracle_budget");
  if (e.contains("frozen_means"))
    cfg.frozen_means = get_field<std::vector<double>>(e, "frozen_means", "engine.frozen_means");
  return cfg;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::size_t design_index(const std::vector<DesignKind>& designs, DesignKind k) {
  return static_cast<std::size_t>(std::find(designs.begin(), designs.end(), k) - designs.begin());
}

}  // namespace

void StudySpec::validate() const {
  if (designs.empty()) throw ConfigError("designs", "at least one design is required");
  for (std::size_t i = 0; i < designs.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (designs[i] == designs[j]) throw ConfigError("designs", "duplicate " + to_string(designs[i]));
  if (horizons.empty()) throw ConfigError("horizons", "at least one horizon is required");
  for (std::size_t i = 1; i < horizons.size(); ++i)
    if (horizons[i] <= horizons[i - 1]) throw ConfigError("horizons", "must be strictly increasing");
  if (n_trials < 1) throw ConfigError("n_trials", "must be at least 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha", "must lie in (0, 1)");
  EngineConfig cfg = engine;
  cfg.T = horizons.front();
  cfg.alpha = alpha;
  try {
    if (!scenario) throw ConfigError("scenario", "missing");
    cfg.validate(scenario->num_treatments);
  } catch (const ConfigError& e) {
    if (e.field() == "T") throw ConfigError("horizons", "every horizon must exceed burn_in");
    throw;
  }
}

StudySpec study_from_json(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("study", "must be a JSON object");
  reject_unknown_keys(doc,
                      {"scenario", "designs", "horizons", "n_trials", "base_seed", "alpha",
                       "output_dir", "workers", "engine"},
                      "");
  StudySpec spec;
  if (!doc.contains("scenario")) throw ConfigError("scenario", "missing");
  const json& sc = doc.at("scenario");
  if (sc.is_string()) {
    spec.scenario_ref = sc.get<std::string>();
    std::filesystem::path p = spec.scenario_ref;
    if (p.is_relative()) p = base_dir / p;
    spec.scenario = std::make_shared<const Scenario>(load_scenario(p));
  } else if (sc.is_object()) {
    spec.scenario_ref = "inline";
    spec.scenario = std::make_shared<const Scenario>(scenario_from_json(sc));
  } else {
    throw ConfigError("scenario", "expected a path or an object");
  }
  if (!doc.contains("designs")) throw ConfigError("designs", "missing");
  for (const auto& name : get_field<std::vector<std::string>>(doc, "designs", "designs"))
    spec.designs.push_back(parse_design_kind(name));
  if (!doc.contains("horizons")) throw ConfigError("horizons", "missing");
  spec.horizons = get_field<std::vector<std::size_t>>(doc, "horizons", "horizons");
  if (doc.contains("n_trials")) spec.n_trials = get_field<std::size_t>(doc, "n_trials", "n_trials");
  if (doc.contains("base_seed"))
    spec.base_seed = get_field<std::uint64_t>(doc, "base_seed", "base_seed");
  if (doc.contains("alpha")) spec.alpha = get_field<double>(doc, "alpha", "alpha");
  if (doc.contains("output_dir"))
    spec.output_dir = get_field<std::string>(doc, "output_dir", "output_dir");
  if (doc.contains("workers")) spec.workers = get_field<std::size_t>(doc, "workers", "workers");
  if (doc.contains("engine")) spec.engine = engine_from_json(doc.at("engine"));
  spec.validate();
  return spec;
}

StudySpec load_study(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open study file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("study", std::string("invalid JSON: ") + e.what());
  }
  StudySpec spec = study_from_json(doc, path.parent_path());
  if (const char* env = std::getenv("AAEXP_OUTPUT_DIR"); env && *env) spec.output_dir = env;
  return spec;
}

std::vector<CellSummary> aggregate(const std::vector<TrialRow>& rows,
                                   const std::vector<TrialFailure>& failures,
                                   const std::vector<DesignKind>& designs,
                                   const std::vector<std::size_t>& horizons,
                                   std::optional<double> true_ate) {
  std::vector<TrialRow> sorted = rows;
  std::sort(sorted.begin(), sorted.end(), [&](const TrialRow& a, const TrialRow& b) {
    const auto da = design_index(designs, a.design), db = design_index(designs, b.design);
    if (da != db) return da < db;
    if (a.T != b.T) return a.T < b.T;
    return a.seed < b.seed;
  });
  std::vector<CellSummary> cells;
  for (DesignKind d : designs) {
    for (std::size_t T : horizons) {
      CellSummary c;
      c.design = d;
      c.T = T;
      for (const auto& f : failures) c.n_failed += f.design == d && f.T == T;
      std::vector<const TrialRow*> in;
      for (const auto& r : sorted)
        if (r.design == d && r.T == T) in.push_back(&r);
      c.n_trials = in.size();
      if (!in.empty()) {
        const double n = static_cast<double>(in.size());
        double sum = 0.0, width = 0.0, vh = 0.0;
        for (const auto* r : in) {
          sum += r->theta_hat;
          width += r->ci_hi - r->ci_lo;
          vh += r->var_hat;
        }
        c.mean_theta = sum / n;
        c.mean_ci_width = width / n;
        c.mean_variance_hat = vh / n;
        double ss = 0.0;
        for (const auto* r : in) ss += (r->theta_hat - c.mean_theta) * (r->theta_hat - c.mean_theta);
        c.empirical_variance_scaled = static_cast<double>(T) * ss / n;
        if (true_ate) {
          double se = 0.0, covered = 0.0;
          for (const auto* r : in) {
            se += (r->theta_hat - *true_ate) * (r->theta_hat - *true_ate);
            covered += r->covered.value_or(false) ? 1.0 : 0.0;
          }
          c.bias = c.mean_theta - *true_ate;
          c.mse = se / n;
          c.coverage = covered / n;
        }
      }
      cells.push_back(c);
    }
  }
  return cells;
}

StudySummary run_study(const StudySpec& spec, const ProgressFn& progress) {
  spec.validate();
  EngineConfig cfg = spec.engine;
  cfg.T = spec.horizons.back();
  cfg.alpha = spec.alpha;

  std::optional<OracleDesign> oracle;
  for (DesignKind d : spec.designs)
    if (is_oracle(d) && !oracle)
      oracle = make_oracle_design(*spec.scenario, cfg.clamp.value_or(spec.scenario->clamp),
                                  cfg.oracle_budget);

  struct JobResult {
    std::vector<TrialRow> rows;
    std::vector<TrialFailure> failures;
  };
  const std::size_t total = spec.designs.size() * spec.n_trials;
  std::vector<JobResult> results(total);
  const std::optional<double> ate = spec.scenario->true_ate;

  auto run_job = [&](std::size_t job) {
    const DesignKind d = spec.designs[job / spec.n_trials];
    const std::uint64_t seed = spec.base_seed + job % spec.n_trials;
    JobResult& out = results[job];
    TrialResult tr;
    try {
      tr = run_trial(*spec.scenario, d, cfg, seed, oracle ? &*oracle : nullptr);
    } catch (const std::exception& e) {
      for (std::size_t T : spec.horizons) out.failures.push_back({d, T, seed, e.what()});
      return;
    }
    for (std::size_t T : spec.horizons) {
      try {
        const EstimateReport est = estimate_at(tr, T, spec.alpha);
        TrialRow r;
        r.design = d;
        r.T = T;
        r.seed = seed;
        r.theta_hat = est.theta_hat;
        r.var_hat = est.variance_hat;
        r.ci_lo = est.ci_lo;
        r.ci_hi = est.ci_hi;
        if (ate) r.covered = est.covers(*ate);
        r.arm1_count = tr.history.arm_count(1, T);
        for (std::size_t i = 0; i < T; ++i) r.rejected_proposals += tr.history[i].rejected_proposals;
        out.rows.push_back(r);
      } catch (const std::exception& e) {
        out.failures.push_back({d, T, seed, e.what()});
      }
    }
  };

  std::size_t workers = spec.workers ? spec.workers : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, total);
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  std::size_t done = 0;
  auto worker = [&] {
    for (std::size_t job; (job = next.fetch_add(1)) < total;) {
      run_job(job);
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(++done, total);
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
  }

  StudySummary summary;
  summary.true_ate = ate;
  for (auto& r : results) {
    summary.rows.insert(summary.rows.end(), r.rows.begin(), r.rows.end());
    summary.failures.insert(summary.failures.end(), r.failures.begin(), r.failures.end());
  }
  summary.cells = aggregate(summary.rows, summary.failures, spec.designs, spec.horizons, ate);
  return summary;
}

Histogram empirical_distribution(const std::vector<TrialRow>& rows, DesignKind design,
                                 std::size_t T, std::optional<double> true_ate, std::size_t bins) {
  if (bins < 1) throw Error("empirical_distribution: at least one bin is required");
  std::vector<double> theta;
  for (const auto& r : rows)
    if (r.design == design && r.T == T) theta.push_back(r.theta_hat);
  if (theta.size() < 30)
    throw Error("empirical_distribution: " + std::to_string(theta.size()) +
                " trials in the cell, at least 30 are required");
  std::sort(theta.begin(), theta.end());
  Histogram h;
  if (theta.front() == theta.back()) {
    h.degenerate = true;
    h.edges = {theta.front(), theta.front()};
    h.counts = {theta.size()};
    return h;
  }
  const double n = static_cast<double>(theta.size());
  const double m = mean(theta);
  double ss = 0.0;
  for (double v : theta) ss += (v - m) * (v - m);
  const double tau_hat = static_cast<double>(T) * ss / n;
  const double center = true_ate.value_or(m);
  const double scale = std::sqrt(static_cast<double>(T) / tau_hat);
  for (double v : theta) h.standardized.push_back((v - center) * scale);
  h.skewness = skewness(h.standardized);
  const double lo = h.standardized.front(), hi = h.standardized.back();
  const double width = (hi - lo) / static_cast<double>(bins);
  h.counts.assign(bins, 0);
  for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(lo + width * static_cast<double>(i));
  h.edges.back() = hi;
  for (double z : h.standardized) {
    auto b = static_cast<std::size_t>((z - lo) / width);
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

void write_trials_csv(const std::vector<TrialRow>& rows, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << to_string(r.design) << ',' << r.T << ',' << r.seed << ',' << format_double(r.theta_hat)
        << ',' << format_double(r.var_hat) << ',' << format_double(r.ci_lo) << ','
        << format_double(r.ci_hi) << ',' << (r.covered ? (*r.covered ? "1" : "0") : "") << ','
        << r.arm1_count << ',' << r.rejected_proposals << '\n';
  }
}

std::vector<TrialRow> read_trials_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw Error("trials CSV: unexpected header");
  std::vector<TrialRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 10) throw Error("trials CSV: expected 10 fields in '" + line + "'");
    TrialRow r;
    try {
      r.design = parse_design_kind(f[0]);
      r.T = std::stoull(f[1]);
      r.seed = std::stoull(f[2]);
      r.theta_hat = std::stod(f[3]);
      r.var_hat = std::stod(f[4]);
      r.ci_lo = std::stod(f[5]);
      r.ci_hi = std::stod(f[6]);
      if (!f[7].empty()) r.covered = f[7] == "1";
      r.arm1_count = std::stoull(f[8]);
      r.rejected_proposals = std::stoull(f[9]);
    } catch (const std::logic_error&) {
      throw Error("trials CSV: malformed row '" + line + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

json summary_to_json(const StudySpec& spec, const StudySummary& summary) {
  json doc;
  doc["scenario"] = spec.scenario_ref;
  doc["true_ate"] = optional_number(summary.true_ate);
  doc["true_ate_known"] = summary.true_ate.has_value();
  std::vector<std::string> designs;
  for (DesignKind d : spec.designs) designs.push_back(to_string(d));
  doc["designs"] = designs;
  doc["horizons"] = spec.horizons;
  doc["n_trials"] = spec.n_trials;
  doc["base_seed"] = spec.base_seed;
  doc["alpha"] = spec.alpha;
  json cells = json::array();
  for (const auto& c : summary.cells) {
    cells.push_back({{"design", to_string(c.design)},
                     {"T", c.T},
                     {"n_trials", c.n_trials},
                     {"n_failed", c.n_failed},
                     {"mean_theta", c.mean_theta},
                     {"bias", optional_number(c.bias)},
                     {"mse", optional_number(c.mse)},
                     {"empirical_variance_scaled", c.empirical_variance_scaled},
                     {"coverage", optional_number(c.coverage)},
                     {"mean_ci_width", c.mean_ci_width},
                     {"mean_variance_hat", c.mean_variance_hat}});
  }
  doc["cells"] = cells;
  doc["excluded_trials"] = summary.failures.size();
  json failures = json::array();
  for (const auto& f : summary.failures)
    failures.push_back(
        {{"design", to_string(f.design)}, {"T", f.T}, {"seed", f.seed}, {"message", f.message}});
  doc["failures"] = failures;
  return doc;
}

void write_outputs(const StudySpec& spec, const StudySummary& summary,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "trials.csv");
    write_trials_csv(summary.rows, out);
    if (!out) throw Error("cannot write " + (dir / "trials.csv").string());
  }
  {
    std::ofstream out(dir / "summary.json");
    out << summary_to_json(spec, summary).dump(2) << '\n';
    if (!out) throw Error("cannot write " + (dir / "summary.json").string());
  }
  json dists = json::array();
  for (const auto& c : summary.cells) {
    json entry = {{"design", to_string(c.design)}, {"T", c.T}};
    try {
      const Histogram h = empirical_distribution(summary.rows, c.design, c.T, summary.true_ate);
      entry["edges"] = h.edges;
      entry["counts"] = h.counts;
      entry["skewness"] = h.skewness;
      entry["degenerate"] = h.degenerate;
    } catch (const Error& e) {
      entry["skipped"] = e.what();
    }
    dists.push_back(entry);
  }
  std::ofstream out(dir / "distributions.json");
  out << dists.dump(2) << '\n';
  if (!out) throw Error("cannot write " + (dir / "distributions.json").string());
}

}  // namespace aaexp
