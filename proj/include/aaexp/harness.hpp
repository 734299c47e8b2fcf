#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aaexp/engine.hpp"
#include "aaexp/scenario.hpp"
#include "json.hpp"

namespace aaexp {

struct StudySpec {
  std::string scenario_ref;  // path as written in the study file, or "inline"
  std::shared_ptr<const Scenario> scenario;
  std::vector<DesignKind> designs;
  std::vector<std::size_t> horizons;  // strictly increasing
  std::size_t n_trials = 1;
  std::uint64_t base_seed = 1;
  double alpha = 0.05;
  std::filesystem::path output_dir = "aaexp_out";
  std::size_t workers = 0;  // 0: available parallelism
  EngineConfig engine;      // T and alpha are overwritten per run

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// `scenario` is either an inline scenario object or a path resolved against
// `base_dir`. Unknown keys are rejected.
StudySpec study_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
// Reads a study file; AAEXP_OUTPUT_DIR, when set, replaces output_dir.
StudySpec load_study(const std::filesystem::path& path);

struct TrialRow {
  DesignKind design = DesignKind::RCT;
  std::size_t T = 0;
  std::uint64_t seed = 0;
  double theta_hat = 0.0;
  double var_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::optional<bool> covered;  // absent when the true ATE is unknown
  std::size_t arm1_count = 0;
  std::uint64_t rejected_proposals = 0;

  bool operator==(const TrialRow&) const = default;
};

struct TrialFailure {
  DesignKind design = DesignKind::RCT;
  std::size_t T = 0;
  std::uint64_t seed = 0;
  std::string message;
};

// Metrics of one (design, T) cell over its successful trials. Moments use
// divisor n, so mse = bias^2 + variance of theta_hat exactly up to rounding.
struct CellSummary {
  DesignKind design = DesignKind::RCT;
  std::size_t T = 0;
  std::size_t n_trials = 0;
  std::size_t n_failed = 0;
  double mean_theta = 0.0;
  std::optional<double> bias;
  std::optional<double> mse;
  double empirical_variance_scaled = 0.0;  // variance of sqrt(T) theta_hat
  std::optional<double> coverage;
  double mean_ci_width = 0.0;
  double mean_variance_hat = 0.0;
};

struct StudySummary {
  std::optional<double> true_ate;
  std::vector<CellSummary> cells;
  std::vector<TrialRow> rows;  // ordered by design, seed, T
  std::vector<TrialFailure> failures;
};

// Cells for every (design, T) pair from rows in any order; the result does
// not depend on the order of `rows` or `failures`.
std::vector<CellSummary> aggregate(const std::vector<TrialRow>& rows,
                                   const std::vector<TrialFailure>& failures,
                                   const std::vector<DesignKind>& designs,
                                   const std::vector<std::size_t>& horizons,
                                   std::optional<double> true_ate);

// Called after each finished trial with (done, total).
using ProgressFn = std::function<void(std::size_t, std::size_t)>;

// Each trial runs once to the largest horizon with seed base_seed + index;
// shorter horizons are read off its prefix.
StudySummary run_study(const StudySpec& spec, const ProgressFn& progress = {});

struct Histogram {
  std::vector<double> edges;  // counts.size() + 1 entries
  std::vector<std::size_t> counts;
  std::vector<double> standardized;
  double skewness = 0.0;
  bool degenerate = false;  // all values equal: a single bin
};

// Bins sqrt(T)(theta_hat - theta0) / sqrt(tau_hat), tau_hat being the cell's
// empirical variance of sqrt(T) theta_hat. Uses the sample mean when the
// true ATE is absent. Throws Error with fewer than 30 rows in the cell.
Histogram empirical_distribution(const std::vector<TrialRow>& rows, DesignKind design,
                                 std::size_t T, std::optional<double> true_ate,
                                 std::size_t bins = 20);

void write_trials_csv(const std::vector<TrialRow>& rows, std::ostream& out);
// Inverse of write_trials_csv.
std::vector<TrialRow> read_trials_csv(std::istream& in);
nlohmann::json summary_to_json(const StudySpec& spec, const StudySummary& summary);
// Writes trials.csv, summary.json and distributions.json into `dir`.
void write_outputs(const StudySpec& spec, const StudySummary& summary,
                   const std::filesystem::path& dir);

}  // namespace aaexp
