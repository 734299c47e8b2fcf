#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aaexp/design.hpp"
#include "aaexp/estimators.hpp"
#include "aaexp/history.hpp"
#include "aaexp/scenario.hpp"

namespace aaexp {

enum class DesignKind {
  DRCT,
  RCT,
  AS_AIPW,
  AAS_AIPWIW,
  AS_AIPW_ORACLE,
  AAS_AIPWIW_ORACLE,
  AAS_AIPWIW_REJECTION,
};

std::string to_string(DesignKind kind);
// Throws ConfigError("design", ...) for an unknown name.
DesignKind parse_design_kind(const std::string& name);
const std::vector<DesignKind>& all_design_kinds();
bool is_oracle(DesignKind kind);
// Kinds that report difference-in-means rather than a score average.
bool uses_difference_in_means(DesignKind kind);

struct EngineConfig {
  std::size_t T = 2000;
  // Uniform-design rounds before the adaptive kinds switch to estimated
  // probabilities; the first K of them assign arms 1, 0, 2, ... in turn.
  std::size_t burn_in = 25;
  std::optional<Clamp> clamp;
  std::size_t plugin_budget = 1024;
  NormalizerMode normalizer_mode = NormalizerMode::fresh_mc;
  std::size_t normalizer_budget = 1024;
  std::uint64_t rejection_cap = 1'000'000;
  double alpha = 0.05;
  std::size_t oracle_budget = 1'000'000;
  // Per-arm constants replacing the fitted conditional means in the score.
  std::optional<std::vector<double>> frozen_means;

  // Throws ConfigError naming the field.
  void validate(std::size_t num_arms) const;
};

struct OracleDesign {
  std::shared_ptr<const TrueStddev> sigma;  // true sigma clamped to the clamp
  McEstimate normalizer;                    // E_q[sum_a sigma(a)]
  double ratio_bound = 1.0;
};

// Oracle w*, p* for a scenario; the normalizer uses `budget` draws from a
// fixed stream. The scenario must outlive the result.
OracleDesign make_oracle_design(const Scenario& scenario, Clamp clamp, std::size_t budget);

struct TrialResult {
  DesignKind kind = DesignKind::RCT;
  std::uint64_t seed = 0;
  History history;
  std::vector<ScoreRecord> scores;  // empty for difference-in-means kinds
  EstimateReport estimate;
  std::uint64_t rejected_proposals = 0;
};

// One experiment of cfg.T rounds. Covariates, treatment draws, outcomes and
// the per-round Monte Carlo draws use independent streams derived from
// `seed`, so a run of length T is a prefix of any longer run. `oracle` is
// computed when absent.
TrialResult run_trial(const Scenario& scenario, DesignKind kind, const EngineConfig& cfg,
                      std::uint64_t seed, const OracleDesign* oracle = nullptr);

// The estimate a run stopped after `T` rounds would report.
EstimateReport estimate_at(const TrialResult& trial, std::size_t T, double alpha);

// Binary assignment: treatment 1 iff xi <= w1.
std::size_t assign_treatment(double w1, double xi);
// K-arm generalisation: arms are visited in the order 1, 0, 2, 3, ... and
// the first whose cumulative propensity reaches xi is chosen.
std::size_t assign_from_propensities(std::span<const double> w, double xi);

struct ReplayedRound {
  std::vector<double> propensities;
  double ratio = 1.0;
};

// Recomputes every round's propensities and density ratio from the recorded
// history prefix and the trial's Monte Carlo streams alone.
std::vector<ReplayedRound> replay_designs(const Scenario& scenario, DesignKind kind,
                                          const EngineConfig& cfg, std::uint64_t seed,
                                          const History& history,
                                          const OracleDesign* oracle = nullptr);

}  // namespace aaexp
