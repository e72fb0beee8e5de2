#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffgame/config.hpp"

namespace diffgame {

inline constexpr const char* kVersion = "0.1.0";

struct ConvergenceRow {
  double eps = 0;
  std::size_t steps = 0;
  std::optional<double> value;  // empty when the engine failed
  double difference = 0;        // |value - reference|, NaN without a value
  std::string engine;
  std::string error;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  double reference = 0;
  std::string reference_label;  // "finest eps=..." or "crr N=..."
  /// Least-squares slope of log|V - ref| against log eps; empty when fewer
  /// than two nonzero differences exist.
  std::optional<double> rate;
  bool exact = false;  // every difference is zero
  /// |V_k - V_{k+1}| over consecutive successful rows.
  std::vector<double> successive;
};

/// Values the configured game along the eps schedule (at least 3 points).
/// Failures are recorded per row; other rows are unaffected.
ConvergenceTable convergence_study(const ExperimentConfig& config, unsigned threads = 1);

/// Least-squares slope of log y against log x over the pairs with y > 0.
std::optional<double> loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct LawRow {
  double eps = 0;
  std::size_t steps = 0;
  std::vector<double> ks;        // per coordinate, scheme vs limit diffusion
  double ks_norm = 0;            // |x| marginal
  std::vector<double> ks_exact;  // scheme vs exact Normal law (constant coefficients only)
  std::string error;
};

/// Matched ensembles of the scheme at time T and of the limit diffusion
/// (Euler-Maruyama), compared by Kolmogorov-Smirnov per eps.
std::vector<LawRow> law_comparison(const ExperimentConfig& config, unsigned threads = 1);

struct TheoreticalBounds {
  double delta = 0;
  double log10_eps0 = 0;
  std::string note;
};

/// Exponent delta = 1/(500 d) and log10 of the threshold
/// eps0 = (2 10^{640 d} d^{80 d})^{-5/2} of the global error estimate.
TheoreticalBounds theoretical_bounds(int d, int M);

/// Reproducibility record: config hash, seed, versions, RNG description.
nlohmann::json run_manifest(const ExperimentConfig& config, const std::string& command, std::uint64_t seed);

}  // namespace diffgame
