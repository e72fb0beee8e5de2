#pragma once

#include <cstdint>
#include <vector>

#include "diffgame/field.hpp"
#include "diffgame/linalg.hpp"
#include "diffgame/noise.hpp"

namespace diffgame {

/// N_eps = floor(T / eps^2), robust to the rounding of eps^2 (a quotient
/// within 1e-9 relative of an integer counts as that integer).
std::size_t step_count(double eps, double T);

/// eps = 1 / sqrt(N) for the step-count parametrization.
double eps_from_steps(std::size_t N);

/// x + eps B(x, xi) + eps^2 b(x, xi). Throws numeric on non-finite output.
Vec step(VecIn x, VecIn xi, double eps, const FieldSpec& field);

/// Buffers for `step_in_place`.
struct StepWorkspace {
  explicit StepWorkspace(int dim) : B(dim), b(dim) {}
  Vec B;
  Vec b;
};

/// In-place variant of `step` for hot loops.
void step_in_place(VecOut x, VecIn xi, double eps, const FieldSpec& field, StepWorkspace& work);

enum class Extension { piecewise_constant, linear };

/// Discrete slow motion on the grid t_n = n eps^2, n = 0..N_eps.
struct DiscretePath {
  double eps = 0;
  double T = 0;
  std::vector<Vec> states;        // N_eps + 1 entries
  std::vector<Vec> noise_record;  // xi(0..N_eps-1)

  std::size_t steps() const { return noise_record.size(); }
  double time(std::size_t n) const { return static_cast<double>(n) * eps * eps; }

  /// Continuous-time extension on [0, T]. Piecewise-constant holds the
  /// left grid value; linear interpolates between neighbours. Past the last
  /// grid time both hold the final state. Throws out_of_range outside [0, T].
  Vec sample_at(double t, Extension mode = Extension::piecewise_constant) const;
};

/// Simulates N_eps = floor(T / eps^2) steps from x0 with noise stream
/// `stream` of `seed`.
DiscretePath simulate_path(VecIn x0, double eps, double T, const FieldSpec& field, const NoiseModel& noise,
                           std::uint64_t seed, std::uint64_t stream = 0);

/// Same recursion in the unscaled time of the Y-chain:
/// Y(n+1) = Y(n) + eps B(Y(n), xi(n)) + eps^2 b(Y(n), xi(n)), n < n_steps.
std::vector<Vec> simulate_unscaled(VecIn y0, double eps, std::size_t n_steps, const FieldSpec& field,
                                   const NoiseModel& noise, std::uint64_t seed, std::uint64_t stream = 0);

/// Terminal states X(T) of `n_paths` independent paths; path i uses stream
/// i of `seed`, so the result does not depend on `threads`. Returned as a
/// d x n_paths matrix.
Mat simulate_terminal(VecIn x0, double eps, double T, const FieldSpec& field, const NoiseModel& noise,
                      std::uint64_t seed, std::size_t n_paths, unsigned threads = 1);

/// Per-grid-time ensemble statistics.
struct EnsembleSummary {
  std::vector<double> times;
  std::vector<Vec> mean;
  std::vector<Vec> variance;
  std::vector<Mat> quantiles;  // d x quantile_levels.size()
  std::vector<double> quantile_levels;
};

/// Ensemble mean, variance and quantiles at every `every`-th grid time
/// (and always at the last one).
EnsembleSummary summarize_ensemble(VecIn x0, double eps, double T, const FieldSpec& field,
                                   const NoiseModel& noise, std::uint64_t seed, std::size_t n_paths,
                                   std::size_t every = 1, unsigned threads = 1);

}  // namespace diffgame
