#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "diffgame/coefficients.hpp"
#include "diffgame/linalg.hpp"

namespace diffgame {

/// dXi = sigma(Xi) dW + drift(Xi) dt on [0, T], Xi(0) = x0.
struct DiffusionSpec {
  int dim = 1;
  std::function<void(VecIn x, MatOut out)> sigma;
  std::function<void(VecIn x, VecOut out)> drift;
  Vec x0;
  double T = 1.0;
  /// sigma and drift independent of x; Euler-Maruyama is then exact in law.
  bool constant = false;
};

/// Constant-coefficient diffusion.
DiffusionSpec constant_diffusion(const Mat& sigma, const Vec& drift, VecIn x0, double T);

/// Limiting diffusion with drift b_bar + c and diffusion sigma from `coefficients`.
DiffusionSpec limit_diffusion(std::shared_ptr<const LimitCoefficients> coefficients, VecIn x0, double T);

/// Grid path with linear interpolation between grid times.
struct ContinuousPath {
  std::vector<double> times;
  std::vector<Vec> states;

  /// Throws out_of_range outside [times.front(), times.back()].
  Vec at(double t) const;
};

/// Number of Euler-Maruyama steps for `dt`; the last step is shortened so
/// the grid ends exactly at T.
std::size_t em_step_count(double T, double dt);

/// X_{k+1} = X_k + sigma(X_k) sqrt(h) Z_k + drift(X_k) h with standard
/// normal Z_k (Box-Muller). Throws numeric with the step index on overflow.
ContinuousPath euler_maruyama(const DiffusionSpec& spec, double dt, std::uint64_t seed, std::uint64_t stream = 0);

/// Terminal values Xi(T) of `n_paths` independent Euler-Maruyama paths,
/// path i on stream i; d x n_paths. With constant coefficients a single
/// step of length T is taken, which is exact in law.
Mat euler_maruyama_terminal(const DiffusionSpec& spec, double dt, std::uint64_t seed, std::size_t n_paths,
                            unsigned threads = 1);

/// Default reference step against step scale eps: eps^2 min(1, eps).
double reference_dt(double eps);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_distance(std::span<const double> a, std::span<const double> b);

/// One-sample statistic against Normal(mean, sd^2); sd > 0.
double ks_normal(std::span<const double> samples, double mean, double sd);

/// KS statistics of d-dimensional ensembles (columns are samples): one per
/// coordinate, plus one for the Euclidean norm.
struct KsReport {
  std::vector<double> per_coordinate;
  double norm = 0;
};

KsReport ks_ensembles(const Mat& a, const Mat& b);

double normal_cdf(double z);

}  // namespace diffgame
