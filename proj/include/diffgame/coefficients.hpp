#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <shared_mutex>
#include <vector>

#include "diffgame/field.hpp"
#include "diffgame/linalg.hpp"
#include "diffgame/noise.hpp"

namespace diffgame {

enum class EstimatorMode { analytic, empirical };

struct CoefficientOptions {
  /// Truncation lag of the correlation series; 0 selects
  /// `default_truncation_lag` for the noise's mixing profile.
  std::size_t n_max = 0;
  /// Length of the stationary run in empirical mode.
  std::size_t n_samples = 200000;
  EstimatorMode mode = EstimatorMode::analytic;
  std::uint64_t seed = 0;
};

struct VectorEstimate {
  Vec value;
  Vec std_error;  // zero in analytic mode
  double truncation_bound = 0;
};

struct MatrixEstimate {
  Mat value;  // symmetrized
  Mat std_error;
  double truncation_bound = 0;
  /// Empirical mode only: the one-sided lag sum before symmetrization,
  /// E B B^T(0) + sum_r E B(r) B(0)^T counted twice.
  Mat unsymmetrized;
  Mat unsymmetrized_std_error;
};

/// Truncation bound 2 L^2 sum_{r > n_max} phi(r).
double truncation_bound(const MixingProfile& profile, double L, std::size_t n_max);

/// Smallest n >= 1 whose truncation bound is below `target`.
std::size_t default_truncation_lag(const MixingProfile& profile, double L, double target = 1e-8);

/// b_bar(x) = E b(x, xi(0)).
VectorEstimate drift_mean(const FieldSpec& field, const NoiseModel& noise, VecIn x,
                          const CoefficientOptions& options = {});

/// c(x) ~ sum_{r=1..n_max} E grad_x B(x, xi(r)) B(x, xi(0)).
VectorEstimate drift_correction(const FieldSpec& field, const NoiseModel& noise, VecIn x,
                                const CoefficientOptions& options = {});

/// A(x) ~ E B B^T + sum_{r=1..n_max} (E B(x, xi(r)) B(x, xi(0))^T + transpose).
MatrixEstimate diffusion_matrix(const FieldSpec& field, const NoiseModel& noise, VecIn x,
                                const CoefficientOptions& options = {});

/// Unique symmetric PSD square root. Eigenvalues in [-1e-10, 0) are
/// clamped to zero; anything more negative throws not_psd, asymmetry
/// beyond 1e-10 throws invalid_input.
Mat symmetric_sqrt(MatIn A);

/// Coefficients of the limiting diffusion at one point.
struct CoefficientPoint {
  Vec b_bar;
  Vec c;
  Mat A;
  Mat sigma;
  Vec b_bar_std_error;
  Vec c_std_error;
  Mat A_std_error;
  double truncation_bound = 0;

  Vec drift() const { return b_bar + c; }
};

/// Lazily evaluated coefficient maps of the limiting SDE
///   dXi = sigma(Xi) dW + (b_bar(Xi) + c(Xi)) dt.
///
/// For sigma-times-xi fields the noise's long-run moments are computed
/// once and every point costs O(d^3); other fields go through the
/// per-point estimators above. `at` caches results and is safe to call
/// concurrently.
class LimitCoefficients {
 public:
  LimitCoefficients(FieldSpec field, NoiseModel noise, CoefficientOptions options = {});

  int dim() const { return field_.dim; }
  std::size_t n_max() const { return n_max_; }
  EstimatorMode mode() const { return options_.mode; }
  const FieldSpec& field() const { return field_; }
  const NoiseModel& noise() const { return noise_; }
  bool separable() const { return separable_; }
  /// sigma and drift of the limit do not depend on x.
  bool constant() const { return field_.constant_coefficients; }

  /// Uncached evaluation including standard errors.
  CoefficientPoint evaluate(VecIn x) const;
  /// Cached evaluation.
  const CoefficientPoint& at(VecIn x) const;

  /// Allocation-free hot-path accessors used by the reference integrator.
  void sigma_into(VecIn x, MatOut out) const;
  void drift_into(VecIn x, VecOut out) const;

  /// Long-run noise moments of the separable form: E xi xi^T and
  /// sum_{r=1..n_max} E xi(r) xi(0)^T.
  const Mat& noise_lag0() const { return lag0_; }
  const Mat& noise_lag_sum() const { return lag_sum_; }

 private:
  void compute_moments();
  Vec correction_from(VecIn x, const Mat& sigma, const Mat& lag_sum) const;

  FieldSpec field_;
  NoiseModel noise_;
  CoefficientOptions options_;
  std::size_t n_max_ = 1;
  double truncation_ = 0;
  bool separable_ = false;
  Mat lag0_;
  Mat lag_sum_;
  Mat long_run_;
  // Per-batch moments for empirical standard errors.
  std::vector<Mat> batch_lag0_;
  std::vector<Mat> batch_lag_sum_;

  mutable std::shared_mutex cache_mutex_;
  mutable std::map<std::vector<double>, std::unique_ptr<CoefficientPoint>> cache_;
};

/// Invariant checks of a LimitCoefficients object at probe points.
struct CoefficientAudit {
  double max_asymmetry = 0;
  double min_eigenvalue = 0;
  double max_sqrt_residual = 0;  // ||sigma sigma - A||_F
  FieldAudit field;
  bool ok = true;
};

struct BuiltCoefficients {
  std::shared_ptr<const LimitCoefficients> coefficients;
  CoefficientAudit audit;
};

/// Bundles b_bar, c, A and sigma as callable maps and audits them at
/// `probe_points`. Throws invalid_input on an empty probe list.
BuiltCoefficients build_limit_coefficients(const FieldSpec& field, const NoiseModel& noise,
                                           const std::vector<Vec>& probe_points,
                                           const CoefficientOptions& options = {});

}  // namespace diffgame
