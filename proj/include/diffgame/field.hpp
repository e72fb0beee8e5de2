#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "diffgame/linalg.hpp"
#include "diffgame/noise.hpp"

namespace diffgame {

/// (x, xi) -> R^d, written into `out`.
using VectorField = std::function<void(VecIn x, VecIn xi, VecOut out)>;
/// (x, xi) -> d x d Jacobian dB_i/dx_j.
using JacobianField = std::function<void(VecIn x, VecIn xi, MatOut out)>;
/// x -> d x d matrix.
using MatrixMap = std::function<void(VecIn x, MatOut out)>;
/// (x, j) -> d sigma / d x_j.
using MatrixPartial = std::function<void(VecIn x, int j, MatOut out)>;
/// x -> R^d.
using VectorMap = std::function<void(VecIn x, VecOut out)>;

/// Coefficients of the slow motion x -> x + eps B(x, xi) + eps^2 b(x, xi).
///
/// `bound_L` is the uniform bound on |B|, |grad B|, |grad^2 B|, |b| and
/// |grad b| (Euclidean / Frobenius norms), at least 1. When `sigma` is set
/// the field has the special form B(x, xi) = sigma(x) xi; `sigma_partial`
/// then optionally supplies d sigma / d x_j analytically.
struct FieldSpec {
  int dim = 1;
  VectorField B;
  VectorField b;
  JacobianField grad_B;
  double bound_L = 1.0;

  MatrixMap sigma;
  MatrixPartial sigma_partial;
  /// Set when b does not depend on xi; b(x, xi) == drift(x).
  VectorMap drift;
  /// sigma and b independent of x.
  bool constant_coefficients = false;

  Vec eval_B(VecIn x, VecIn xi) const;
  Vec eval_b(VecIn x, VecIn xi) const;
  /// Analytic Jacobian when supplied, else central differences with step
  /// h = 1e-5 (1 + |x|).
  Mat jacobian_B(VecIn x, VecIn xi) const;
  Mat eval_sigma(VecIn x) const;
  /// d sigma / d x_j, analytic when supplied, else central differences.
  Mat sigma_derivative(VecIn x, int j) const;
};

/// Central finite-difference Jacobian of B in x.
Mat finite_difference_jacobian(const VectorField& B, int dim, VecIn x, VecIn xi);

/// B(x, xi) = sigma xi, b(x, xi) = drift, with constant sigma and drift.
/// `xi_norm` is sup |xi| for the noise this field will be paired with.
FieldSpec constant_diffusion_field(const Mat& sigma, const Vec& drift, double xi_norm);

/// Bounded drift families for sigma-times-xi fields.
struct DriftSpec {
  enum class Kind { constant, tanh, sine };
  Kind kind = Kind::constant;
  Vec value;            // constant offset (all kinds)
  double strength = 0;  // tanh: b = value - strength * tanh(x); sine: value + strength * sin(x)
};

/// B(x, xi) = diag(base + amp sin x_i) xi, drift per `drift`.
FieldSpec sine_diffusion_field(int dim, double base, double amp, const DriftSpec& drift, double xi_norm);

/// Result of the statistical audit of a field against a noise model.
struct FieldAudit {
  double max_B = 0;
  double max_grad_B = 0;
  double max_b = 0;
  bool within_bound = true;
  /// Largest |E B(x, xi)| component over probes and its standard error
  /// (zero standard error when computed exactly over atoms).
  double max_mean_B = 0;
  double mean_B_std_error = 0;
  bool centered = true;
  /// Worst relative mismatch of the analytic grad_B against central
  /// differences; zero when grad_B is not supplied.
  double max_gradient_mismatch = 0;
};

FieldAudit audit_field(const FieldSpec& field, const NoiseModel& noise, const std::vector<Vec>& probes,
                       std::uint64_t seed, std::size_t n_samples = 20000);

}  // namespace diffgame
