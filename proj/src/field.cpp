#include "diffgame/field.hpp"

#include <algorithm>
#include <cmath>

#include "diffgame/error.hpp"

namespace diffgame {

Vec FieldSpec::eval_B(VecIn x, VecIn xi) const {
  Vec out(dim);
  B(x, xi, out);
  return out;
}

Vec FieldSpec::eval_b(VecIn x, VecIn xi) const {
  Vec out(dim);
  b(x, xi, out);
  return out;
}

Mat finite_difference_jacobian(const VectorField& B, int dim, VecIn x, VecIn xi) {
  const double h = 1e-5 * (1.0 + x.norm());
  Mat jac(dim, dim);
  Vec probe = x;
  Vec plus(dim);
  Vec minus(dim);
  for (int j = 0; j < dim; ++j) {
    probe[j] = x[j] + h;
    B(probe, xi, plus);
    probe[j] = x[j] - h;
    B(probe, xi, minus);
    probe[j] = x[j];
    jac.col(j) = (plus - minus) / (2.0 * h);
  }
  return jac;
}

Mat FieldSpec::jacobian_B(VecIn x, VecIn xi) const {
  if (grad_B) {
    Mat out(dim, dim);
    grad_B(x, xi, out);
    return out;
  }
  return finite_difference_jacobian(B, dim, x, xi);
}

Mat FieldSpec::eval_sigma(VecIn x) const {
  if (!sigma) throw Error(ErrorCode::unsupported_mode, "field has no sigma-times-xi form");
  Mat out(dim, dim);
  sigma(x, out);
  return out;
}

Mat FieldSpec::sigma_derivative(VecIn x, int j) const {
  if (sigma_partial) {
    Mat out(dim, dim);
    sigma_partial(x, j, out);
    return out;
  }
  const double h = 1e-5 * (1.0 + x.norm());
  Vec probe = x;
  probe[j] = x[j] + h;
  Mat plus = eval_sigma(probe);
  probe[j] = x[j] - h;
  Mat minus = eval_sigma(probe);
  return (plus - minus) / (2.0 * h);
}

namespace {

void check_dims(const Mat& sigma, const Vec& drift) {
  if (sigma.rows() < 1 || sigma.rows() != sigma.cols() || drift.size() != sigma.rows()) {
    throw Error(ErrorCode::invalid_dimension, "sigma must be square and match the drift dimension");
  }
}

VectorMap drift_map(const DriftSpec& drift, int dim) {
  Vec offset = drift.value.size() == 0 ? Vec::Zero(dim) : drift.value;
  if (offset.size() != dim) throw Error(ErrorCode::invalid_dimension, "drift offset dimension mismatch");
  const double k = drift.strength;
  switch (drift.kind) {
    case DriftSpec::Kind::constant:
      return [offset](VecIn, VecOut out) { out = offset; };
    case DriftSpec::Kind::tanh:
      return [offset, k](VecIn x, VecOut out) { out = offset - k * x.array().tanh().matrix(); };
    case DriftSpec::Kind::sine:
      return [offset, k](VecIn x, VecOut out) { out = offset + k * x.array().sin().matrix(); };
  }
  return {};
}

double drift_bound(const DriftSpec& drift, int dim) {
  const double offset = drift.value.size() == 0 ? 0.0 : drift.value.norm();
  const double root_d = std::sqrt(static_cast<double>(dim));
  if (drift.kind == DriftSpec::Kind::constant) return offset;
  return std::max(offset + std::abs(drift.strength) * root_d, std::abs(drift.strength) * root_d);
}

}  // namespace

FieldSpec constant_diffusion_field(const Mat& sigma, const Vec& drift, double xi_norm) {
  check_dims(sigma, drift);
  FieldSpec field;
  field.dim = static_cast<int>(sigma.rows());
  field.B = [sigma](VecIn, VecIn xi, VecOut out) { out.noalias() = sigma * xi; };
  field.b = [drift](VecIn, VecIn, VecOut out) { out = drift; };
  field.grad_B = [](VecIn, VecIn, MatOut out) { out.setZero(); };
  field.sigma = [sigma](VecIn, MatOut out) { out = sigma; };
  field.sigma_partial = [](VecIn, int, MatOut out) { out.setZero(); };
  field.drift = [drift](VecIn, VecOut out) { out = drift; };
  field.constant_coefficients = true;
  field.bound_L = std::max({1.0, sigma.norm() * xi_norm, drift.norm()});
  return field;
}

FieldSpec sine_diffusion_field(int dim, double base, double amp, const DriftSpec& drift, double xi_norm) {
  if (dim < 1) throw Error(ErrorCode::invalid_dimension, "field dimension must be >= 1");
  FieldSpec field;
  field.dim = dim;
  field.B = [base, amp](VecIn x, VecIn xi, VecOut out) {
    out = ((base + amp * x.array().sin()) * xi.array()).matrix();
  };
  field.grad_B = [amp](VecIn x, VecIn xi, MatOut out) {
    out.setZero();
    out.diagonal() = (amp * x.array().cos() * xi.array()).matrix();
  };
  field.sigma = [base, amp](VecIn x, MatOut out) {
    out.setZero();
    out.diagonal() = (base + amp * x.array().sin()).matrix();
  };
  field.sigma_partial = [amp](VecIn x, int j, MatOut out) {
    out.setZero();
    out(j, j) = amp * std::cos(x[j]);
  };
  VectorMap b = drift_map(drift, dim);
  field.drift = b;
  field.b = [b](VecIn x, VecIn, VecOut out) { b(x, out); };
  field.constant_coefficients = (amp == 0.0 && drift.kind == DriftSpec::Kind::constant);
  const double b_grad = drift.kind == DriftSpec::Kind::constant ? 0.0 : std::abs(drift.strength) * std::sqrt(dim);
  field.bound_L = std::max({1.0, (std::abs(base) + std::abs(amp)) * xi_norm, std::abs(amp) * xi_norm,
                            drift_bound(drift, dim), b_grad});
  return field;
}

namespace {

// Draws probe noise values: atoms when enumerable, else sampled.
std::vector<Vec> probe_noise(const NoiseModel& noise, std::uint64_t seed, std::size_t count) {
  if (noise.support()) return noise.support()->atoms;
  std::vector<Vec> values;
  auto sampler = noise.sampler(seed, 0x5eed);
  for (std::size_t i = 0; i < count; ++i) values.push_back(sampler.next());
  return values;
}

}  // namespace

FieldAudit audit_field(const FieldSpec& field, const NoiseModel& noise, const std::vector<Vec>& probes,
                       std::uint64_t seed, std::size_t n_samples) {
  FieldAudit audit;
  const auto xis = probe_noise(noise, seed, 256);
  const double slack = 1.0 + 1e-12;
  for (const Vec& x : probes) {
    for (const Vec& xi : xis) {
      const Vec B = field.eval_B(x, xi);
      const Vec b = field.eval_b(x, xi);
      const Mat J = field.jacobian_B(x, xi);
      audit.max_B = std::max(audit.max_B, B.norm());
      audit.max_b = std::max(audit.max_b, b.norm());
      audit.max_grad_B = std::max(audit.max_grad_B, J.norm());
      if (field.grad_B) {
        const Mat fd = finite_difference_jacobian(field.B, field.dim, x, xi);
        const double scale = std::max(1.0, J.norm());
        audit.max_gradient_mismatch = std::max(audit.max_gradient_mismatch, (fd - J).norm() / scale);
      }
    }
    // Centering condition E B(x, xi(0)) = 0.
    if (noise.support()) {
      const auto& support = *noise.support();
      Vec mean = Vec::Zero(field.dim);
      for (std::size_t a = 0; a < support.size(); ++a) mean += support.stationary[a] * field.eval_B(x, support.atoms[a]);
      audit.max_mean_B = std::max(audit.max_mean_B, mean.cwiseAbs().maxCoeff());
      if (mean.cwiseAbs().maxCoeff() > 1e-12 * field.bound_L) audit.centered = false;
    } else {
      auto sampler = noise.sampler(seed, 0xce17e5);
      Vec sum = Vec::Zero(field.dim);
      Vec sum_sq = Vec::Zero(field.dim);
      for (std::size_t i = 0; i < n_samples; ++i) {
        const Vec B = field.eval_B(x, sampler.next());
        sum += B;
        sum_sq += B.cwiseProduct(B);
      }
      const double n = static_cast<double>(n_samples);
      const Vec mean = sum / n;
      const Vec se = ((sum_sq / n - mean.cwiseProduct(mean)).cwiseMax(0.0) / n).cwiseSqrt();
      const Eigen::Index worst = [&] {
        Eigen::Index i = 0;
        mean.cwiseAbs().maxCoeff(&i);
        return i;
      }();
      audit.max_mean_B = std::max(audit.max_mean_B, std::abs(mean[worst]));
      audit.mean_B_std_error = std::max(audit.mean_B_std_error, se[worst]);
      for (int i = 0; i < field.dim; ++i) {
        if (std::abs(mean[i]) > 3.0 * se[i] + 1e-12) audit.centered = false;
      }
    }
  }
  const double L = field.bound_L * slack;
  audit.within_bound = audit.max_B <= L && audit.max_b <= L && audit.max_grad_B <= L;
  return audit;
}

}  // namespace diffgame
