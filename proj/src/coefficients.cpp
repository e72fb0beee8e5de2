#include "diffgame/coefficients.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <sstream>

#include "diffgame/error.hpp"

namespace diffgame {

namespace {

constexpr std::size_t kBatches = 20;
constexpr double kSymmetryTol = 1e-10;
constexpr double kPsdTol = 1e-10;

std::string describe(VecIn x) {
  std::ostringstream out;
  out.precision(17);
  out << "x=(";
  for (Eigen::Index i = 0; i < x.size(); ++i) out << (i ? "," : "") << x[i];
  out << ")";
  return out.str();
}

std::size_t resolve_lag(const CoefficientOptions& options, const NoiseModel& noise, double L) {
  if (options.n_max > 0) return options.n_max;
  return default_truncation_lag(noise.mixing(), L);
}

void check_dimension(const FieldSpec& field, const NoiseModel& noise, VecIn x) {
  if (x.size() != field.dim) throw Error(ErrorCode::invalid_dimension, "point dimension differs from field");
  if (noise.dim() < 1) throw Error(ErrorCode::invalid_dimension, "noise dimension must be >= 1");
}

const FiniteSupport& require_support(const NoiseModel& noise) {
  if (!noise.support()) {
    throw Error(ErrorCode::unsupported_mode, "analytic mode needs finite-support noise; " + noise.name());
  }
  return *noise.support();
}

// sum_{r=1..n} P^r for a chain that is not i.i.d.
Mat transition_power_sum(const FiniteSupport& support, std::size_t n) {
  const Mat& P = support.transition;
  Mat power = P;
  Mat sum = P;
  for (std::size_t r = 2; r <= n; ++r) {
    power = power * P;
    sum += power;
  }
  return sum;
}

// Atom-wise field values at x, checked for finiteness.
struct AtomValues {
  std::vector<Vec> B;
  std::vector<Mat> grad;
};

AtomValues atom_values(const FieldSpec& field, const FiniteSupport& support, VecIn x, bool with_grad) {
  AtomValues values;
  values.B.reserve(support.size());
  for (std::size_t a = 0; a < support.size(); ++a) {
    Vec B = field.eval_B(x, support.atoms[a]);
    if (!B.allFinite()) {
      throw Error(ErrorCode::numeric, "non-finite B at " + describe(x) + ", atom " + std::to_string(a));
    }
    values.B.push_back(std::move(B));
    if (with_grad) {
      Mat G = field.jacobian_B(x, support.atoms[a]);
      if (!G.allFinite()) {
        throw Error(ErrorCode::numeric, "non-finite grad B at " + describe(x) + ", atom " + std::to_string(a));
      }
      values.grad.push_back(std::move(G));
    }
  }
  return values;
}

// Stationary run of the noise, long enough for n samples plus a lag window.
std::vector<Vec> noise_run(const NoiseModel& noise, std::uint64_t seed, std::size_t length) {
  auto sampler = noise.sampler(seed, 0);
  std::vector<Vec> run;
  run.reserve(length);
  for (std::size_t t = 0; t < length; ++t) run.push_back(sampler.next());
  return run;
}

template <typename T>
T batch_std_error(const std::vector<T>& batch_means, const T& overall) {
  T acc = T::Zero(overall.rows(), overall.cols());
  for (const T& m : batch_means) acc += (m - overall).cwiseAbs2();
  const double nb = static_cast<double>(batch_means.size());
  return (acc / (nb * (nb - 1.0))).cwiseSqrt();
}

// Means over t of per-sample matrices, plus batch means.
struct RunningMean {
  Mat total;
  std::vector<Mat> batches;
};

template <typename Fn>
RunningMean run_mean(std::size_t n, Eigen::Index rows, Eigen::Index cols, Fn&& term) {
  RunningMean out;
  out.total = Mat::Zero(rows, cols);
  const std::size_t per = n / kBatches;
  for (std::size_t k = 0; k < kBatches; ++k) {
    const std::size_t lo = k * per;
    const std::size_t hi = (k + 1 == kBatches) ? n : lo + per;
    Mat acc = Mat::Zero(rows, cols);
    for (std::size_t t = lo; t < hi; ++t) acc += term(t);
    out.total += acc;
    out.batches.push_back(acc / static_cast<double>(hi - lo));
  }
  out.total /= static_cast<double>(n);
  return out;
}

void require_samples(const CoefficientOptions& options) {
  if (options.n_samples < 2 * kBatches) {
    throw Error(ErrorCode::invalid_parameter, "empirical mode needs n_samples >= 40");
  }
}

// Prefix sums over t of a sequence, for lag-window sums.
template <typename T>
std::vector<T> prefix_sums(const std::vector<T>& values) {
  std::vector<T> prefix;
  prefix.reserve(values.size() + 1);
  prefix.push_back(T::Zero(values.front().rows(), values.front().cols()));
  for (const T& v : values) prefix.push_back(prefix.back() + v);
  return prefix;
}

}  // namespace

double truncation_bound(const MixingProfile& profile, double L, std::size_t n_max) {
  return 2.0 * L * L * profile.tail_sum(n_max);
}

std::size_t default_truncation_lag(const MixingProfile& profile, double L, double target) {
  std::size_t n = 1;
  while (truncation_bound(profile, L, n) >= target && n < 10'000'000) ++n;
  return n;
}

VectorEstimate drift_mean(const FieldSpec& field, const NoiseModel& noise, VecIn x,
                          const CoefficientOptions& options) {
  check_dimension(field, noise, x);
  VectorEstimate est;
  if (options.mode == EstimatorMode::analytic) {
    const auto& support = require_support(noise);
    est.value = Vec::Zero(field.dim);
    for (std::size_t a = 0; a < support.size(); ++a) {
      est.value += support.stationary[a] * field.eval_b(x, support.atoms[a]);
    }
    est.std_error = Vec::Zero(field.dim);
    if (!est.value.allFinite()) throw Error(ErrorCode::numeric, "non-finite drift mean at " + describe(x));
    return est;
  }
  require_samples(options);
  const auto run = noise_run(noise, options.seed, options.n_samples);
  std::vector<Vec> b;
  b.reserve(run.size());
  for (const Vec& xi : run) b.push_back(field.eval_b(x, xi));
  auto mean = run_mean(run.size(), field.dim, 1, [&](std::size_t t) -> Mat { return b[t]; });
  est.value = mean.total.col(0);
  std::vector<Vec> batch;
  for (const Mat& m : mean.batches) batch.push_back(m.col(0));
  est.std_error = batch_std_error(batch, est.value);
  return est;
}

VectorEstimate drift_correction(const FieldSpec& field, const NoiseModel& noise, VecIn x,
                                const CoefficientOptions& options) {
  check_dimension(field, noise, x);
  const std::size_t n_max = resolve_lag(options, noise, field.bound_L);
  if (n_max < 1) throw Error(ErrorCode::invalid_parameter, "n_max must be >= 1");
  VectorEstimate est;
  est.truncation_bound = truncation_bound(noise.mixing(), field.bound_L, n_max);
  const int d = field.dim;

  if (options.mode == EstimatorMode::analytic) {
    const auto& support = require_support(noise);
    const auto values = atom_values(field, support, x, true);
    est.value = Vec::Zero(d);
    est.std_error = Vec::Zero(d);
    // Independent lags factor through E B(x, xi) = 0, so only the
    // dependent case has cross-lag terms.
    if (support.independent) return est;
    const Mat S = transition_power_sum(support, n_max);
    for (std::size_t a = 0; a < support.size(); ++a) {
      for (std::size_t b = 0; b < support.size(); ++b) {
        const double w = support.stationary[a] * S(a, b);
        if (w != 0.0) est.value += w * (values.grad[b] * values.B[a]);
      }
    }
    return est;
  }

  require_samples(options);
  const auto run = noise_run(noise, options.seed, options.n_samples + n_max);
  std::vector<Vec> B;
  std::vector<Mat> G;
  B.reserve(run.size());
  G.reserve(run.size());
  for (const Vec& xi : run) {
    B.push_back(field.eval_B(x, xi));
    G.push_back(field.jacobian_B(x, xi));
    if (!B.back().allFinite() || !G.back().allFinite()) {
      throw Error(ErrorCode::numeric, "non-finite field value at " + describe(x));
    }
  }
  const auto prefix = prefix_sums(G);
  auto mean = run_mean(options.n_samples, d, 1, [&](std::size_t t) -> Mat {
    return (prefix[t + n_max + 1] - prefix[t + 1]) * B[t];
  });
  est.value = mean.total.col(0);
  std::vector<Vec> batch;
  for (const Mat& m : mean.batches) batch.push_back(m.col(0));
  est.std_error = batch_std_error(batch, est.value);
  return est;
}

MatrixEstimate diffusion_matrix(const FieldSpec& field, const NoiseModel& noise, VecIn x,
                                const CoefficientOptions& options) {
  check_dimension(field, noise, x);
  const std::size_t n_max = resolve_lag(options, noise, field.bound_L);
  if (n_max < 1) throw Error(ErrorCode::invalid_parameter, "n_max must be >= 1");
  MatrixEstimate est;
  est.truncation_bound = truncation_bound(noise.mixing(), field.bound_L, n_max);
  const int d = field.dim;

  if (options.mode == EstimatorMode::analytic) {
    const auto& support = require_support(noise);
    const auto values = atom_values(field, support, x, false);
    Mat lag0 = Mat::Zero(d, d);
    for (std::size_t a = 0; a < support.size(); ++a) {
      lag0 += support.stationary[a] * (values.B[a] * values.B[a].transpose());
    }
    Mat cross = Mat::Zero(d, d);
    if (!support.independent) {
      const Mat S = transition_power_sum(support, n_max);
      for (std::size_t a = 0; a < support.size(); ++a) {
        for (std::size_t b = 0; b < support.size(); ++b) {
          const double w = support.stationary[a] * S(a, b);
          if (w != 0.0) cross += w * (values.B[b] * values.B[a].transpose());
        }
      }
    }
    const Mat A = lag0 + cross + cross.transpose();
    est.value = 0.5 * (A + A.transpose());
    est.std_error = Mat::Zero(d, d);
    est.unsymmetrized = lag0 + 2.0 * cross;
    return est;
  }

  require_samples(options);
  const auto run = noise_run(noise, options.seed, options.n_samples + n_max);
  std::vector<Vec> B;
  B.reserve(run.size());
  for (const Vec& xi : run) {
    B.push_back(field.eval_B(x, xi));
    if (!B.back().allFinite()) throw Error(ErrorCode::numeric, "non-finite B at " + describe(x));
  }
  const auto prefix = prefix_sums(B);
  auto window = [&](std::size_t t) -> Vec { return prefix[t + n_max + 1] - prefix[t + 1]; };
  auto sym = run_mean(options.n_samples, d, d, [&](std::size_t t) -> Mat {
    const Mat cross = window(t) * B[t].transpose();
    return B[t] * B[t].transpose() + cross + cross.transpose();
  });
  auto unsym = run_mean(options.n_samples, d, d, [&](std::size_t t) -> Mat {
    return B[t] * B[t].transpose() + 2.0 * window(t) * B[t].transpose();
  });
  est.value = 0.5 * (sym.total + sym.total.transpose());
  est.std_error = batch_std_error(sym.batches, sym.total);
  est.unsymmetrized = unsym.total;
  est.unsymmetrized_std_error = batch_std_error(unsym.batches, unsym.total);
  return est;
}

Mat symmetric_sqrt(MatIn A) {
  if (A.rows() != A.cols() || A.rows() == 0) throw Error(ErrorCode::invalid_input, "matrix must be square");
  if (!A.allFinite()) throw Error(ErrorCode::invalid_input, "matrix has non-finite entries");
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol) {
    throw Error(ErrorCode::invalid_input, "matrix is not symmetric");
  }
  if (A.rows() == 1) {
    const double a = A(0, 0);
    if (a < -kPsdTol) throw Error(ErrorCode::not_psd, "eigenvalue " + std::to_string(a));
    return Mat::Constant(1, 1, std::sqrt(std::max(a, 0.0)));
  }
  const Mat sym = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> solver(sym);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::numeric, "eigendecomposition failed");
  const Vec& lambda = solver.eigenvalues();
  if (lambda.minCoeff() < -kPsdTol) {
    throw Error(ErrorCode::not_psd, "eigenvalue " + std::to_string(lambda.minCoeff()));
  }
  const Mat& V = solver.eigenvectors();
  const Mat root = V * lambda.cwiseMax(0.0).cwiseSqrt().asDiagonal() * V.transpose();
  return 0.5 * (root + root.transpose());
}

LimitCoefficients::LimitCoefficients(FieldSpec field, NoiseModel noise, CoefficientOptions options)
    : field_(std::move(field)), noise_(std::move(noise)), options_(options) {
  if (field_.dim < 1) throw Error(ErrorCode::invalid_dimension, "field dimension must be >= 1");
  n_max_ = resolve_lag(options_, noise_, field_.bound_L);
  truncation_ = truncation_bound(noise_.mixing(), field_.bound_L, n_max_);
  separable_ = static_cast<bool>(field_.sigma) && noise_.dim() == field_.dim;
  if (options_.mode == EstimatorMode::empirical) require_samples(options_);
  if (separable_) compute_moments();
}

void LimitCoefficients::compute_moments() {
  const int d = noise_.dim();
  if (options_.mode == EstimatorMode::analytic) {
    if (noise_.independent()) {
      // Centered independent lags are uncorrelated.
      lag0_ = noise_.covariance();
      if (noise_.support()) {
        const auto& support = *noise_.support();
        lag0_ = Mat::Zero(d, d);
        for (std::size_t a = 0; a < support.size(); ++a) {
          lag0_ += support.stationary[a] * (support.atoms[a] * support.atoms[a].transpose());
        }
      }
      lag_sum_ = Mat::Zero(d, d);
    } else {
      const auto& support = require_support(noise_);
      const Mat S = transition_power_sum(support, n_max_);
      lag0_ = Mat::Zero(d, d);
      lag_sum_ = Mat::Zero(d, d);
      for (std::size_t a = 0; a < support.size(); ++a) {
        lag0_ += support.stationary[a] * (support.atoms[a] * support.atoms[a].transpose());
        for (std::size_t b = 0; b < support.size(); ++b) {
          lag_sum_ += support.stationary[a] * S(a, b) * (support.atoms[b] * support.atoms[a].transpose());
        }
      }
    }
  } else {
    const std::size_t n = options_.n_samples;
    const auto run = noise_run(noise_, options_.seed, n + n_max_);
    const auto prefix = prefix_sums(run);
    auto lag0 = run_mean(n, d, d, [&](std::size_t t) -> Mat { return run[t] * run[t].transpose(); });
    auto lags = run_mean(n, d, d, [&](std::size_t t) -> Mat {
      return (prefix[t + n_max_ + 1] - prefix[t + 1]) * run[t].transpose();
    });
    lag0_ = lag0.total;
    lag_sum_ = lags.total;
    batch_lag0_ = std::move(lag0.batches);
    batch_lag_sum_ = std::move(lags.batches);
  }
  long_run_ = lag0_ + lag_sum_ + lag_sum_.transpose();
}

Vec LimitCoefficients::correction_from(VecIn x, const Mat& sigma, const Mat& lag_sum) const {
  // c_i = sum_{j,k} d_j sigma_ik (sigma lag_sum^T)_jk
  const Mat Q = sigma * lag_sum.transpose();
  Vec c = Vec::Zero(field_.dim);
  for (int j = 0; j < field_.dim; ++j) c += field_.sigma_derivative(x, j) * Q.row(j).transpose();
  return c;
}

CoefficientPoint LimitCoefficients::evaluate(VecIn x) const {
  if (x.size() != field_.dim) throw Error(ErrorCode::invalid_dimension, "point dimension differs from field");
  const int d = field_.dim;
  CoefficientPoint p;
  p.truncation_bound = truncation_;
  CoefficientOptions opts = options_;
  opts.n_max = n_max_;
  if (separable_) {
    const Mat sigma = field_.eval_sigma(x);
    if (!sigma.allFinite()) throw Error(ErrorCode::numeric, "non-finite sigma at " + describe(x));
    if (field_.drift) {
      p.b_bar = Vec(d);
      field_.drift(x, p.b_bar);
      p.b_bar_std_error = Vec::Zero(d);
    } else {
      auto mean = drift_mean(field_, noise_, x, opts);
      p.b_bar = mean.value;
      p.b_bar_std_error = mean.std_error;
    }
    const Mat A = sigma * long_run_ * sigma.transpose();
    p.A = 0.5 * (A + A.transpose());
    p.c = correction_from(x, sigma, lag_sum_);
    p.c_std_error = Vec::Zero(d);
    p.A_std_error = Mat::Zero(d, d);
    if (!batch_lag_sum_.empty()) {
      std::vector<Vec> cs;
      std::vector<Mat> As;
      for (std::size_t k = 0; k < batch_lag_sum_.size(); ++k) {
        cs.push_back(correction_from(x, sigma, batch_lag_sum_[k]));
        const Mat lr = batch_lag0_[k] + batch_lag_sum_[k] + batch_lag_sum_[k].transpose();
        As.push_back(sigma * lr * sigma.transpose());
      }
      p.c_std_error = batch_std_error(cs, p.c);
      p.A_std_error = batch_std_error(As, p.A);
    }
  } else {
    auto mean = drift_mean(field_, noise_, x, opts);
    auto corr = drift_correction(field_, noise_, x, opts);
    auto diff = diffusion_matrix(field_, noise_, x, opts);
    p.b_bar = mean.value;
    p.b_bar_std_error = mean.std_error;
    p.c = corr.value;
    p.c_std_error = corr.std_error;
    p.A = diff.value;
    p.A_std_error = diff.std_error;
  }
  p.sigma = symmetric_sqrt(p.A);
  return p;
}

const CoefficientPoint& LimitCoefficients::at(VecIn x) const {
  std::vector<double> key(x.data(), x.data() + x.size());
  {
    std::shared_lock lock(cache_mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return *it->second;
  }
  auto point = std::make_unique<CoefficientPoint>(evaluate(x));
  std::unique_lock lock(cache_mutex_);
  auto [it, inserted] = cache_.try_emplace(std::move(key), std::move(point));
  return *it->second;
}

void LimitCoefficients::sigma_into(VecIn x, MatOut out) const {
  if (separable_ && field_.dim == 1) {
    std::array<double, 1> s{};
    Eigen::Map<Mat> sigma(s.data(), 1, 1);
    field_.sigma(x, sigma);
    out(0, 0) = std::abs(s[0]) * std::sqrt(std::max(long_run_(0, 0), 0.0));
    return;
  }
  if (separable_) {
    const Mat sigma = field_.eval_sigma(x);
    const Mat A = sigma * long_run_ * sigma.transpose();
    out = symmetric_sqrt(0.5 * (A + A.transpose()));
    return;
  }
  out = evaluate(x).sigma;
}

void LimitCoefficients::drift_into(VecIn x, VecOut out) const {
  if (separable_ && field_.dim == 1 && field_.drift) {
    std::array<double, 3> buf{};
    Eigen::Map<Mat> sigma(buf.data(), 1, 1);
    Eigen::Map<Mat> dsigma(buf.data() + 1, 1, 1);
    Eigen::Map<Vec> b(buf.data() + 2, 1);
    field_.sigma(x, sigma);
    if (field_.sigma_partial) {
      field_.sigma_partial(x, 0, dsigma);
    } else {
      dsigma = field_.sigma_derivative(x, 0);
    }
    field_.drift(x, b);
    out[0] = b[0] + dsigma(0, 0) * sigma(0, 0) * lag_sum_(0, 0);
    return;
  }
  if (separable_ && field_.drift) {
    const Mat sigma = field_.eval_sigma(x);
    field_.drift(x, out);
    out += correction_from(x, sigma, lag_sum_);
    return;
  }
  out = evaluate(x).drift();
}

BuiltCoefficients build_limit_coefficients(const FieldSpec& field, const NoiseModel& noise,
                                           const std::vector<Vec>& probe_points,
                                           const CoefficientOptions& options) {
  if (probe_points.empty()) throw Error(ErrorCode::invalid_input, "at least one probe point is required");
  BuiltCoefficients built;
  auto coefficients = std::make_shared<LimitCoefficients>(field, noise, options);
  CoefficientAudit& audit = built.audit;
  audit.min_eigenvalue = std::numeric_limits<double>::infinity();
  for (const Vec& x : probe_points) {
    const CoefficientPoint& p = coefficients->at(x);
    audit.max_asymmetry = std::max(audit.max_asymmetry, (p.A - p.A.transpose()).cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Mat> solver(p.A, Eigen::EigenvaluesOnly);
    audit.min_eigenvalue = std::min(audit.min_eigenvalue, solver.eigenvalues().minCoeff());
    audit.max_sqrt_residual = std::max(audit.max_sqrt_residual, (p.sigma * p.sigma - p.A).norm());
  }
  audit.field = audit_field(field, noise, probe_points, options.seed);
  audit.ok = audit.max_asymmetry <= 1e-12 && audit.min_eigenvalue >= -kPsdTol &&
             audit.max_sqrt_residual <= 1e-10 && audit.field.within_bound && audit.field.centered;
  built.coefficients = std::move(coefficients);
  return built;
}

}  // namespace diffgame
