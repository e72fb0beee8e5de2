#include "diffgame/scheme.hpp"

#include <algorithm>
#include <cmath>

#include "diffgame/error.hpp"
#include "diffgame/parallel.hpp"

namespace diffgame {

std::size_t step_count(double eps, double T) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw Error(ErrorCode::invalid_parameter, "eps must be positive");
  if (!(T > 0.0) || !std::isfinite(T)) throw Error(ErrorCode::invalid_parameter, "T must be positive");
  const double q = T / (eps * eps);
  const double nearest = std::round(q);
  if (std::abs(q - nearest) <= 1e-9 * std::max(1.0, q)) return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::floor(q));
}

double eps_from_steps(std::size_t N) {
  if (N == 0) throw Error(ErrorCode::invalid_parameter, "step count must be >= 1");
  return 1.0 / std::sqrt(static_cast<double>(N));
}

void step_in_place(VecOut x, VecIn xi, double eps, const FieldSpec& field, StepWorkspace& work) {
  field.B(x, xi, work.B);
  field.b(x, xi, work.b);
  x += eps * work.B + (eps * eps) * work.b;
  if (!x.allFinite()) throw Error(ErrorCode::numeric, "slow motion step overflowed");
}

Vec step(VecIn x, VecIn xi, double eps, const FieldSpec& field) {
  if (!(eps > 0.0)) throw Error(ErrorCode::invalid_parameter, "eps must be positive");
  if (x.size() != field.dim) throw Error(ErrorCode::invalid_dimension, "state dimension differs from field");
  Vec out = x;
  StepWorkspace work(field.dim);
  step_in_place(out, xi, eps, field, work);
  return out;
}

Vec DiscretePath::sample_at(double t, Extension mode) const {
  if (!(t >= 0.0 && t <= T)) throw Error(ErrorCode::out_of_range, "time outside [0, T]");
  const double h = eps * eps;
  const std::size_t last = states.size() - 1;
  auto n = static_cast<std::size_t>(std::floor(t / h));
  // t exactly on a grid point that rounding placed just below it
  if (n + 1 <= last && static_cast<double>(n + 1) * h <= t) ++n;
  if (n >= last) return states[last];
  if (mode == Extension::piecewise_constant) return states[n];
  const double w = (t - static_cast<double>(n) * h) / h;
  return (1.0 - w) * states[n] + w * states[n + 1];
}

namespace {

void validate(VecIn x0, double eps, double T, const FieldSpec& field, const NoiseModel& noise) {
  if (!(eps > 0.0 && eps <= 1.0)) throw Error(ErrorCode::invalid_parameter, "eps must lie in (0, 1]");
  if (!(T > 0.0)) throw Error(ErrorCode::invalid_parameter, "T must be positive");
  if (x0.size() != field.dim) throw Error(ErrorCode::invalid_dimension, "x0 dimension differs from field");
  if (noise.dim() < 1) throw Error(ErrorCode::invalid_dimension, "noise dimension must be >= 1");
}

}  // namespace

DiscretePath simulate_path(VecIn x0, double eps, double T, const FieldSpec& field, const NoiseModel& noise,
                           std::uint64_t seed, std::uint64_t stream) {
  validate(x0, eps, T, field, noise);
  const std::size_t N = step_count(eps, T);
  DiscretePath path;
  path.eps = eps;
  path.T = T;
  path.states.reserve(N + 1);
  path.noise_record.reserve(N);
  path.states.emplace_back(x0);
  auto sampler = noise.sampler(seed, stream);
  StepWorkspace work(field.dim);
  Vec x = x0;
  for (std::size_t n = 0; n < N; ++n) {
    const Vec& xi = sampler.next();
    path.noise_record.push_back(xi);
    step_in_place(x, xi, eps, field, work);
    path.states.push_back(x);
  }
  return path;
}

std::vector<Vec> simulate_unscaled(VecIn y0, double eps, std::size_t n_steps, const FieldSpec& field,
                                   const NoiseModel& noise, std::uint64_t seed, std::uint64_t stream) {
  if (!(eps > 0.0)) throw Error(ErrorCode::invalid_parameter, "eps must be positive");
  std::vector<Vec> ys{Vec(y0)};
  auto sampler = noise.sampler(seed, stream);
  StepWorkspace work(field.dim);
  Vec y = y0;
  for (std::size_t n = 0; n < n_steps; ++n) {
    step_in_place(y, sampler.next(), eps, field, work);
    ys.push_back(y);
  }
  return ys;
}

Mat simulate_terminal(VecIn x0, double eps, double T, const FieldSpec& field, const NoiseModel& noise,
                      std::uint64_t seed, std::size_t n_paths, unsigned threads) {
  validate(x0, eps, T, field, noise);
  const std::size_t N = step_count(eps, T);
  Mat out(field.dim, static_cast<Eigen::Index>(n_paths));
  parallel_for(n_paths, threads, [&](std::size_t lo, std::size_t hi) {
    StepWorkspace work(field.dim);
    Vec x(field.dim);
    for (std::size_t i = lo; i < hi; ++i) {
      auto sampler = noise.sampler(seed, i);
      x = x0;
      for (std::size_t n = 0; n < N; ++n) step_in_place(x, sampler.next(), eps, field, work);
      out.col(static_cast<Eigen::Index>(i)) = x;
    }
  });
  return out;
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double level) {
  const double pos = level * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return (1.0 - w) * sorted[lo] + w * sorted[hi];
}

}  // namespace

EnsembleSummary summarize_ensemble(VecIn x0, double eps, double T, const FieldSpec& field,
                                   const NoiseModel& noise, std::uint64_t seed, std::size_t n_paths,
                                   std::size_t every, unsigned threads) {
  validate(x0, eps, T, field, noise);
  if (n_paths < 2) throw Error(ErrorCode::invalid_parameter, "ensemble needs at least 2 paths");
  every = std::max<std::size_t>(every, 1);
  const std::size_t N = step_count(eps, T);
  std::vector<std::size_t> recorded;
  for (std::size_t n = 0; n <= N; n += every) recorded.push_back(n);
  if (recorded.back() != N) recorded.push_back(N);

  const int d = field.dim;
  // snapshots[k] holds d x n_paths states at grid index recorded[k]
  std::vector<Mat> snapshots(recorded.size(), Mat(d, static_cast<Eigen::Index>(n_paths)));
  parallel_for(n_paths, threads, [&](std::size_t lo, std::size_t hi) {
    StepWorkspace work(d);
    Vec x(d);
    for (std::size_t i = lo; i < hi; ++i) {
      auto sampler = noise.sampler(seed, i);
      x = x0;
      std::size_t k = 0;
      for (std::size_t n = 0; n <= N; ++n) {
        if (k < recorded.size() && recorded[k] == n) snapshots[k++].col(static_cast<Eigen::Index>(i)) = x;
        if (n < N) step_in_place(x, sampler.next(), eps, field, work);
      }
    }
  });

  EnsembleSummary summary;
  summary.quantile_levels = {0.05, 0.25, 0.5, 0.75, 0.95};
  const double np = static_cast<double>(n_paths);
  std::vector<double> column(n_paths);
  for (std::size_t k = 0; k < recorded.size(); ++k) {
    const Mat& s = snapshots[k];
    summary.times.push_back(static_cast<double>(recorded[k]) * eps * eps);
    const Vec mean = s.rowwise().mean();
    summary.mean.push_back(mean);
    summary.variance.push_back((s.colwise() - mean).rowwise().squaredNorm() / (np - 1.0));
    Mat q(d, static_cast<Eigen::Index>(summary.quantile_levels.size()));
    for (int j = 0; j < d; ++j) {
      for (std::size_t i = 0; i < n_paths; ++i) column[i] = s(j, static_cast<Eigen::Index>(i));
      std::sort(column.begin(), column.end());
      for (std::size_t l = 0; l < summary.quantile_levels.size(); ++l) {
        q(j, static_cast<Eigen::Index>(l)) = quantile_sorted(column, summary.quantile_levels[l]);
      }
    }
    summary.quantiles.push_back(std::move(q));
  }
  return summary;
}

}  // namespace diffgame
