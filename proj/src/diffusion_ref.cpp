#include "diffgame/diffusion_ref.hpp"

#include <algorithm>
#include <cmath>

#include "diffgame/error.hpp"
#include "diffgame/parallel.hpp"
#include "diffgame/random.hpp"

namespace diffgame {

DiffusionSpec constant_diffusion(const Mat& sigma, const Vec& drift, VecIn x0, double T) {
  if (sigma.rows() != sigma.cols() || sigma.rows() != drift.size() || drift.size() != x0.size()) {
    throw Error(ErrorCode::invalid_dimension, "sigma, drift and x0 dimensions differ");
  }
  DiffusionSpec spec;
  spec.dim = static_cast<int>(x0.size());
  spec.sigma = [sigma](VecIn, MatOut out) { out = sigma; };
  spec.drift = [drift](VecIn, VecOut out) { out = drift; };
  spec.x0 = x0;
  spec.T = T;
  spec.constant = true;
  return spec;
}

DiffusionSpec limit_diffusion(std::shared_ptr<const LimitCoefficients> coefficients, VecIn x0, double T) {
  if (x0.size() != coefficients->dim()) throw Error(ErrorCode::invalid_dimension, "x0 dimension differs");
  DiffusionSpec spec;
  spec.dim = coefficients->dim();
  spec.sigma = [coefficients](VecIn x, MatOut out) { coefficients->sigma_into(x, out); };
  spec.drift = [coefficients](VecIn x, VecOut out) { coefficients->drift_into(x, out); };
  spec.x0 = x0;
  spec.T = T;
  spec.constant = coefficients->constant();
  return spec;
}

Vec ContinuousPath::at(double t) const {
  if (times.empty() || t < times.front() || t > times.back()) {
    throw Error(ErrorCode::out_of_range, "time outside the path grid");
  }
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.end()) return states.back();
  const auto k = static_cast<std::size_t>(it - times.begin());
  const double w = (t - times[k - 1]) / (times[k] - times[k - 1]);
  return (1.0 - w) * states[k - 1] + w * states[k];
}

std::size_t em_step_count(double T, double dt) {
  if (!(dt > 0.0) || !(dt <= T * (1.0 + 1e-12))) {
    throw Error(ErrorCode::invalid_parameter, "dt must satisfy 0 < dt <= T");
  }
  const double q = T / dt;
  const double nearest = std::round(q);
  if (std::abs(q - nearest) <= 1e-9 * std::max(1.0, q)) return static_cast<std::size_t>(std::max(1.0, nearest));
  return static_cast<std::size_t>(std::ceil(q));
}

namespace {

void check_spec(const DiffusionSpec& spec) {
  if (spec.dim < 1 || spec.x0.size() != spec.dim) throw Error(ErrorCode::invalid_dimension, "bad diffusion spec");
  if (!(spec.T > 0.0)) throw Error(ErrorCode::invalid_parameter, "T must be positive");
}

// Advances x over [0, T] with steps of dt; `visit(k, t, x)` sees every
// grid state including the initial one.
template <typename Visit>
void integrate(const DiffusionSpec& spec, double dt, Engine& eng, Visit&& visit) {
  const int d = spec.dim;
  const std::size_t K = em_step_count(spec.T, dt);
  NormalSource normal;
  Vec x = spec.x0;
  Vec drift(d);
  Vec z(d);
  Mat sigma(d, d);
  visit(std::size_t{0}, 0.0, x);
  for (std::size_t k = 0; k < K; ++k) {
    const double t0 = static_cast<double>(k) * dt;
    const double t1 = (k + 1 == K) ? spec.T : static_cast<double>(k + 1) * dt;
    const double h = t1 - t0;
    spec.sigma(x, sigma);
    spec.drift(x, drift);
    for (int j = 0; j < d; ++j) z[j] = normal(eng);
    if (d == 1) {
      x[0] += sigma(0, 0) * std::sqrt(h) * z[0] + drift[0] * h;
    } else {
      x += std::sqrt(h) * (sigma * z) + h * drift;
    }
    if (!x.allFinite()) throw Error(ErrorCode::numeric, "non-finite state at Euler-Maruyama step " + std::to_string(k));
    visit(k + 1, t1, x);
  }
}

}  // namespace

ContinuousPath euler_maruyama(const DiffusionSpec& spec, double dt, std::uint64_t seed, std::uint64_t stream) {
  check_spec(spec);
  ContinuousPath path;
  Engine eng = make_engine(seed, stream);
  integrate(spec, dt, eng, [&](std::size_t, double t, const Vec& x) {
    path.times.push_back(t);
    path.states.push_back(x);
  });
  return path;
}

Mat euler_maruyama_terminal(const DiffusionSpec& spec, double dt, std::uint64_t seed, std::size_t n_paths,
                            unsigned threads) {
  check_spec(spec);
  em_step_count(spec.T, dt);
  // Constant coefficients: one step is exact in law.
  if (spec.constant) dt = spec.T;
  Mat out(spec.dim, static_cast<Eigen::Index>(n_paths));
  parallel_for(n_paths, threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Engine eng = make_engine(seed, i);
      Vec last;
      integrate(spec, dt, eng, [&](std::size_t, double, const Vec& x) { last = x; });
      out.col(static_cast<Eigen::Index>(i)) = last;
    }
  });
  return out;
}

double reference_dt(double eps) { return eps * eps * std::min(1.0, eps); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double ks_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::invalid_input, "KS needs two nonempty samples");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double worst = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double v = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == v) ++i;
    while (j < sb.size() && sb[j] == v) ++j;
    worst = std::max(worst, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return worst;
}

double ks_normal(std::span<const double> samples, double mean, double sd) {
  if (samples.empty()) throw Error(ErrorCode::invalid_input, "KS needs a nonempty sample");
  if (!(sd > 0.0)) throw Error(ErrorCode::invalid_parameter, "normal sd must be positive");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double worst = 0.0;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t j = i;
    while (j < s.size() && s[j] == s[i]) ++j;
    const double F = normal_cdf((s[i] - mean) / sd);
    worst = std::max({worst, std::abs(F - static_cast<double>(i) / n), std::abs(static_cast<double>(j) / n - F)});
    i = j;
  }
  return worst;
}

KsReport ks_ensembles(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) throw Error(ErrorCode::invalid_dimension, "ensembles differ in dimension");
  if (a.cols() == 0 || b.cols() == 0) throw Error(ErrorCode::invalid_input, "KS needs two nonempty samples");
  KsReport report;
  std::vector<double> ra(static_cast<std::size_t>(a.cols()));
  std::vector<double> rb(static_cast<std::size_t>(b.cols()));
  for (Eigen::Index j = 0; j < a.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.cols(); ++i) ra[static_cast<std::size_t>(i)] = a(j, i);
    for (Eigen::Index i = 0; i < b.cols(); ++i) rb[static_cast<std::size_t>(i)] = b(j, i);
    report.per_coordinate.push_back(ks_distance(ra, rb));
  }
  for (Eigen::Index i = 0; i < a.cols(); ++i) ra[static_cast<std::size_t>(i)] = a.col(i).norm();
  for (Eigen::Index i = 0; i < b.cols(); ++i) rb[static_cast<std::size_t>(i)] = b.col(i).norm();
  report.norm = ks_distance(ra, rb);
  return report;
}

}  // namespace diffgame
