#include "diffgame/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include <Eigen/Core>

#include "diffgame/diffusion_ref.hpp"
#include "diffgame/error.hpp"
#include "diffgame/lattice.hpp"
#include "diffgame/parallel.hpp"
#include "diffgame/random.hpp"
#include "diffgame/scheme.hpp"

namespace diffgame {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kCrrSteps = 10000;

double crr_reference(const ExperimentConfig& config) {
  if (config.payoff.kind != "american_put") {
    throw Error(ErrorCode::config, "crr reference needs an american_put payoff");
  }
  if (config.field.dim != 1 || !config.field.constant_coefficients) {
    throw Error(ErrorCode::config, "crr reference needs a constant one-dimensional field");
  }
  const LimitCoefficients coefficients(config.field, config.noise, config.coefficients);
  const double vol = std::sqrt(coefficients.at(config.x0).A(0, 0));
  return crr_american_put(std::exp(config.x0[0]), config.payoff.K, config.payoff.r, vol, config.T, kCrrSteps);
}

}  // namespace

std::optional<double> loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
    if (x[i] > 0.0 && y[i] > 0.0 && std::isfinite(y[i])) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  if (lx.size() < 2) return std::nullopt;
  const double n = static_cast<double>(lx.size());
  double mx = 0;
  double my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i] / n;
    my += ly[i] / n;
  }
  double sxy = 0;
  double sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

ConvergenceTable convergence_study(const ExperimentConfig& config, unsigned threads) {
  if (config.schedule.size() < 3) throw Error(ErrorCode::invalid_parameter, "convergence study needs >= 3 eps values");
  ConvergenceTable table;
  table.rows.resize(config.schedule.size());
  // Eps points run concurrently; each engine then runs single-threaded.
  parallel_for(config.schedule.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      ConvergenceRow& row = table.rows[i];
      row.eps = config.schedule[i];
      row.steps = step_count(row.eps, config.T);
      try {
        const ValuationResult result = value_game(config, row.eps, 1, false);
        row.value = result.value;
        row.engine = result.engine;
      } catch (const Error& e) {
        row.error = std::string(to_string(e.code())) + ": " + e.what();
      }
    }
  });

  if (config.reference == "crr") {
    table.reference = crr_reference(config);
    table.reference_label = "crr N=" + std::to_string(kCrrSteps);
  } else {
    const ConvergenceRow* finest = nullptr;
    for (const auto& row : table.rows) {
      if (row.value) finest = &row;
    }
    if (finest == nullptr) throw Error(ErrorCode::numeric, "no eps value could be valued");
    table.reference = *finest->value;
    char label[64];
    std::snprintf(label, sizeof label, "finest eps=%.17g", finest->eps);
    table.reference_label = label;
  }

  std::vector<double> eps;
  std::vector<double> diffs;
  bool all_zero = true;
  const ConvergenceRow* previous = nullptr;
  for (auto& row : table.rows) {
    if (!row.value) {
      row.difference = kNaN;
      continue;
    }
    row.difference = std::abs(*row.value - table.reference);
    if (row.difference != 0.0) all_zero = false;
    eps.push_back(row.eps);
    diffs.push_back(row.difference);
    if (previous != nullptr) table.successive.push_back(std::abs(*row.value - *previous->value));
    previous = &row;
  }
  table.exact = all_zero;
  if (!all_zero) table.rate = loglog_slope(eps, diffs);
  return table;
}

std::vector<LawRow> law_comparison(const ExperimentConfig& config, unsigned threads) {
  if (config.paths < 10000) throw Error(ErrorCode::invalid_parameter, "law comparison needs >= 10^4 paths");
  std::vector<double> schedule = config.schedule;
  if (schedule.empty() && config.eps) schedule.push_back(*config.eps);
  if (schedule.empty()) throw Error(ErrorCode::config, "law comparison needs 'schedule' or 'eps'");

  const BuiltCoefficients built =
      build_limit_coefficients(config.field, config.noise, config.probes, config.coefficients);
  const DiffusionSpec limit = limit_diffusion(built.coefficients, config.x0, config.T);
  const std::uint64_t scheme_seed = stream_seed(config.seed, 1);
  const std::uint64_t limit_seed = stream_seed(config.seed, 2);
  const int d = config.field.dim;

  std::vector<LawRow> rows;
  for (double eps : schedule) {
    LawRow row;
    row.eps = eps;
    row.steps = step_count(eps, config.T);
    try {
      const Mat scheme =
          simulate_terminal(config.x0, eps, config.T, config.field, config.noise, scheme_seed, config.paths, threads);
      const Mat reference = euler_maruyama_terminal(limit, reference_dt(eps), limit_seed, config.paths, threads);
      const KsReport report = ks_ensembles(scheme, reference);
      row.ks = report.per_coordinate;
      row.ks_norm = report.norm;
      if (built.coefficients->constant()) {
        const CoefficientPoint& point = built.coefficients->at(config.x0);
        for (int j = 0; j < d; ++j) {
          const Eigen::RowVectorXd coordinate = scheme.row(j);
          const double mean = config.x0[j] + point.drift()[j] * config.T;
          const double sd = std::sqrt(point.A(j, j) * config.T);
          row.ks_exact.push_back(ks_normal({coordinate.data(), static_cast<std::size_t>(coordinate.size())}, mean, sd));
        }
      }
    } catch (const Error& e) {
      row.error = std::string(to_string(e.code())) + ": " + e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

TheoreticalBounds theoretical_bounds(int d, int M) {
  if (d < 1 || M < 1) throw Error(ErrorCode::invalid_parameter, "d and M must be >= 1");
  TheoreticalBounds bounds;
  const double dd = static_cast<double>(d);
  bounds.delta = 1.0 / (500.0 * dd);
  bounds.log10_eps0 = -2.5 * (std::log10(2.0) + 640.0 * dd + 80.0 * dd * std::log10(dd));
  bounds.note = "theoretical constants of the global error estimate; not used as runtime thresholds";
  return bounds;
}

nlohmann::json run_manifest(const ExperimentConfig& config, const std::string& command, std::uint64_t seed) {
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(config.source)));
  nlohmann::json manifest;
  manifest["tool"] = "diffgame";
  manifest["version"] = kVersion;
  manifest["command"] = command;
  manifest["config_hash"] = std::string("fnv1a64:") + hash;
  manifest["seed"] = seed;
  manifest["seed_streams"] = "path i uses stream i; scheme ensembles use stream_seed(seed,1), limit ensembles "
                             "stream_seed(seed,2)";
  manifest["rng"] = "mt19937_64 seeded by splitmix64(seed, stream)";
  manifest["normal_method"] = NormalSource::method;
  manifest["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION);
  manifest["eps0_gate"] = "not enforced; convergence is judged empirically";
  return manifest;
}

}  // namespace diffgame
