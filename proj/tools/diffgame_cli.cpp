// Command-line driver for the diffgame library.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "diffgame/coefficients.hpp"
#include "diffgame/config.hpp"
#include "diffgame/diffusion_ref.hpp"
#include "diffgame/error.hpp"
#include "diffgame/experiment.hpp"
#include "diffgame/scheme.hpp"

using namespace diffgame;
using nlohmann::json;

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned threads = 1;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ExperimentConfig load(const CommonFlags& flags) {
  ExperimentConfig config = flags.config_path.empty() ? parse_config(json::object()) : load_config(flags.config_path);
  if (flags.seed) config.seed = *flags.seed;
  config.coefficients.seed = config.seed;
  return config;
}

double require_eps(const ExperimentConfig& config) {
  if (config.eps) return *config.eps;
  if (!config.schedule.empty()) return config.schedule.back();
  throw Error(ErrorCode::config, "config needs 'eps' or 'N'");
}

void emit(const CommonFlags& flags, const std::string& text, const ExperimentConfig& config, const std::string& command,
          const json& extra = json::object()) {
  if (flags.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream(flags.out) << text;
  json manifest = run_manifest(config, command, config.seed);
  for (const auto& [key, value] : extra.items()) manifest[key] = value;
  std::ofstream(flags.out + ".manifest.json") << manifest.dump(2) << '\n';
}

std::string coeffs_csv(const ExperimentConfig& config) {
  const BuiltCoefficients built =
      build_limit_coefficients(config.field, config.noise, config.probes, config.coefficients);
  const int d = config.field.dim;
  std::ostringstream os;
  auto columns = [&](const std::string& prefix, bool matrix) {
    for (int i = 0; i < d; ++i) {
      if (!matrix) {
        os << ',' << prefix << i;
        continue;
      }
      for (int j = 0; j < d; ++j) os << ',' << prefix << i << '_' << j;
    }
  };
  os << "probe";
  columns("x", false);
  columns("bbar", false);
  columns("c", false);
  columns("A", true);
  columns("sigma", true);
  os << ",truncation_bound";
  columns("se_bbar", false);
  columns("se_c", false);
  columns("se_A", true);
  os << '\n';
  for (std::size_t p = 0; p < config.probes.size(); ++p) {
    const CoefficientPoint point = built.coefficients->evaluate(config.probes[p]);
    os << p;
    auto vec = [&](const Vec& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << num(v[i]);
    };
    auto mat = [&](const Mat& m) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) os << ',' << num(m(i, j));
      }
    };
    vec(config.probes[p]);
    vec(point.b_bar);
    vec(point.c);
    mat(point.A);
    mat(point.sigma);
    os << ',' << num(point.truncation_bound);
    vec(point.b_bar_std_error);
    vec(point.c_std_error);
    mat(point.A_std_error);
    os << '\n';
  }
  return os.str();
}

std::string simulate_csv(const ExperimentConfig& config, unsigned threads) {
  const double eps = require_eps(config);
  const int d = config.field.dim;
  std::ostringstream os;
  if (config.summary) {
    const EnsembleSummary s = summarize_ensemble(config.x0, eps, config.T, config.field, config.noise, config.seed,
                                                 config.paths, config.every, threads);
    os << 't';
    for (int j = 0; j < d; ++j) {
      os << ",mean" << j << ",var" << j;
      for (double q : s.quantile_levels) os << ",q" << num(q) << '_' << j;
    }
    os << '\n';
    for (std::size_t k = 0; k < s.times.size(); ++k) {
      os << num(s.times[k]);
      for (int j = 0; j < d; ++j) {
        os << ',' << num(s.mean[k][j]) << ',' << num(s.variance[k][j]);
        for (std::size_t q = 0; q < s.quantile_levels.size(); ++q) os << ',' << num(s.quantiles[k](j, q));
      }
      os << '\n';
    }
    return os.str();
  }
  const DiscretePath path = simulate_path(config.x0, eps, config.T, config.field, config.noise, config.seed, 0);
  os << "n,t";
  for (int j = 0; j < d; ++j) os << ",x" << j;
  os << '\n';
  const std::size_t last = path.states.size() - 1;
  for (std::size_t n = 0; n <= last; ++n) {
    if (n % config.every != 0 && n != last) continue;
    os << n << ',' << num(path.time(n));
    for (int j = 0; j < d; ++j) os << ',' << num(path.states[n][j]);
    os << '\n';
  }
  return os.str();
}

std::string reference_csv(const ExperimentConfig& config, unsigned threads) {
  const double eps = require_eps(config);
  const BuiltCoefficients built =
      build_limit_coefficients(config.field, config.noise, config.probes, config.coefficients);
  const DiffusionSpec spec = limit_diffusion(built.coefficients, config.x0, config.T);
  const Mat ens = euler_maruyama_terminal(spec, reference_dt(eps), config.seed, config.paths, threads);
  std::ostringstream os;
  os << "path";
  for (Eigen::Index j = 0; j < ens.rows(); ++j) os << ",x" << j;
  os << '\n';
  for (Eigen::Index i = 0; i < ens.cols(); ++i) {
    os << i;
    for (Eigen::Index j = 0; j < ens.rows(); ++j) os << ',' << num(ens(j, i));
    os << '\n';
  }
  return os.str();
}

std::string compare_csv(const ExperimentConfig& config, unsigned threads) {
  const auto rows = law_comparison(config, threads);
  const int d = config.field.dim;
  std::ostringstream os;
  os << "eps,N";
  for (int j = 0; j < d; ++j) os << ",ks" << j;
  os << ",ks_norm";
  for (int j = 0; j < d; ++j) os << ",ks_exact" << j;
  os << ",error\n";
  for (const auto& row : rows) {
    os << num(row.eps) << ',' << row.steps;
    for (int j = 0; j < d; ++j) os << ',' << (row.error.empty() ? num(row.ks[j]) : "");
    os << ',' << (row.error.empty() ? num(row.ks_norm) : "");
    for (int j = 0; j < d; ++j) {
      os << ',' << (static_cast<std::size_t>(j) < row.ks_exact.size() ? num(row.ks_exact[j]) : "");
    }
    os << ',' << row.error << '\n';
  }
  return os.str();
}

std::pair<std::string, std::string> value_outputs(const ExperimentConfig& config, unsigned threads,
                                                  bool with_regions) {
  const ValuationResult result = value_game(config, require_eps(config), threads, with_regions);
  json out;
  out["value"] = result.value;
  out["engine"] = result.engine;
  out["N_eps"] = result.steps;
  out["diagnostics"] = {{"node_count", result.node_count},
                        {"sandwich_violations", result.diagnostics.sandwich_violations},
                        {"interpolation_bound", result.diagnostics.interpolation_bound},
                        {"interpolated_steps", result.diagnostics.interpolated_steps}};
  std::ostringstream regions;
  if (with_regions) {
    regions << "n,state,region\n";
    for (const auto& rec : result.stop_regions) {
      regions << rec.n << ',';
      for (Eigen::Index j = 0; j < rec.state.size(); ++j) regions << (j ? ";" : "") << num(rec.state[j]);
      regions << ',' << to_string(rec.region) << '\n';
    }
  }
  return {out.dump(2) + "\n", regions.str()};
}

std::pair<std::string, json> converge_csv(const ExperimentConfig& config, unsigned threads) {
  const ConvergenceTable table = convergence_study(config, threads);
  std::string rate = table.exact ? "exact" : (table.rate ? num(*table.rate) : "undefined");
  std::ostringstream os;
  os << "eps,N,value,difference,rate,engine,error\n";
  for (const auto& row : table.rows) {
    os << num(row.eps) << ',' << row.steps << ',' << (row.value ? num(*row.value) : "") << ','
       << (row.value ? num(row.difference) : "") << ',' << rate << ',' << row.engine << ',' << row.error << '\n';
  }
  json extra;
  extra["reference"] = table.reference;
  extra["reference_label"] = table.reference_label;
  extra["rate"] = rate;
  extra["successive_differences"] = table.successive;
  return {os.str(), extra};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion approximation and Dynkin game valuation"};
  app.require_subcommand(1);
  CommonFlags flags;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", flags.config_path, "JSON experiment config");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "master seed (overrides the config)");
    sub->add_option("--out", flags.out, "output file; a run manifest is written next to it");
    sub->add_option("--threads", flags.threads, "worker threads")->check(CLI::PositiveNumber);
  };

  auto* coeffs = app.add_subcommand("coeffs", "limit coefficients at the probe points");
  auto* simulate = app.add_subcommand("simulate", "discrete scheme path or ensemble summary");
  auto* reference = app.add_subcommand("reference", "limit diffusion ensemble at time T");
  auto* compare = app.add_subcommand("compare", "KS distance between scheme and limit laws per eps");
  auto* value = app.add_subcommand("value", "Dynkin game value");
  auto* converge = app.add_subcommand("converge", "game value along an eps schedule");
  auto* bounds = app.add_subcommand("bounds", "theoretical constants of the error estimate");
  for (auto* sub : {coeffs, simulate, reference, compare, value, converge}) add_common(sub, true);
  add_common(bounds, false);
  std::string regions_path;
  value->add_option("--regions", regions_path, "write the stop-region CSV here");
  int bound_d = 1;
  int bound_M = 1;
  bounds->add_option("--d", bound_d, "dimension")->check(CLI::PositiveNumber);
  bounds->add_option("--M", bound_M, "moment order")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (bounds->parsed()) {
      const TheoreticalBounds b = theoretical_bounds(bound_d, bound_M);
      std::ostringstream os;
      os << "d,M,delta,log10_eps0,note\n"
         << bound_d << ',' << bound_M << ',' << num(b.delta) << ',' << num(b.log10_eps0) << ",\"" << b.note << "\"\n";
      ExperimentConfig config = load(flags);
      emit(flags, os.str(), config, "bounds");
      return 0;
    }
    const ExperimentConfig config = load(flags);
    if (coeffs->parsed()) {
      emit(flags, coeffs_csv(config), config, "coeffs");
    } else if (simulate->parsed()) {
      emit(flags, simulate_csv(config, flags.threads), config, "simulate");
    } else if (reference->parsed()) {
      emit(flags, reference_csv(config, flags.threads), config, "reference");
    } else if (compare->parsed()) {
      emit(flags, compare_csv(config, flags.threads), config, "compare");
    } else if (value->parsed()) {
      auto [text, regions] = value_outputs(config, flags.threads, !regions_path.empty());
      emit(flags, text, config, "value");
      if (!regions_path.empty()) std::ofstream(regions_path) << regions;
    } else if (converge->parsed()) {
      auto [text, extra] = converge_csv(config, flags.threads);
      emit(flags, text, config, "converge", extra);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
