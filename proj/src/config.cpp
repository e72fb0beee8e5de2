#include "diffgame/config.hpp"

#include <cmath>
#include <fstream>

#include "diffgame/error.hpp"
#include "diffgame/scheme.hpp"

namespace diffgame {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorCode::config, what); }

double number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) fail(std::string("'") + key + "' must be a number");
  return j[key].get<double>();
}

Vec vector_of(const json& j, const std::string& what) {
  if (j.is_number()) return Vec::Constant(1, j.get<double>());
  if (!j.is_array()) fail("'" + what + "' must be a number or an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail("'" + what + "' must contain numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

// Scalar, diagonal (flat array) or row-major nested array.
Mat matrix_of(const json& j, const std::string& what) {
  if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) fail("'" + what + "' must be a number or a non-empty array");
  if (!j[0].is_array()) return vector_of(j, what).asDiagonal();
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vec row = vector_of(j[static_cast<std::size_t>(r)], what);
    if (row.size() != cols) fail("'" + what + "' rows differ in length");
    m.row(r) = row.transpose();
  }
  return m;
}

NoiseModel parse_noise(const json& j) {
  const std::string kind = j.value("kind", "rademacher");
  if (kind == "rademacher") {
    const int d = j.value("d", 1);
    return NoiseModel::rademacher(d, number(j, "scale", 1.0));
  }
  if (kind == "markov2") {
    if (!j.contains("p")) fail("markov2 noise needs 'p'");
    return NoiseModel::two_state_markov(number(j, "p", 0.5));
  }
  fail("unknown noise kind '" + kind + "'");
}

DriftSpec parse_drift(const json& j, int dim) {
  DriftSpec drift;
  drift.value = Vec::Zero(dim);
  if (j.is_null()) return drift;
  if (!j.is_object()) {
    drift.value = vector_of(j, "drift");
  } else {
    const std::string kind = j.value("kind", "constant");
    if (kind == "constant") {
      drift.kind = DriftSpec::Kind::constant;
    } else if (kind == "tanh") {
      drift.kind = DriftSpec::Kind::tanh;
    } else if (kind == "sine") {
      drift.kind = DriftSpec::Kind::sine;
    } else {
      fail("unknown drift kind '" + kind + "'");
    }
    if (j.contains("value")) drift.value = vector_of(j["value"], "drift.value");
    drift.strength = number(j, "strength", 0.0);
  }
  if (drift.value.size() == 1 && dim > 1) drift.value = Vec::Constant(dim, drift.value[0]);
  if (drift.value.size() != dim) fail("drift dimension differs from field dimension");
  return drift;
}

void parse_field(const json& j, ExperimentConfig& config) {
  const std::string kind = j.value("kind", "constant");
  const double xi_norm = config.noise.max_norm();
  const int m = config.noise.dim();
  config.field_kind = kind;
  if (kind == "constant") {
    Mat sigma = j.contains("sigma") ? matrix_of(j["sigma"], "sigma") : Mat::Identity(m, m);
    if (sigma.size() == 1 && m > 1) sigma = Mat::Identity(m, m) * sigma(0, 0);
    if (sigma.cols() != m) fail("sigma must have as many columns as the noise dimension");
    const json drift_json = j.contains("drift") ? j["drift"] : json();
    Vec drift = drift_json.is_null() ? Vec::Zero(sigma.rows()) : vector_of(drift_json, "drift");
    if (drift.size() == 1 && sigma.rows() > 1) drift = Vec::Constant(sigma.rows(), drift[0]);
    config.field = constant_diffusion_field(sigma, drift, xi_norm);
  } else if (kind == "sine") {
    const int dim = j.value("dim", m);
    if (dim != m) fail("sine field dimension must equal the noise dimension");
    const DriftSpec drift = parse_drift(j.contains("drift") ? j["drift"] : json(), dim);
    config.field = sine_diffusion_field(dim, number(j, "base", 1.0), number(j, "amp", 0.0), drift, xi_norm);
  } else if (kind == "log_price") {
    // Log of a price with volatility sigma and growth rate r: b = r - sigma^2 / 2.
    if (m != 1) fail("log_price field needs one-dimensional noise");
    const double sigma = number(j, "sigma", 0.2);
    const double rate = number(j, "rate", 0.0);
    config.field = constant_diffusion_field(Mat::Constant(1, 1, sigma), Vec::Constant(1, rate - 0.5 * sigma * sigma),
                                            xi_norm);
  } else {
    fail("unknown field kind '" + kind + "'");
  }
}

GridSpec parse_grid_bounds(const json& j) {
  if (!j.contains("lower") || !j.contains("upper") || !j.contains("spacing")) {
    fail("explicit grid needs 'lower', 'upper' and 'spacing'");
  }
  return GridSpec{vector_of(j["lower"], "grid.lower"), vector_of(j["upper"], "grid.upper"),
                  vector_of(j["spacing"], "grid.spacing")};
}

double eps_from(const json& j, const char* eps_key, const char* n_key) {
  if (j.contains(eps_key)) {
    const double eps = number(j, eps_key, 0.0);
    if (!(eps > 0.0 && eps <= 1.0)) fail(std::string("'") + eps_key + "' must be in (0, 1]");
    return eps;
  }
  const auto N = j[n_key].get<std::int64_t>();
  if (N < 1) fail(std::string("'") + n_key + "' must be >= 1");
  return eps_from_steps(static_cast<std::size_t>(N));
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) fail("config must be a JSON object");
  ExperimentConfig config;
  config.source = doc;
  try {
    const json model = doc.value("model", json::object());
    if (model.contains("noise")) config.noise = parse_noise(model["noise"]);
    parse_field(model.value("field", json::object()), config);
    config.x0 = model.contains("x0") ? vector_of(model["x0"], "x0") : Vec::Zero(config.field.dim);
    if (config.x0.size() == 1 && config.field.dim > 1) config.x0 = Vec::Constant(config.field.dim, config.x0[0]);
    if (config.x0.size() != config.field.dim) fail("x0 dimension differs from field dimension");
    config.T = number(model, "T", number(doc, "T", 1.0));
    if (!(config.T > 0.0)) fail("'T' must be positive");

    if (doc.contains("coefficients")) {
      const json& c = doc["coefficients"];
      const std::string mode = c.value("mode", "analytic");
      if (mode == "analytic") {
        config.coefficients.mode = EstimatorMode::analytic;
      } else if (mode == "empirical") {
        config.coefficients.mode = EstimatorMode::empirical;
      } else {
        fail("unknown coefficient mode '" + mode + "'");
      }
      config.coefficients.n_max = c.value("n_max", std::size_t{0});
      config.coefficients.n_samples = c.value("n_samples", config.coefficients.n_samples);
      if (c.contains("probes")) {
        for (const auto& p : c["probes"]) {
          Vec x = vector_of(p, "probes");
          if (x.size() != config.field.dim) fail("probe dimension differs from field dimension");
          config.probes.push_back(std::move(x));
        }
      }
    }
    if (config.probes.empty()) config.probes.push_back(config.x0);

    if (doc.contains("payoff")) {
      const json& p = doc["payoff"];
      config.payoff.kind = p.value("kind", "constant");
      config.payoff.K = number(p, "K", 1.0);
      config.payoff.r = number(p, "r", 0.0);
      config.payoff.delta = number(p, "delta", 0.0);
      config.payoff.c = number(p, "c", 0.0);
      make_payoff(config.payoff);  // validates
    }
    config.engine = doc.value("engine", "auto");
    if (config.engine != "auto" && config.engine != "tree" && config.engine != "grid") {
      fail("engine must be auto, tree or grid");
    }
    if (doc.contains("grid")) {
      const json& g = doc["grid"];
      config.grid.refine = g.value("refine", config.grid.refine);
      if (g.contains("lower") || g.contains("upper") || g.contains("spacing")) config.grid.bounds = parse_grid_bounds(g);
    }

    if (doc.contains("eps") || doc.contains("N")) config.eps = eps_from(doc, "eps", "N");
    if (doc.contains("schedule")) {
      const json& s = doc["schedule"];
      const json& list = s.is_object() ? (s.contains("eps") ? s["eps"] : s["N"]) : s;
      const bool by_steps = s.is_object() && !s.contains("eps");
      if (!list.is_array()) fail("'schedule' must be an array or {eps|N: array}");
      for (const auto& v : list) {
        if (by_steps) {
          if (!v.is_number_integer() || v.get<std::int64_t>() < 1) fail("schedule N values must be positive integers");
          config.schedule.push_back(eps_from_steps(v.get<std::size_t>()));
        } else {
          if (!v.is_number()) fail("schedule eps values must be numbers");
          const double eps = v.get<double>();
          if (!(eps > 0.0 && eps <= 1.0)) fail("schedule eps values must be in (0, 1]");
          config.schedule.push_back(eps);
        }
      }
      for (std::size_t i = 1; i < config.schedule.size(); ++i) {
        if (!(config.schedule[i] < config.schedule[i - 1])) fail("schedule must be strictly decreasing in eps");
      }
    }
    config.reference = doc.value("reference", "finest");
    if (config.reference != "finest" && config.reference != "crr") fail("reference must be finest or crr");
    config.paths = doc.value("paths", config.paths);
    if (config.paths == 0) fail("'paths' must be >= 1");
    config.every = doc.value("every", config.every);
    if (config.every == 0) fail("'every' must be >= 1");
    config.summary = doc.value("summary", false);
    config.seed = doc.value("seed", config.seed);
  } catch (const json::exception& e) {
    fail(std::string("malformed config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config) throw;
    fail(std::string("invalid config: ") + e.what());
  }
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    fail("cannot parse '" + path + "': " + e.what());
  }
  return parse_config(doc);
}

std::uint64_t config_hash(const json& doc) {
  // nlohmann::json objects keep keys sorted, so dump() is canonical.
  const std::string text = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

PayoffPair make_payoff(const PayoffConfig& payoff) {
  if (payoff.kind == "constant") return constant_payoff(payoff.c);
  if (payoff.kind == "game_put") return game_put_payoff(payoff.K, payoff.r, payoff.delta);
  if (payoff.kind == "american_put") return game_put_payoff(payoff.K, payoff.r, 0.0);
  if (payoff.kind == "lookback_game_put") return lookback_put_payoff(payoff.r, payoff.delta);
  throw Error(ErrorCode::config, "unknown payoff kind '" + payoff.kind + "'");
}

StoppingRule stopping_rule(const PayoffConfig& payoff) {
  return payoff.kind == "american_put" ? StoppingRule::american : StoppingRule::game;
}

GameModel game_model(const ExperimentConfig& config, double eps) {
  return GameModel{config.field, config.noise, config.x0, eps, config.T};
}

ValuationResult value_game(const ExperimentConfig& config, double eps, unsigned threads, bool record_regions) {
  const PayoffPair payoffs = make_payoff(config.payoff);
  const GameModel model = game_model(config, eps);
  const StoppingRule rule = stopping_rule(config.payoff);
  std::string engine = config.engine;
  if (engine == "auto") {
    TreeOptions probe;
    const double leaves = model.noise.support()
                              ? std::pow(static_cast<double>(model.noise.support()->size()),
                                         static_cast<double>(step_count(eps, config.T)))
                              : INFINITY;
    const bool tree_fits = step_count(eps, config.T) <= probe.depth_cap && leaves <= probe.node_budget;
    engine = (tree_fits || !payoffs.markov) ? "tree" : "grid";
  }
  if (engine == "tree") {
    TreeOptions options;
    options.rule = rule;
    options.record_regions = record_regions;
    return value_exact_tree(payoffs, model, options);
  }
  GridOptions options;
  options.rule = rule;
  options.threads = threads;
  options.record_regions = record_regions;
  const GridSpec grid = config.grid.bounds ? *config.grid.bounds : auto_grid(model, config.grid.refine);
  return value_markov_grid(payoffs, model, grid, options);
}

}  // namespace diffgame
