#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffgame/coefficients.hpp"
#include "diffgame/dynkin.hpp"
#include "diffgame/field.hpp"
#include "diffgame/noise.hpp"

namespace diffgame {

struct PayoffConfig {
  std::string kind = "constant";  // constant | game_put | american_put | lookback_game_put
  double K = 1.0;
  double r = 0.0;
  double delta = 0.0;
  double c = 0.0;
};

struct GridConfig {
  std::size_t refine = 8;
  std::optional<GridSpec> bounds;
};

/// Parsed experiment description. Every field has a default so a config
/// only needs the parts a subcommand reads.
struct ExperimentConfig {
  std::string field_kind = "constant";
  FieldSpec field;
  NoiseModel noise = NoiseModel::rademacher(1);
  Vec x0;
  double T = 1.0;

  CoefficientOptions coefficients;
  std::vector<Vec> probes;

  PayoffConfig payoff;
  std::string engine = "auto";  // auto | tree | grid
  GridConfig grid;

  std::optional<double> eps;   // single-run subcommands
  std::vector<double> schedule;  // strictly decreasing eps values
  std::string reference = "finest";  // finest | crr
  std::size_t paths = 10000;
  std::size_t every = 1;
  bool summary = false;
  std::uint64_t seed = 1;

  nlohmann::json source;  // the parsed input, for the manifest hash
};

/// Parses a JSON document; throws Error(config) with the offending key.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);

/// 64-bit FNV-1a of the canonical (sorted-key, compact) JSON dump.
std::uint64_t config_hash(const nlohmann::json& doc);

PayoffPair make_payoff(const PayoffConfig& payoff);
StoppingRule stopping_rule(const PayoffConfig& payoff);

GameModel game_model(const ExperimentConfig& config, double eps);

/// Values the configured game at one eps with the configured engine.
ValuationResult value_game(const ExperimentConfig& config, double eps, unsigned threads = 1,
                           bool record_regions = false);

}  // namespace diffgame
