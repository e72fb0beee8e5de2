#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diffgame/field.hpp"
#include "diffgame/linalg.hpp"
#include "diffgame/noise.hpp"

namespace diffgame {

/// Payoff functional on the piecewise-constant path: receives the grid
/// index n, the time t = n eps^2 and the states x_0..x_n.
using PathFunctional = std::function<double(std::size_t n, double t, std::span<const Vec> path)>;

/// What a Markov payoff depends on besides time.
enum class MarkovState { current, running_max, running_min };

/// Payoff of (t, current state, componentwise running extremum). The
/// extremum argument is empty for MarkovState::current.
using StateFunctional = std::function<double(double t, VecIn x, VecIn extremum)>;

struct MarkovDescriptor {
  MarkovState state = MarkovState::current;
  StateFunctional F;
  StateFunctional G;
};

/// Payoffs of a Dynkin game: the minimizer stopping first at s pays G_s,
/// the maximizer stopping at t <= s receives F_t, and at the horizon the
/// payment is F_T (= G_T). Requires G >= F before the horizon.
struct PayoffPair {
  PathFunctional F;
  PathFunctional G;
  /// Lipschitz constant in the uniform path metric; NaN when not declared.
  double lipschitz_K = 1.0;
  /// Set when F and G are functions of the Markov state, enabling the grid engine.
  std::optional<MarkovDescriptor> markov;
};

/// Builds path functionals from Markov state functionals.
PayoffPair markov_payoff(MarkovState state, StateFunctional F, StateFunctional G, double lipschitz_K);

/// Componentwise exponential; throws numeric on overflow.
Vec exp_transform(VecIn state);
std::vector<Vec> exp_transform(std::span<const Vec> path);

/// F_t(path) = F_price(exp(path)) for a functional of price paths.
PathFunctional compose_exp(PathFunctional price_functional);

/// Game (Israeli) put on exp(x_0): F_t = e^{-rt}(K - e^{x_t})^+,
/// G_t = F_t + delta e^{-rt}.
PayoffPair game_put_payoff(double K, double r, double delta);

/// Game lookback put: F_t = e^{-rt}(max_{s<=t} e^{x_s} - e^{x_t}),
/// G_t = F_t + delta e^{-rt}. Markov in (current, running max).
PayoffPair lookback_put_payoff(double r, double delta);

/// F = G = c.
PayoffPair constant_payoff(double c);

enum class StoppingRule {
  game,      // V_n = min(G_n, max(F_n, E[V_{n+1} | n]))
  american,  // V_n = max(F_n, E[V_{n+1} | n]); G is ignored
};

enum class Region : std::uint8_t { continuation, minimizer_stops, maximizer_stops };
const char* to_string(Region region);

/// One classified node: `state` is x_n (tree) or the grid node's
/// coordinates, followed by the running extremum when present.
struct StopRecord {
  std::size_t n;
  Vec state;
  Region region;
};

struct ValuationDiagnostics {
  std::size_t sandwich_violations = 0;
  /// K * spacing accumulated over steps that interpolated; 0 when every
  /// child landed on a grid node.
  double interpolation_bound = 0;
  std::size_t interpolated_steps = 0;
};

struct ValuationResult {
  double value = 0;
  std::string engine;
  std::size_t steps = 0;  // N_eps
  std::size_t node_count = 0;
  std::vector<StopRecord> stop_regions;
  ValuationDiagnostics diagnostics;
};

/// Discrete slow motion driving a game: x_{n+1} = x_n + eps B + eps^2 b.
struct GameModel {
  FieldSpec field;
  NoiseModel noise;
  Vec x0;
  double eps;
  double T;
};

struct TreeOptions {
  std::size_t depth_cap = 24;
  std::size_t node_budget = std::size_t{1} << 22;  // leaves
  bool record_regions = true;
  StoppingRule rule = StoppingRule::game;
};

/// Exact backward recursion over the full noise tree (k^N leaves) for
/// i.i.d. finite-support noise; payoffs may be path dependent.
ValuationResult value_exact_tree(const PayoffPair& payoffs, const GameModel& model, const TreeOptions& options = {});

/// Exhaustive min over minimizer stopping times of max over maximizer
/// stopping times of E R(zeta, eta), enumerating every adapted stop/continue
/// assignment on the tree's internal nodes (at most 8 of them).
double value_bruteforce_oracle(const PayoffPair& payoffs, const GameModel& model,
                               StoppingRule rule = StoppingRule::game);

/// Tensor grid over the Markov state (x, then the extremum when present).
struct GridSpec {
  Vec lower;
  Vec upper;
  Vec spacing;
};

/// Grid covering every state reachable from x0 within N_eps steps, with
/// spacing (eps * max_a |B(x0, a)|) / refine per axis.
GridSpec auto_grid(const GameModel& model, std::size_t refine = 8);

struct GridOptions {
  bool record_regions = false;
  StoppingRule rule = StoppingRule::game;
  unsigned threads = 1;
  std::size_t max_nodes = 50'000'000;
};

/// Backward recursion on a state grid with multilinear interpolation of
/// child states. Nodes whose children leave the grid are undefined; if
/// x0 depends on one, throws boundary_escape.
ValuationResult value_markov_grid(const PayoffPair& payoffs, const GameModel& model, const GridSpec& grid,
                                  const GridOptions& options = {});

enum class EngineKind { tree, grid };

/// Optimal stopping of F alone (the minimizer never stops).
ValuationResult american_value(const PayoffPair& payoffs, const GameModel& model, EngineKind engine,
                               const std::optional<GridSpec>& grid = std::nullopt);

}  // namespace diffgame
