#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "diffgame/dynkin.hpp"
#include "diffgame/error.hpp"
#include "diffgame/lattice.hpp"
#include "diffgame/scheme.hpp"

using namespace diffgame;

namespace {

FieldSpec constant_field(double s, double drift) {
  return constant_diffusion_field(Mat::Constant(1, 1, s), Vec::Constant(1, drift), 1.0);
}

GameModel model_with(FieldSpec field, double x0, double eps, std::size_t N) {
  return GameModel{std::move(field), NoiseModel::rademacher(1), Vec::Constant(1, x0), eps,
                   static_cast<double>(N) * eps * eps};
}

struct Instance {
  PayoffPair payoffs;
  GameModel model;
};

// Random Lipschitz path payoffs with a random gap G - F >= 0 (sometimes
// zero), on a random one-dimensional field with N <= 3 steps.
Instance random_instance(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::uniform_int_distribution<int> steps(1, 3);
  const double a = u(rng);
  const double b = 0.5 * u(rng);
  const double c = u(rng);
  const double th = u(rng);
  const double g0 = std::max(0.0, 0.4 * u(rng));
  const double g1 = std::max(0.0, u(rng));
  PayoffPair p;
  p.F = [=](std::size_t n, double t, std::span<const Vec> path) {
    double mx = path[0][0];
    for (const Vec& x : path) mx = std::max(mx, x[0]);
    return a * path[n][0] + b * mx + c * std::sin(path[0][0] + path[n][0]) + th * t;
  };
  p.G = [=](std::size_t n, double t, std::span<const Vec> path) {
    return p.F(n, t, path) + g0 + g1 * std::abs(path[n][0] - path[0][0]);
  };
  p.lipschitz_K = std::abs(a) + std::abs(b) + 2 * std::abs(c);
  FieldSpec field;
  if (u(rng) > 0) {
    field = constant_field(0.2 + std::abs(u(rng)), u(rng));
  } else {
    field = sine_diffusion_field(1, 1.0 + 0.5 * u(rng), 0.4 * std::abs(u(rng)),
                                 DriftSpec{DriftSpec::Kind::tanh, Vec::Constant(1, u(rng)), std::abs(u(rng))}, 1.0);
  }
  const double eps = 0.2 + 0.35 * (u(rng) + 1);
  return {p, model_with(field, u(rng), eps, static_cast<std::size_t>(steps(rng)))};
}

PayoffPair shifted(const PayoffPair& p, double dF, double dG) {
  PayoffPair q = p;
  q.F = [F = p.F, dF](std::size_t n, double t, std::span<const Vec> path) { return F(n, t, path) + dF; };
  q.G = [G = p.G, dG](std::size_t n, double t, std::span<const Vec> path) { return G(n, t, path) + dG; };
  q.markov.reset();
  return q;
}

// Grid on the lattice x0 + k * step with the extent of N steps.
GridSpec lattice_grid(double x0, double step, std::size_t N, int refine) {
  const double h = step / refine;
  const double reach = h * refine * static_cast<double>(N + 2);
  return GridSpec{Vec::Constant(1, x0 - reach), Vec::Constant(1, x0 + reach), Vec::Constant(1, h)};
}

}  // namespace

TEST(Tree, ConstantPayoffIsFixedPoint) {
  const GameModel m = model_with(constant_field(1.0, 0.0), 0.0, 0.3, 5);
  EXPECT_EQ(value_exact_tree(constant_payoff(1.75), m).value, 1.75);
  EXPECT_EQ(value_bruteforce_oracle(constant_payoff(1.75), model_with(constant_field(1.0, 0.0), 0.0, 0.3, 3)), 1.75);
  const ValuationResult grid = value_markov_grid(constant_payoff(1.75), m, auto_grid(m));
  EXPECT_EQ(grid.value, 1.75);
}

TEST(Tree, OneStepHandExample) {
  PayoffPair p;
  p.F = [](std::size_t n, double, std::span<const Vec> path) { return path[n][0]; };
  p.G = [](std::size_t n, double, std::span<const Vec> path) { return path[n][0] + 10.0; };
  const GameModel m = model_with(constant_field(1.0, 0.0), 0.0, 0.5, 1);
  EXPECT_EQ(step_count(m.eps, m.T), 1U);
  EXPECT_EQ(value_exact_tree(p, m).value, 0.0);
  EXPECT_EQ(value_bruteforce_oracle(p, m), 0.0);
}

TEST(Tree, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(20240611);
  for (int k = 0; k < 100; ++k) {
    const Instance inst = random_instance(rng);
    const ValuationResult tree = value_exact_tree(inst.payoffs, inst.model);
    EXPECT_NEAR(tree.value, value_bruteforce_oracle(inst.payoffs, inst.model), 1e-12) << "instance " << k;
    EXPECT_EQ(tree.diagnostics.sandwich_violations, 0U);
    TreeOptions american;
    american.rule = StoppingRule::american;
    EXPECT_NEAR(value_exact_tree(inst.payoffs, inst.model, american).value,
                value_bruteforce_oracle(inst.payoffs, inst.model, StoppingRule::american), 1e-12);
  }
}

TEST(Tree, SandwichAtRoot) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 100; ++k) {
    const Instance inst = random_instance(rng);
    const std::vector<Vec> root{inst.model.x0};
    const double v = value_exact_tree(inst.payoffs, inst.model).value;
    EXPECT_LE(inst.payoffs.F(0, 0.0, root), v);
    EXPECT_GE(inst.payoffs.G(0, 0.0, root), v);
  }
}

TEST(Tree, MonotoneInPayoffs) {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 100; ++k) {
    const Instance inst = random_instance(rng);
    const double base = value_exact_tree(inst.payoffs, inst.model).value;
    // Raising F needs room below G; raise both, then G alone.
    const double up_both = value_exact_tree(shifted(inst.payoffs, 0.1, 0.1), inst.model).value;
    const double up_g = value_exact_tree(shifted(inst.payoffs, 0.0, 0.1), inst.model).value;
    const double up_f = value_exact_tree(shifted(shifted(inst.payoffs, 0.0, 0.1), 0.1, 0.0), inst.model).value;
    EXPECT_GE(up_g, base);
    EXPECT_GE(up_f, up_g);
    EXPECT_NEAR(up_both, base + 0.1, 1e-12);
  }
}

TEST(Tree, LargeGIsAmerican) {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 50; ++k) {
    const Instance inst = random_instance(rng);
    const double american = value_bruteforce_oracle(inst.payoffs, inst.model, StoppingRule::american);
    EXPECT_NEAR(value_bruteforce_oracle(shifted(inst.payoffs, 0.0, 1e3), inst.model), american, 1e-12);
  }
}

TEST(Tree, AmericanEqualsGameWithWideGap) {
  const GameModel m = model_with(constant_field(0.2, -0.02), 0.0, 0.25, 12);
  const PayoffPair put = game_put_payoff(1.0, 0.03, 0.0);
  const ValuationResult american = american_value(put, m, EngineKind::tree);
  // Payoff range is at most K = 1.
  const ValuationResult wide = value_exact_tree(game_put_payoff(1.0, 0.03, 10.0), m);
  EXPECT_NEAR(american.value, wide.value, 1e-10);
  EXPECT_EQ(american.diagnostics.sandwich_violations, 0U);
}

TEST(Tree, RegionsAreClassified) {
  // F = x, G = x + 0.05 at x0 = 0 with one step of +-0.5 and drift pushing
  // up: continuation is worth more than G, so the minimizer stops.
  PayoffPair p;
  p.F = [](std::size_t n, double, std::span<const Vec> path) { return path[n][0]; };
  p.G = [](std::size_t n, double, std::span<const Vec> path) { return path[n][0] + 0.05; };
  const GameModel m = model_with(constant_field(1.0, 1.0), 0.0, 0.5, 1);
  const ValuationResult r = value_exact_tree(p, m);
  ASSERT_EQ(r.stop_regions.size(), 1U);
  EXPECT_EQ(r.stop_regions[0].region, Region::minimizer_stops);
  EXPECT_DOUBLE_EQ(r.value, 0.05);
  EXPECT_STREQ(to_string(Region::minimizer_stops), "player1-stop");
  EXPECT_STREQ(to_string(Region::maximizer_stops), "player2-stop");
  EXPECT_STREQ(to_string(Region::continuation), "continue");

  const GameModel down = model_with(constant_field(1.0, -1.0), 0.0, 0.5, 1);
  EXPECT_EQ(value_exact_tree(p, down).stop_regions[0].region, Region::maximizer_stops);
}

TEST(Tree, Errors) {
  const GameModel deep = model_with(constant_field(1.0, 0.0), 0.0, 0.1, 100);
  try {
    value_exact_tree(constant_payoff(0.0), deep);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::tree_too_deep);
  }
  GameModel markov = model_with(constant_field(1.0, 0.0), 0.0, 0.5, 2);
  markov.noise = NoiseModel::two_state_markov(0.3);
  try {
    value_exact_tree(constant_payoff(0.0), markov);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unsupported_noise);
  }
  PayoffPair inverted;
  inverted.F = [](std::size_t, double, std::span<const Vec>) { return 1.0; };
  inverted.G = [](std::size_t, double, std::span<const Vec>) { return 0.0; };
  try {
    value_exact_tree(inverted, model_with(constant_field(1.0, 0.0), 0.0, 0.5, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_payoff);
  }
  try {
    value_bruteforce_oracle(constant_payoff(0.0), model_with(constant_field(1.0, 0.0), 0.0, 0.4, 4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::enumeration_limit);
  }
}

TEST(Tree, TieCollapses) {
  // G = F everywhere: the value is F at the root whatever the branch order.
  const GameModel m = model_with(constant_field(0.3, 0.1), 0.2, 0.3, 6);
  const PayoffPair p = game_put_payoff(1.5, 0.0, 0.0);
  const std::vector<Vec> root{m.x0};
  EXPECT_DOUBLE_EQ(value_exact_tree(p, m).value, p.F(0, 0.0, root));
}

TEST(Grid, MatchesTreeWhenStatesAreNodes) {
  for (std::size_t N : {3U, 8U, 14U}) {
    const double eps = 0.2;
    const GameModel m = model_with(constant_field(0.3, 0.0), 0.1, eps, N);
    const GridSpec grid = lattice_grid(0.1, eps * 0.3, N, 4);
    for (double delta : {0.0, 0.02, 0.1}) {
      const PayoffPair p = game_put_payoff(1.1, 0.04, delta);
      const ValuationResult tree = value_exact_tree(p, m);
      const ValuationResult g = value_markov_grid(p, m, grid);
      EXPECT_NEAR(g.value, tree.value, 1e-12) << N << " " << delta;
      EXPECT_EQ(g.diagnostics.interpolated_steps, 0U);
      EXPECT_EQ(g.diagnostics.interpolation_bound, 0.0);
      EXPECT_EQ(g.diagnostics.sandwich_violations, 0U);
    }
    const PayoffPair look = lookback_put_payoff(0.02, 0.05);
    EXPECT_NEAR(value_markov_grid(look, m, grid).value, value_exact_tree(look, m).value, 1e-12);
  }
}

TEST(Grid, WithinInterpolationBoundOtherwise) {
  const double eps = 0.2;
  const std::size_t N = 12;
  const GameModel m = model_with(constant_field(0.3, 0.07), 0.0, eps, N);
  const PayoffPair p = game_put_payoff(1.0, 0.02, 0.03);
  const double tree = value_exact_tree(p, m).value;
  const ValuationResult g = value_markov_grid(p, m, auto_grid(m, 16));
  EXPECT_GT(g.diagnostics.interpolated_steps, 0U);
  EXPECT_GT(g.diagnostics.interpolation_bound, 0.0);
  EXPECT_LE(std::abs(g.value - tree), g.diagnostics.interpolation_bound);
}

TEST(Grid, ThreadCountDoesNotChangeValue) {
  const GameModel m = model_with(constant_field(0.25, 0.01), 0.0, 0.1, 60);
  const PayoffPair p = game_put_payoff(1.0, 0.02, 0.05);
  GridOptions one;
  GridOptions four;
  four.threads = 4;
  EXPECT_EQ(value_markov_grid(p, m, auto_grid(m), one).value, value_markov_grid(p, m, auto_grid(m), four).value);
}

TEST(Grid, RegionsRecordedOnRequest) {
  const GameModel m = model_with(constant_field(0.3, 0.0), 0.0, 0.2, 4);
  GridOptions o;
  o.record_regions = true;
  const ValuationResult r = value_markov_grid(game_put_payoff(1.0, 0.0, 0.02), m, auto_grid(m), o);
  EXPECT_FALSE(r.stop_regions.empty());
  bool minimizer = false;
  for (const auto& rec : r.stop_regions) minimizer = minimizer || rec.region == Region::minimizer_stops;
  EXPECT_TRUE(minimizer);
}

TEST(Grid, Errors) {
  const GameModel m = model_with(constant_field(0.3, 0.0), 0.0, 0.2, 4);
  const PayoffPair p = game_put_payoff(1.0, 0.0, 0.02);
  try {
    value_markov_grid(p, m, GridSpec{Vec::Constant(1, -1), Vec::Constant(1, 1), Vec::Constant(1, 0.0)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_grid);
  }
  try {
    value_markov_grid(p, m, GridSpec{Vec::Constant(1, -0.1), Vec::Constant(1, 0.1), Vec::Constant(1, 0.01)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::boundary_escape);
  }
  PayoffPair path_only = p;
  path_only.markov.reset();
  try {
    value_markov_grid(path_only, m, auto_grid(m));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_payoff);
  }
}

TEST(American, MartingaleStateIsX0) {
  const GameModel m = model_with(constant_field(0.0, 0.0), 0.7, 0.3, 5);
  const PayoffPair id = markov_payoff(
      MarkovState::current, [](double, VecIn x, VecIn) { return x[0]; }, [](double, VecIn x, VecIn) { return x[0]; },
      1.0);
  EXPECT_DOUBLE_EQ(american_value(id, m, EngineKind::tree).value, 0.7);
  EXPECT_DOUBLE_EQ(american_value(id, m, EngineKind::grid).value, 0.7);
  const GameModel noisy = model_with(constant_field(0.5, 0.0), 0.7, 0.3, 5);
  EXPECT_NEAR(american_value(id, noisy, EngineKind::tree).value, 0.7, 1e-14);
}

TEST(American, ImmediateStoppingIsAdmissible) {
  const GameModel m = model_with(constant_field(0.2, 0.0), -0.3, 0.2, 10);
  const PayoffPair put = game_put_payoff(1.0, 0.1, 0.0);
  const std::vector<Vec> root{m.x0};
  EXPECT_GE(american_value(put, m, EngineKind::tree).value, put.F(0, 0.0, root));
}

TEST(American, GridMatchesCrrLattice) {
  // Constant sigma, r = 0, log-price drift -sigma^2/2 at N = 400.
  const double sigma = 0.2;
  const std::size_t N = 400;
  const double eps = eps_from_steps(N);
  const GameModel m = model_with(constant_field(sigma, -0.5 * sigma * sigma), 0.0, eps, N);
  const double grid = american_value(game_put_payoff(1.0, 0.0, 0.0), m, EngineKind::grid).value;
  const double crr = crr_american_put(1.0, 1.0, 0.0, sigma, 1.0, N);
  EXPECT_NEAR(grid, crr, 0.005 * crr);
}

TEST(GamePut, DeltaSweep) {
  const GameModel m = model_with(constant_field(0.2, 0.0), 0.0, 0.2, 16);
  const double K = 1.0;
  const double r = 0.02;
  const double american = american_value(game_put_payoff(K, r, 0.0), m, EngineKind::tree).value;
  double previous = -1;
  for (double delta : {0.0, 0.01, 0.05, 0.1, K}) {
    const ValuationResult v = value_exact_tree(game_put_payoff(K, r, delta), m);
    EXPECT_GE(v.value, previous);
    EXPECT_LE(v.value, american + 1e-15);
    EXPECT_GE(v.value, game_put_payoff(K, r, delta).F(0, 0.0, std::vector<Vec>{m.x0}));
    EXPECT_EQ(v.diagnostics.sandwich_violations, 0U);
    previous = v.value;
  }
  EXPECT_NEAR(value_exact_tree(game_put_payoff(K, r, 1.5 * K), m).value, american, 1e-10);
  const std::vector<Vec> root{m.x0};
  EXPECT_EQ(value_exact_tree(game_put_payoff(K, r, 0.0), m).value, game_put_payoff(K, r, 0.0).F(0, 0.0, root));
}

TEST(GamePut, PenaltyDoesNotBoundTheGapToAmerican) {
  // At the money with delta = 0 the minimizer stops at once and pays
  // G_0 = F_0 = 0, while the American put is worth more than delta away.
  const GameModel m = model_with(constant_field(0.2, 0.0), 0.0, 0.2, 16);
  const double american = american_value(game_put_payoff(1.0, 0.02, 0.0), m, EngineKind::tree).value;
  const double game = value_exact_tree(game_put_payoff(1.0, 0.02, 0.0), m).value;
  EXPECT_EQ(game, 0.0);
  EXPECT_GT(american - game, 0.05);
}

TEST(GamePut, PayoffValues) {
  const PayoffPair p = game_put_payoff(2.0, 0.0, 0.3);
  const std::vector<Vec> zero{Vec::Zero(1)};
  EXPECT_DOUBLE_EQ(p.F(0, 0.7, zero), 1.0);
  EXPECT_DOUBLE_EQ(p.G(0, 0.7, zero), 1.3);
  const PayoffPair q = game_put_payoff(1.0, 0.1, 0.2);
  const std::vector<Vec> low{Vec::Constant(1, std::log(0.5))};
  EXPECT_NEAR(q.F(0, 2.0, low), std::exp(-0.2) * 0.5, 1e-15);
  EXPECT_NEAR(q.G(0, 2.0, low), std::exp(-0.2) * 0.7, 1e-15);
  EXPECT_THROW(game_put_payoff(0.0, 0.0, 0.0), Error);
  EXPECT_THROW(game_put_payoff(1.0, 0.0, -1.0), Error);
}

TEST(GamePut, LipschitzSpotAudit) {
  const double K = 1.3;
  const PayoffPair p = game_put_payoff(K, 0.05, 0.1);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2, 1);
  for (int k = 0; k < 1000; ++k) {
    std::vector<Vec> a;
    std::vector<Vec> b;
    double sup = 0;
    for (int n = 0; n < 4; ++n) {
      a.push_back(Vec::Constant(1, u(rng)));
      b.push_back(Vec::Constant(1, u(rng)));
      sup = std::max(sup, std::abs(a.back()[0] - b.back()[0]));
    }
    EXPECT_LE(std::abs(p.F(3, 0.5, a) - p.F(3, 0.5, b)), p.lipschitz_K * sup + 1e-15);
  }
}

TEST(Lookback, PathAndStateFormsAgree) {
  const PayoffPair p = lookback_put_payoff(0.0, 0.1);
  const std::vector<Vec> path{Vec::Constant(1, 0.0), Vec::Constant(1, 0.3), Vec::Constant(1, -0.2)};
  EXPECT_NEAR(p.F(2, 0.0, path), std::exp(0.3) - std::exp(-0.2), 1e-15);
  EXPECT_NEAR(p.markov->F(0.0, path.back(), Vec::Constant(1, 0.3)), p.F(2, 0.0, path), 1e-15);
  EXPECT_NEAR(p.G(2, 0.0, path) - p.F(2, 0.0, path), 0.1, 1e-15);
}

TEST(ExpTransform, Examples) {
  EXPECT_EQ(exp_transform(Vec::Zero(3)), Vec::Ones(3));
  const std::vector<Vec> path(4, Vec::Constant(1, std::log(1.7)));
  for (const Vec& x : exp_transform(path)) EXPECT_NEAR(x[0], 1.7, 1e-15);
  try {
    exp_transform(Vec::Constant(1, 1000.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::numeric);
  }
  const PathFunctional first_price = [](std::size_t, double, std::span<const Vec> prices) { return prices[0][0]; };
  const PathFunctional composed = compose_exp(first_price);
  const std::vector<Vec> log_path{Vec::Constant(1, std::log(3.0))};
  EXPECT_NEAR(composed(0, 0.0, log_path), 3.0, 1e-15);
}
