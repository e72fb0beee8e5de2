#include "diffgame/dynkin.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "diffgame/error.hpp"
#include "diffgame/parallel.hpp"
#include "diffgame/scheme.hpp"

namespace diffgame {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kSnap = 1e-9;

Vec running_extremum(std::span<const Vec> path, MarkovState state) {
  Vec m = path.front();
  for (const Vec& x : path) {
    if (state == MarkovState::running_max) {
      m = m.cwiseMax(x);
    } else {
      m = m.cwiseMin(x);
    }
  }
  return m;
}

bool payoff_order_violated(double f, double g) { return g < f - 1e-12 * std::max(1.0, std::abs(f)); }

void require_iid_support(const NoiseModel& noise) {
  if (!noise.support()) throw Error(ErrorCode::unsupported_noise, "exact valuation needs finite-support noise");
  if (!noise.support()->independent) {
    throw Error(ErrorCode::unsupported_noise,
                "exact valuation conditions on the noise history only for i.i.d. noise; got " + noise.name());
  }
}

void check_model(const GameModel& model) {
  if (model.x0.size() != model.field.dim) throw Error(ErrorCode::invalid_dimension, "x0 dimension differs from field");
  if (model.noise.dim() < 1) throw Error(ErrorCode::invalid_dimension, "noise dimension must be >= 1");
  if (!(model.eps > 0.0)) throw Error(ErrorCode::invalid_parameter, "eps must be positive");
}

// Applies one recursion step; returns the value and classifies the node.
struct NodeOutcome {
  double value;
  Region region;
  bool violation;
};

NodeOutcome resolve(double f, double g, double cont, StoppingRule rule) {
  NodeOutcome out{};
  if (rule == StoppingRule::american) {
    out.value = std::max(f, cont);
    out.region = f > cont ? Region::maximizer_stops : Region::continuation;
    out.violation = out.value < f;
    return out;
  }
  if (payoff_order_violated(f, g)) throw Error(ErrorCode::invalid_payoff, "G < F before the horizon");
  const double upper = std::max(f, cont);
  out.value = std::min(g, upper);
  if (upper > g) {
    out.region = Region::minimizer_stops;
  } else if (f > cont) {
    out.region = Region::maximizer_stops;
  } else {
    out.region = Region::continuation;
  }
  out.violation = out.value < f || out.value > g;
  return out;
}

}  // namespace

const char* to_string(Region region) {
  switch (region) {
    case Region::continuation: return "continue";
    case Region::minimizer_stops: return "player1-stop";
    case Region::maximizer_stops: return "player2-stop";
  }
  return "continue";
}

PayoffPair markov_payoff(MarkovState state, StateFunctional F, StateFunctional G, double lipschitz_K) {
  PayoffPair pair;
  auto wrap = [state](StateFunctional fn) -> PathFunctional {
    return [state, fn = std::move(fn)](std::size_t, double t, std::span<const Vec> path) {
      if (state == MarkovState::current) return fn(t, path.back(), Vec());
      return fn(t, path.back(), running_extremum(path, state));
    };
  };
  pair.F = wrap(F);
  pair.G = wrap(G);
  pair.lipschitz_K = lipschitz_K;
  pair.markov = MarkovDescriptor{state, std::move(F), std::move(G)};
  return pair;
}

Vec exp_transform(VecIn state) {
  Vec out = state.array().exp().matrix();
  if (!out.allFinite()) throw Error(ErrorCode::numeric, "exponential transform overflowed");
  return out;
}

std::vector<Vec> exp_transform(std::span<const Vec> path) {
  std::vector<Vec> out;
  out.reserve(path.size());
  for (const Vec& x : path) out.push_back(exp_transform(x));
  return out;
}

PathFunctional compose_exp(PathFunctional price_functional) {
  return [fn = std::move(price_functional)](std::size_t n, double t, std::span<const Vec> path) {
    const auto prices = exp_transform(path);
    return fn(n, t, prices);
  };
}

PayoffPair game_put_payoff(double K, double r, double delta) {
  if (!(K > 0.0) || !(delta >= 0.0) || !(r >= 0.0)) {
    throw Error(ErrorCode::invalid_parameter, "game put needs K > 0, delta >= 0, r >= 0");
  }
  auto F = [K, r](double t, VecIn x, VecIn) {
    const double price = std::exp(x[0]);
    if (!std::isfinite(price)) throw Error(ErrorCode::numeric, "exponential transform overflowed");
    return std::exp(-r * t) * std::max(K - price, 0.0);
  };
  auto G = [F, r, delta](double t, VecIn x, VecIn m) { return F(t, x, m) + delta * std::exp(-r * t); };
  return markov_payoff(MarkovState::current, F, G, K);
}

PayoffPair lookback_put_payoff(double r, double delta) {
  if (!(delta >= 0.0) || !(r >= 0.0)) throw Error(ErrorCode::invalid_parameter, "lookback needs delta, r >= 0");
  auto F = [r](double t, VecIn x, VecIn m) { return std::exp(-r * t) * (std::exp(m[0]) - std::exp(x[0])); };
  auto G = [F, r, delta](double t, VecIn x, VecIn m) { return F(t, x, m) + delta * std::exp(-r * t); };
  return markov_payoff(MarkovState::running_max, F, G, kNaN);
}

PayoffPair constant_payoff(double c) {
  auto F = [c](double, VecIn, VecIn) { return c; };
  return markov_payoff(MarkovState::current, F, F, 0.0);
}

// ---------------------------------------------------------------------------
// Exact tree

namespace {

class TreeWalker {
 public:
  TreeWalker(const PayoffPair& payoffs, const GameModel& model, const TreeOptions& options, std::size_t N)
      : payoffs_(payoffs), model_(model), options_(options), support_(*model.noise.support()), N_(N),
        h_(model.eps * model.eps), work_(model.field.dim) {
    path_.reserve(N + 1);
    path_.push_back(model.x0);
  }

  double visit(std::size_t n) {
    ++result.node_count;
    const double t = static_cast<double>(n) * h_;
    const std::span<const Vec> path(path_.data(), n + 1);
    if (n == N_) return payoffs_.F(n, t, path);
    double cont = 0.0;
    for (std::size_t a = 0; a < support_.size(); ++a) {
      Vec child = path_[n];
      step_in_place(child, support_.atoms[a], model_.eps, model_.field, work_);
      path_.push_back(std::move(child));
      cont += support_.stationary[a] * visit(n + 1);
      path_.pop_back();
    }
    const std::span<const Vec> here(path_.data(), n + 1);
    const double f = payoffs_.F(n, t, here);
    const double g = options_.rule == StoppingRule::game ? payoffs_.G(n, t, here) : kNaN;
    const NodeOutcome out = resolve(f, g, cont, options_.rule);
    if (out.violation) ++result.diagnostics.sandwich_violations;
    if (options_.record_regions) result.stop_regions.push_back({n, path_[n], out.region});
    return out.value;
  }

  ValuationResult result;

 private:
  const PayoffPair& payoffs_;
  const GameModel& model_;
  const TreeOptions& options_;
  const FiniteSupport& support_;
  std::size_t N_;
  double h_;
  StepWorkspace work_;
  std::vector<Vec> path_;
};

}  // namespace

ValuationResult value_exact_tree(const PayoffPair& payoffs, const GameModel& model, const TreeOptions& options) {
  check_model(model);
  require_iid_support(model.noise);
  const std::size_t N = step_count(model.eps, model.T);
  const double k = static_cast<double>(model.noise.support()->size());
  const double leaves = std::pow(k, static_cast<double>(N));
  if (N > options.depth_cap || leaves > static_cast<double>(options.node_budget)) {
    throw Error(ErrorCode::tree_too_deep, "tree with " + std::to_string(N) + " levels exceeds the node budget; "
                                          "use the grid engine");
  }
  TreeWalker walker(payoffs, model, options, N);
  const double value = walker.visit(0);
  ValuationResult result = std::move(walker.result);
  result.value = value;
  result.engine = "tree";
  result.steps = N;
  return result;
}

// ---------------------------------------------------------------------------
// Brute-force oracle

double value_bruteforce_oracle(const PayoffPair& payoffs, const GameModel& model, StoppingRule rule) {
  check_model(model);
  require_iid_support(model.noise);
  const auto& support = *model.noise.support();
  const std::size_t N = step_count(model.eps, model.T);
  const std::size_t k = support.size();

  // Breadth-first node list; node paths are stored whole.
  struct Node {
    std::size_t depth;
    std::vector<Vec> path;
    double prob;
    std::vector<std::size_t> ancestors;  // node ids at depths 0..depth-1
  };
  std::vector<Node> nodes{{0, {model.x0}, 1.0, {}}};
  std::size_t internal = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].depth == N) continue;
    ++internal;
    if (internal > 8) throw Error(ErrorCode::enumeration_limit, "more than 8 decision nodes");
    for (std::size_t a = 0; a < k; ++a) {
      Node child{nodes[i].depth + 1, nodes[i].path, nodes[i].prob * support.stationary[a], nodes[i].ancestors};
      child.path.push_back(step(nodes[i].path.back(), support.atoms[a], model.eps, model.field));
      child.ancestors.push_back(i);
      nodes.push_back(std::move(child));
    }
  }
  const double h = model.eps * model.eps;
  std::vector<double> F(nodes.size());
  std::vector<double> G(nodes.size());
  std::vector<std::size_t> leaves;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double t = static_cast<double>(nodes[i].depth) * h;
    F[i] = payoffs.F(nodes[i].depth, t, nodes[i].path);
    G[i] = (rule == StoppingRule::game && nodes[i].depth < N) ? payoffs.G(nodes[i].depth, t, nodes[i].path) : kNaN;
    if (nodes[i].depth == N) leaves.push_back(i);
  }
  // Internal nodes are exactly ids 0..internal-1 in breadth-first order.
  const std::size_t strategies = std::size_t{1} << internal;
  // stop[s][l]: depth at which strategy s stops on leaf l, N if never.
  std::vector<std::vector<std::size_t>> stop(strategies, std::vector<std::size_t>(leaves.size(), N));
  for (std::size_t s = 0; s < strategies; ++s) {
    for (std::size_t l = 0; l < leaves.size(); ++l) {
      const auto& anc = nodes[leaves[l]].ancestors;
      for (std::size_t depth = 0; depth < anc.size(); ++depth) {
        if ((s >> anc[depth]) & 1U) {
          stop[s][l] = depth;
          break;
        }
      }
    }
  }
  auto expected_payoff = [&](std::size_t zeta, std::size_t eta) {
    double total = 0.0;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
      const std::size_t leaf = leaves[l];
      const std::size_t s = stop[zeta][l];
      const std::size_t t = stop[eta][l];
      const auto& anc = nodes[leaf].ancestors;
      double pay = 0.0;
      if (s < t) {
        pay = G[anc[s]];
      } else if (t < N) {
        pay = F[anc[t]];
      } else {
        pay = F[leaf];
      }
      total += nodes[leaf].prob * pay;
    }
    return total;
  };
  if (rule == StoppingRule::american) {
    const std::size_t never = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t eta = 0; eta < strategies; ++eta) best = std::max(best, expected_payoff(never, eta));
    return best;
  }
  double value = std::numeric_limits<double>::infinity();
  for (std::size_t zeta = 0; zeta < strategies; ++zeta) {
    double inner = -std::numeric_limits<double>::infinity();
    for (std::size_t eta = 0; eta < strategies; ++eta) inner = std::max(inner, expected_payoff(zeta, eta));
    value = std::min(value, inner);
  }
  return value;
}

// ---------------------------------------------------------------------------
// Markov grid

namespace {

class StateGrid {
 public:
  StateGrid(const GridSpec& spec, int d, bool extremum, std::size_t max_nodes) : d_(d) {
    auto broadcast = [d](const Vec& v, const char* what) -> Vec {
      if (v.size() == d) return v;
      if (v.size() == 1) return Vec::Constant(d, v[0]);
      throw Error(ErrorCode::invalid_grid, std::string(what) + " dimension differs from state dimension");
    };
    const Vec lower = broadcast(spec.lower, "lower");
    const Vec upper = broadcast(spec.upper, "upper");
    const Vec spacing = broadcast(spec.spacing, "spacing");
    const int axes = extremum ? 2 * d : d;
    std::size_t total = 1;
    for (int a = 0; a < axes; ++a) {
      const int j = a % d;
      if (!(spacing[j] > 0.0) || !std::isfinite(spacing[j])) throw Error(ErrorCode::invalid_grid, "spacing must be positive");
      if (!(upper[j] > lower[j])) throw Error(ErrorCode::invalid_grid, "upper bound must exceed lower bound");
      const auto count = static_cast<std::size_t>(std::floor((upper[j] - lower[j]) / spacing[j] + kSnap)) + 1;
      lower_.push_back(lower[j]);
      spacing_.push_back(spacing[j]);
      count_.push_back(count);
      stride_.push_back(total);
      total *= count;
      if (total > max_nodes) throw Error(ErrorCode::invalid_grid, "grid exceeds the node limit");
    }
    size_ = total;
  }

  std::size_t size() const { return size_; }
  std::size_t axes() const { return count_.size(); }
  double max_spacing() const { return *std::max_element(spacing_.begin(), spacing_.end()); }

  void coordinates(std::size_t index, VecOut z) const {
    for (std::size_t a = 0; a < count_.size(); ++a) {
      const std::size_t i = (index / stride_[a]) % count_[a];
      z[static_cast<Eigen::Index>(a)] = lower_[a] + static_cast<double>(i) * spacing_[a];
    }
  }

  /// Multilinear interpolation of `values` at z; NaN when z or a needed
  /// corner lies outside the grid or is undefined.
  double interpolate(const std::vector<double>& values, VecIn z, bool& interpolated) const {
    std::size_t base = 0;
    std::array<double, 16> frac{};
    std::array<std::size_t, 16> step{};
    std::size_t active = 0;
    std::array<std::size_t, 16> active_axis{};
    for (std::size_t a = 0; a < count_.size(); ++a) {
      const double u = (z[static_cast<Eigen::Index>(a)] - lower_[a]) / spacing_[a];
      if (!std::isfinite(u)) return kNaN;
      double i0 = std::floor(u);
      double f = u - i0;
      if (f < kSnap) {
        f = 0.0;
      } else if (f > 1.0 - kSnap) {
        i0 += 1.0;
        f = 0.0;
      }
      if (i0 < 0.0 || i0 >= static_cast<double>(count_[a])) return kNaN;
      const auto i = static_cast<std::size_t>(i0);
      if (f > 0.0) {
        if (i + 1 >= count_[a]) return kNaN;
        frac[active] = f;
        step[active] = stride_[a];
        active_axis[active] = a;
        ++active;
      }
      base += i * stride_[a];
    }
    if (active > 0) interpolated = true;
    double total = 0.0;
    for (std::size_t corner = 0; corner < (std::size_t{1} << active); ++corner) {
      double w = 1.0;
      std::size_t index = base;
      for (std::size_t k = 0; k < active; ++k) {
        if ((corner >> k) & 1U) {
          w *= frac[k];
          index += step[k];
        } else {
          w *= 1.0 - frac[k];
        }
      }
      const double v = values[index];
      if (std::isnan(v)) return kNaN;
      total += w * v;
    }
    (void)active_axis;
    return total;
  }

 private:
  int d_;
  std::vector<double> lower_;
  std::vector<double> spacing_;
  std::vector<std::size_t> count_;
  std::vector<std::size_t> stride_;
  std::size_t size_ = 0;
};

}  // namespace

GridSpec auto_grid(const GameModel& model, std::size_t refine) {
  check_model(model);
  if (!model.noise.support()) throw Error(ErrorCode::unsupported_noise, "grid engine needs finite-support noise");
  if (refine == 0) throw Error(ErrorCode::invalid_parameter, "refine must be >= 1");
  const auto& support = *model.noise.support();
  const int d = model.field.dim;
  const std::size_t N = step_count(model.eps, model.T);
  const double eps = model.eps;

  auto max_step = [&](VecIn x, Vec& diffusive) {
    Vec s = Vec::Zero(d);
    for (const Vec& a : support.atoms) {
      const Vec B = model.field.eval_B(x, a);
      const Vec b = model.field.eval_b(x, a);
      s = s.cwiseMax((eps * B + eps * eps * b).cwiseAbs());
      diffusive = diffusive.cwiseMax((eps * B).cwiseAbs());
    }
    return s;
  };
  Vec diffusive = Vec::Zero(d);
  Vec s = max_step(model.x0, diffusive);
  Vec spacing(d);
  for (int j = 0; j < d; ++j) {
    const double base = diffusive[j] > 0.0 ? diffusive[j] : (s[j] > 0.0 ? s[j] : 1.0);
    spacing[j] = base / static_cast<double>(refine);
  }
  // Widen the step bound by probing the region the first guess covers.
  Vec reach = static_cast<double>(N) * s * 1.05 + 2.0 * spacing;
  const int probes = d == 1 ? 65 : 9;
  Vec unit = Vec::Zero(d);
  const std::size_t total = static_cast<std::size_t>(std::pow(probes, std::min(d, 3)));
  for (std::size_t p = 0; p < total; ++p) {
    std::size_t rest = p;
    Vec x = model.x0;
    for (int j = 0; j < std::min(d, 3); ++j) {
      const double u = static_cast<double>(rest % probes) / (probes - 1) * 2.0 - 1.0;
      rest /= probes;
      x[j] += u * reach[j];
    }
    s = s.cwiseMax(max_step(x, unit));
  }
  // Each level loses up to one extra node per side to the interpolation stencil.
  reach = static_cast<double>(N) * (s * 1.05 + spacing) + 2.0 * spacing;
  // Whole number of cells on each side so x0 is a grid node.
  for (int j = 0; j < d; ++j) reach[j] = std::ceil(reach[j] / spacing[j]) * spacing[j];
  return GridSpec{model.x0 - reach, model.x0 + reach, spacing};
}

ValuationResult value_markov_grid(const PayoffPair& payoffs, const GameModel& model, const GridSpec& grid,
                                  const GridOptions& options) {
  check_model(model);
  if (!payoffs.markov) throw Error(ErrorCode::invalid_payoff, "grid engine needs a Markov payoff descriptor");
  require_iid_support(model.noise);
  const auto& markov = *payoffs.markov;
  const auto& support = *model.noise.support();
  const int d = model.field.dim;
  const bool extremum = markov.state != MarkovState::current;
  const StateGrid states(grid, d, extremum, options.max_nodes);
  if (states.axes() > 16) throw Error(ErrorCode::invalid_grid, "too many grid axes");
  const std::size_t N = step_count(model.eps, model.T);
  const double h = model.eps * model.eps;
  const bool game = options.rule == StoppingRule::game;
  const auto D = static_cast<Eigen::Index>(states.axes());

  auto split = [&](const Vec& z, Vec& x, Vec& m) {
    x = z.head(d);
    if (extremum) m = z.tail(d);
  };

  ValuationResult result;
  result.engine = "grid";
  result.steps = N;
  result.node_count = states.size();

  std::vector<double> next(states.size());
  std::vector<double> current(states.size());
  {
    const double t = static_cast<double>(N) * h;
    Vec z(D);
    Vec x;
    Vec m;
    for (std::size_t i = 0; i < states.size(); ++i) {
      states.coordinates(i, z);
      split(z, x, m);
      next[i] = markov.F(t, x, m);
    }
  }

  std::vector<std::uint8_t> regions(options.record_regions ? states.size() : 0);
  const unsigned threads = std::max(1U, options.threads);
  std::vector<std::size_t> violations(threads, 0);
  std::vector<char> interpolated(threads, 0);
  for (std::size_t n = N; n-- > 0;) {
    const double t = static_cast<double>(n) * h;
    std::fill(interpolated.begin(), interpolated.end(), 0);
    std::fill(violations.begin(), violations.end(), 0);
    const std::size_t chunk = (states.size() + threads - 1) / threads;
    parallel_for(threads, threads, [&](std::size_t wlo, std::size_t whi) {
      for (std::size_t w = wlo; w < whi; ++w) {
        const std::size_t lo = std::min(states.size(), w * chunk);
        const std::size_t hi = std::min(states.size(), lo + chunk);
        StepWorkspace work(d);
        Vec z(D);
        Vec child_z(D);
        Vec x;
        Vec m;
        Vec child(d);
        bool interp = false;
        for (std::size_t i = lo; i < hi; ++i) {
          states.coordinates(i, z);
          split(z, x, m);
          double cont = 0.0;
          for (std::size_t a = 0; a < support.size() && !std::isnan(cont); ++a) {
            child = x;
            step_in_place(child, support.atoms[a], model.eps, model.field, work);
            child_z.head(d) = child;
            if (extremum) {
              if (markov.state == MarkovState::running_max) {
                child_z.tail(d) = m.cwiseMax(child);
              } else {
                child_z.tail(d) = m.cwiseMin(child);
              }
            }
            cont += support.stationary[a] * states.interpolate(next, child_z, interp);
          }
          if (std::isnan(cont)) {
            current[i] = kNaN;
            continue;
          }
          const double f = markov.F(t, x, m);
          const double g = game ? markov.G(t, x, m) : kNaN;
          const NodeOutcome out = resolve(f, g, cont, options.rule);
          if (out.violation) ++violations[w];
          current[i] = out.value;
          if (options.record_regions) regions[i] = static_cast<std::uint8_t>(out.region);
        }
        if (interp) interpolated[w] = 1;
      }
    });
    for (auto v : violations) result.diagnostics.sandwich_violations += v;
    if (std::any_of(interpolated.begin(), interpolated.end(), [](char c) { return c != 0; })) {
      ++result.diagnostics.interpolated_steps;
    }
    if (options.record_regions) {
      Vec z(D);
      for (std::size_t i = 0; i < states.size(); ++i) {
        if (std::isnan(current[i])) continue;
        states.coordinates(i, z);
        result.stop_regions.push_back({n, z, static_cast<Region>(regions[i])});
      }
    }
    std::swap(current, next);
  }

  Vec z0(D);
  z0.head(d) = model.x0;
  if (extremum) z0.tail(d) = model.x0;
  bool interp = false;
  result.value = states.interpolate(next, z0, interp);
  if (std::isnan(result.value)) {
    throw Error(ErrorCode::boundary_escape, "reachable states leave the grid; enlarge the grid bounds");
  }
  result.diagnostics.interpolation_bound =
      payoffs.lipschitz_K * states.max_spacing() * static_cast<double>(result.diagnostics.interpolated_steps);
  return result;
}

ValuationResult american_value(const PayoffPair& payoffs, const GameModel& model, EngineKind engine,
                               const std::optional<GridSpec>& grid) {
  if (engine == EngineKind::tree) {
    TreeOptions options;
    options.rule = StoppingRule::american;
    return value_exact_tree(payoffs, model, options);
  }
  GridOptions options;
  options.rule = StoppingRule::american;
  return value_markov_grid(payoffs, model, grid ? *grid : auto_grid(model), options);
}

}  // namespace diffgame
