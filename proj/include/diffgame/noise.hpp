#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "diffgame/linalg.hpp"
#include "diffgame/random.hpp"

namespace diffgame {

/// Declared upper bound u -> phi(u) on the phi-mixing coefficient of a
/// stationary sequence, with the tail and moment functionals built on it.
class MixingProfile {
 public:
  /// phi(0) = 1 and phi(u) = 0 for u >= 1.
  static MixingProfile independent();
  /// phi(0) = 1 and phi(u) = min(rate^u, cap) for u >= 1; rate in [0, 1).
  static MixingProfile geometric(double rate, double cap);

  double phi(std::uint64_t u) const;

  /// Sum of phi(r) over r > n, in closed form.
  double tail_sum(std::uint64_t n) const;

  /// D = sup_{u >= 0} phi(u) (u^{2M} + u^4). Infinite if the sup overflows.
  double moment_constant_D(int M) const;

  bool is_independent() const { return rate_ == 0.0; }
  double rate() const { return rate_; }
  double cap() const { return cap_; }

 private:
  MixingProfile(double rate, double cap) : rate_(rate), cap_(cap) {}

  double rate_;
  double cap_;
};

/// Finite state-space description of a stationary noise sequence as a
/// Markov chain over atoms. For i.i.d. noise every row of `transition`
/// equals `stationary`.
struct FiniteSupport {
  std::vector<Vec> atoms;
  Vec stationary;
  Mat transition;  // may be empty for large i.i.d. supports
  bool independent = false;

  std::size_t size() const { return atoms.size(); }
};

enum class NoiseKind { rademacher, markov2 };

class NoiseSampler;

/// Stationary mean-zero noise xi(n) in R^d. Immutable once built; draw
/// sequences through `sampler`.
class NoiseModel {
 public:
  /// I.i.d. vectors with independent components equal to +scale or -scale
  /// with probability 1/2 each. Throws invalid_dimension when d == 0.
  static NoiseModel rademacher(int d, double scale = 1.0);

  /// Symmetric two-state chain on {+1, -1} flipping sign with probability
  /// p each step, started from its uniform stationary law.
  static NoiseModel two_state_markov(double p);

  int dim() const { return dim_; }
  NoiseKind kind() const { return kind_; }
  std::string name() const;
  bool independent() const { return mixing_.is_independent(); }

  const Vec& mean() const { return mean_; }
  const Mat& covariance() const { return covariance_; }
  const MixingProfile& mixing() const { return mixing_; }
  double phi_bound(std::uint64_t u) const { return mixing_.phi(u); }

  /// Declared E xi(r) xi(0)^T.
  Mat autocovariance(std::uint64_t r) const;

  /// sup |xi| over the support.
  double max_norm() const;

  /// Atom list with chain law; empty when the support is too large to
  /// enumerate (Rademacher with d > max_enumerated_dim).
  const std::optional<FiniteSupport>& support() const { return support_; }

  double scale() const { return scale_; }
  double flip_probability() const { return flip_; }

  NoiseSampler sampler(std::uint64_t seed, std::uint64_t stream = 0) const;

  static constexpr int max_enumerated_dim = 16;

 private:
  NoiseModel(NoiseKind kind, int dim, MixingProfile mixing)
      : kind_(kind), dim_(dim), mixing_(mixing) {}

  NoiseKind kind_;
  int dim_;
  double scale_ = 1.0;
  double flip_ = 0.5;
  Vec mean_;
  Mat covariance_;
  MixingProfile mixing_;
  std::optional<FiniteSupport> support_;
};

/// Single-owner generator of one stationary noise stream.
class NoiseSampler {
 public:
  /// Advances and returns the next value; the first call yields xi(0).
  const Vec& next();

  /// Index into the model's atom list of the value last returned.
  std::size_t atom_index() const { return atom_; }

 private:
  friend class NoiseModel;
  NoiseSampler(const NoiseModel& model, Engine engine);

  NoiseKind kind_;
  int dim_;
  double scale_;
  double flip_;
  Engine engine_;
  Vec value_;
  std::size_t atom_ = 0;
  bool started_ = false;
};

}  // namespace diffgame
