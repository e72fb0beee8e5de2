#include "diffgame/noise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "diffgame/error.hpp"

namespace diffgame {

MixingProfile MixingProfile::independent() { return MixingProfile(0.0, 0.0); }

MixingProfile MixingProfile::geometric(double rate, double cap) {
  if (!(rate >= 0.0 && rate < 1.0) || !(cap > 0.0 && cap <= 1.0)) {
    throw Error(ErrorCode::invalid_parameter, "geometric mixing profile needs rate in [0,1), cap in (0,1]");
  }
  return MixingProfile(rate, rate == 0.0 ? 0.0 : cap);
}

double MixingProfile::phi(std::uint64_t u) const {
  if (u == 0) return 1.0;
  if (rate_ == 0.0) return 0.0;
  return std::min(std::pow(rate_, static_cast<double>(u)), cap_);
}

double MixingProfile::tail_sum(std::uint64_t n) const {
  if (rate_ == 0.0) return 0.0;
  // First lag at which the geometric term drops to the cap or below.
  std::uint64_t knee = 1;
  while (std::pow(rate_, static_cast<double>(knee)) > cap_) ++knee;
  double total = 0.0;
  const std::uint64_t first = n + 1;
  if (first < knee) total += cap_ * static_cast<double>(knee - first);
  const std::uint64_t start = std::max(first, knee);
  total += std::pow(rate_, static_cast<double>(start)) / (1.0 - rate_);
  return total;
}

double MixingProfile::moment_constant_D(int M) const {
  if (M < 1) throw Error(ErrorCode::invalid_parameter, "moment order M must be >= 1");
  if (rate_ == 0.0) return 0.0;  // only u = 0 survives and contributes 0
  const double p = 2.0 * M;
  // u^{2M} rate^u peaks near 2M / ln(1/rate); scan well past it.
  const double peak = p / -std::log(rate_);
  const auto limit = static_cast<std::uint64_t>(std::min(1e8, 4.0 * peak + 64.0));
  double best = 0.0;
  for (std::uint64_t u = 1; u <= limit; ++u) {
    const double x = static_cast<double>(u);
    const double value = phi(u) * (std::pow(x, p) + std::pow(x, 4.0));
    if (!std::isfinite(value)) return std::numeric_limits<double>::infinity();
    best = std::max(best, value);
  }
  return best;
}

NoiseModel NoiseModel::rademacher(int d, double scale) {
  if (d < 1) throw Error(ErrorCode::invalid_dimension, "rademacher noise needs d >= 1");
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorCode::invalid_parameter, "rademacher scale must be positive");
  }
  NoiseModel model(NoiseKind::rademacher, d, MixingProfile::independent());
  model.scale_ = scale;
  model.mean_ = Vec::Zero(d);
  model.covariance_ = Mat::Identity(d, d) * (scale * scale);
  if (d <= max_enumerated_dim) {
    const std::size_t count = std::size_t{1} << d;
    FiniteSupport support;
    support.independent = true;
    support.atoms.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
      Vec atom(d);
      for (int j = 0; j < d; ++j) atom[j] = ((k >> j) & 1U) ? -scale : scale;
      support.atoms.push_back(std::move(atom));
    }
    support.stationary = Vec::Constant(static_cast<Eigen::Index>(count), 1.0 / static_cast<double>(count));
    // Rows of an i.i.d. chain all equal the stationary law; kept implicit
    // for large d to avoid a 2^d x 2^d matrix.
    if (d <= 6) support.transition = support.stationary.transpose().replicate(static_cast<Eigen::Index>(count), 1);
    model.support_ = std::move(support);
  }
  return model;
}

NoiseModel NoiseModel::two_state_markov(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorCode::invalid_parameter, "two_state_markov needs flip probability in (0,1)");
  }
  const double rate = std::abs(1.0 - 2.0 * p);
  // |1-2p|^u bounds the L1 distance of the u-step law from stationarity;
  // phi itself is half that distance, hence never above 1/2.
  NoiseModel model(NoiseKind::markov2, 1, MixingProfile::geometric(rate, 0.5));
  model.flip_ = p;
  model.mean_ = Vec::Zero(1);
  model.covariance_ = Mat::Identity(1, 1);
  FiniteSupport support;
  support.atoms = {Vec::Constant(1, 1.0), Vec::Constant(1, -1.0)};
  support.stationary = Vec::Constant(2, 0.5);
  support.transition.resize(2, 2);
  support.transition << 1.0 - p, p, p, 1.0 - p;
  support.independent = (p == 0.5);
  model.support_ = std::move(support);
  return model;
}

std::string NoiseModel::name() const {
  std::ostringstream out;
  out.precision(17);
  switch (kind_) {
    case NoiseKind::rademacher:
      out << "rademacher(d=" << dim_ << ",scale=" << scale_ << ")";
      break;
    case NoiseKind::markov2:
      out << "markov2(p=" << flip_ << ")";
      break;
  }
  return out.str();
}

Mat NoiseModel::autocovariance(std::uint64_t r) const {
  switch (kind_) {
    case NoiseKind::rademacher:
      return r == 0 ? covariance_ : Mat::Zero(dim_, dim_);
    case NoiseKind::markov2:
      return Mat::Constant(1, 1, std::pow(1.0 - 2.0 * flip_, static_cast<double>(r)));
  }
  return Mat::Zero(dim_, dim_);
}

double NoiseModel::max_norm() const {
  switch (kind_) {
    case NoiseKind::rademacher: return scale_ * std::sqrt(static_cast<double>(dim_));
    case NoiseKind::markov2: return 1.0;
  }
  return 0.0;
}

NoiseSampler NoiseModel::sampler(std::uint64_t seed, std::uint64_t stream) const {
  return NoiseSampler(*this, make_engine(seed, stream));
}

NoiseSampler::NoiseSampler(const NoiseModel& model, Engine engine)
    : kind_(model.kind()),
      dim_(model.dim()),
      scale_(model.scale()),
      flip_(model.flip_probability()),
      engine_(std::move(engine)),
      value_(Vec::Zero(model.dim())) {}

const Vec& NoiseSampler::next() {
  switch (kind_) {
    case NoiseKind::rademacher: {
      atom_ = 0;
      std::uint64_t bits = 0;
      for (int j = 0; j < dim_; ++j) {
        if (j % 64 == 0) bits = engine_();
        const bool negative = (bits >> (j % 64)) & 1U;
        value_[j] = negative ? -scale_ : scale_;
        if (negative && j < 64) atom_ |= std::size_t{1} << j;
      }
      break;
    }
    case NoiseKind::markov2: {
      if (!started_) {
        atom_ = (engine_() >> 63) ? 1 : 0;
      } else if (uniform01(engine_) < flip_) {
        atom_ ^= 1U;
      }
      value_[0] = atom_ == 0 ? 1.0 : -1.0;
      break;
    }
  }
  started_ = true;
  return value_;
}

}  // namespace diffgame
