#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "diffgame/error.hpp"
#include "diffgame/noise.hpp"

using namespace diffgame;

namespace {

// sup over starting states of the total-variation distance between the
// u-step law and the stationary law, from explicit matrix powers.
double tv_mixing(const Mat& P, const Vec& pi, int u) {
  Mat Pu = Mat::Identity(P.rows(), P.cols());
  for (int i = 0; i < u; ++i) Pu = Pu * P;
  double worst = 0;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    worst = std::max(worst, 0.5 * (Pu.row(i).transpose() - pi).cwiseAbs().sum());
  }
  return worst;
}

// E xi(0) xi(r) by summing over every r+1 step path of the chain.
double path_sum_autocovariance(double p, int r) {
  const double atoms[2] = {1.0, -1.0};
  double total = 0;
  for (unsigned mask = 0; mask < (1U << (r + 1)); ++mask) {
    double prob = 0.5;
    for (int k = 0; k < r; ++k) {
      const bool flip = ((mask >> k) & 1U) != ((mask >> (k + 1)) & 1U);
      prob *= flip ? p : 1.0 - p;
    }
    total += prob * atoms[mask & 1U] * atoms[(mask >> r) & 1U];
  }
  return total;
}

}  // namespace

TEST(Rademacher, OneDimensionalSupport) {
  const NoiseModel m = NoiseModel::rademacher(1);
  ASSERT_TRUE(m.support());
  const auto& s = *m.support();
  ASSERT_EQ(s.size(), 2U);
  for (std::size_t a = 0; a < 2; ++a) {
    EXPECT_DOUBLE_EQ(s.stationary[a], 0.5);
    EXPECT_DOUBLE_EQ(std::abs(s.atoms[a][0]), 1.0);
  }
  EXPECT_EQ(s.atoms[0][0] + s.atoms[1][0], 0.0);
  EXPECT_EQ(m.mean()[0], 0.0);
}

TEST(Rademacher, IdentityCovariance) {
  const NoiseModel m = NoiseModel::rademacher(2);
  EXPECT_TRUE(m.covariance().isApprox(Mat::Identity(2, 2)));
  EXPECT_EQ(m.support()->size(), 4U);
}

TEST(Rademacher, AtomsSumToOneAndAreCentered) {
  for (int d = 1; d <= 6; ++d) {
    const NoiseModel m = NoiseModel::rademacher(d);
    const auto& s = *m.support();
    EXPECT_NEAR(s.stationary.sum(), 1.0, 1e-12);
    Vec mean = Vec::Zero(d);
    for (std::size_t a = 0; a < s.size(); ++a) mean += s.stationary[a] * s.atoms[a];
    EXPECT_EQ(mean.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Rademacher, MomentConstantByDefinition) {
  const NoiseModel m = NoiseModel::rademacher(1);
  for (int M = 1; M <= 4; ++M) {
    double sup = 0;
    for (int u = 0; u <= 200; ++u) {
      sup = std::max(sup, m.phi_bound(u) * (std::pow(u, 2 * M) + std::pow(u, 4)));
    }
    EXPECT_DOUBLE_EQ(m.mixing().moment_constant_D(M), sup);
  }
}

TEST(Rademacher, ZeroDimensionRejected) {
  try {
    NoiseModel::rademacher(0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_dimension);
  }
}

TEST(Rademacher, PhiVanishesAfterLagZero) {
  const NoiseModel m = NoiseModel::rademacher(3);
  EXPECT_EQ(m.phi_bound(1), 0.0);
  EXPECT_LE(m.phi_bound(0), 1.0);
  for (int u = 1; u <= 100; ++u) EXPECT_EQ(m.phi_bound(u), 0.0);
}

TEST(Rademacher, EmpiricalCovarianceOfMillionSamples) {
  const int d = 3;
  const NoiseModel m = NoiseModel::rademacher(d);
  auto sampler = m.sampler(42);
  Mat cov = Mat::Zero(d, d);
  Vec mean = Vec::Zero(d);
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const Vec& x = sampler.next();
    cov += x * x.transpose();
    mean += x;
  }
  cov /= n;
  mean /= n;
  EXPECT_LT((cov - Mat::Identity(d, d)).cwiseAbs().maxCoeff(), 0.01);
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 3.0 * 3.0 / std::sqrt(n));
}

TEST(Markov, HalfFlipIsIndependent) {
  const NoiseModel m = NoiseModel::two_state_markov(0.5);
  EXPECT_EQ(m.autocovariance(1)(0, 0), 0.0);
}

TEST(Markov, LagOneAutocovarianceMatchesPathSum) {
  const NoiseModel m = NoiseModel::two_state_markov(0.25);
  EXPECT_DOUBLE_EQ(m.autocovariance(1)(0, 0), 0.5);
  for (double p : {0.1, 0.25, 0.6, 0.9}) {
    const NoiseModel mp = NoiseModel::two_state_markov(p);
    for (int r = 0; r <= 6; ++r) EXPECT_NEAR(mp.autocovariance(r)(0, 0), path_sum_autocovariance(p, r), 1e-14);
  }
}

TEST(Markov, PhiBoundsTotalVariationOfMatrixPowers) {
  const NoiseModel m = NoiseModel::two_state_markov(0.25);
  EXPECT_DOUBLE_EQ(m.phi_bound(2), 0.25);
  EXPECT_DOUBLE_EQ(m.phi_bound(3), 0.125);
  for (double p : {0.05, 0.25, 0.5, 0.75, 0.95}) {
    const NoiseModel mp = NoiseModel::two_state_markov(p);
    const auto& s = *mp.support();
    for (int u = 1; u <= 30; ++u) {
      EXPECT_GE(mp.phi_bound(u) + 1e-15, tv_mixing(s.transition, s.stationary, u)) << "p=" << p << " u=" << u;
    }
  }
  // At p = 0.25 the declared bound is twice the true coefficient for u >= 1.
  const auto& s = *m.support();
  EXPECT_NEAR(m.phi_bound(3), 2.0 * tv_mixing(s.transition, s.stationary, 3), 1e-15);
}

TEST(Markov, PhiMonotoneAndWithinHalf) {
  for (double p : {0.01, 0.1, 0.25, 0.5, 0.8, 0.99}) {
    const NoiseModel m = NoiseModel::two_state_markov(p);
    EXPECT_LE(m.phi_bound(0), 1.0);
    for (int u = 0; u < 100; ++u) {
      EXPECT_LE(m.phi_bound(u + 1), m.phi_bound(u));
      if (u >= 1) {
        EXPECT_GE(m.phi_bound(u), 0.0);
        EXPECT_LE(m.phi_bound(u), 0.5);
      }
    }
  }
}

TEST(Markov, FlipProbabilityOutsideUnitIntervalRejected) {
  for (double p : {0.0, 1.0, -0.1, 1.5}) {
    try {
      NoiseModel::two_state_markov(p);
      FAIL() << p;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::invalid_parameter);
    }
  }
}

TEST(Markov, EmpiricalAutocovarianceWithinThreeStandardErrors) {
  const double p = 0.25;
  const NoiseModel m = NoiseModel::two_state_markov(p);
  const int n = 400000;
  auto sampler = m.sampler(7);
  std::vector<double> xs(n);
  for (int i = 0; i < n; ++i) xs[i] = sampler.next()[0];
  for (int r = 0; r <= 5; ++r) {
    // Products x_i x_{i+r} are themselves correlated; use batch means for the SE.
    const int batches = 100;
    const int len = (n - r) / batches;
    std::vector<double> means(batches, 0.0);
    for (int b = 0; b < batches; ++b) {
      for (int i = b * len; i < (b + 1) * len; ++i) means[b] += xs[i] * xs[i + r];
      means[b] /= len;
    }
    double mean = 0;
    for (double v : means) mean += v / batches;
    double var = 0;
    for (double v : means) var += (v - mean) * (v - mean) / (batches - 1);
    const double se = std::sqrt(var / batches);
    EXPECT_NEAR(mean, std::pow(1 - 2 * p, r), 3 * se + 1e-12) << "r=" << r;
  }
}

TEST(Markov, PairLawIsStationary) {
  // Sampled frequencies of (xi(n), xi(n+1)) at n = 0 and n = 7 agree with
  // pi_a P_ab within sampling error.
  const double p = 0.3;
  const NoiseModel m = NoiseModel::two_state_markov(p);
  const auto& s = *m.support();
  const int reps = 200000;
  for (int n : {0, 7}) {
    Mat counts = Mat::Zero(2, 2);
    for (int rep = 0; rep < reps; ++rep) {
      auto sampler = m.sampler(11, rep);
      for (int k = 0; k < n; ++k) sampler.next();
      sampler.next();
      const std::size_t a = sampler.atom_index();
      sampler.next();
      counts(a, sampler.atom_index()) += 1.0 / reps;
    }
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const double expected = s.stationary[a] * s.transition(a, b);
        EXPECT_NEAR(counts(a, b), expected, 4 * std::sqrt(expected * (1 - expected) / reps));
      }
    }
  }
}

TEST(Mixing, TailSumMatchesDirectSum) {
  for (double p : {0.1, 0.25, 0.4}) {
    const NoiseModel m = NoiseModel::two_state_markov(p);
    for (int n : {0, 1, 2, 5, 20}) {
      double direct = 0;
      for (int r = n + 1; r < 5000; ++r) direct += m.phi_bound(r);
      EXPECT_NEAR(m.mixing().tail_sum(n), direct, 1e-12 * std::max(1.0, direct));
    }
  }
}

TEST(Mixing, MomentConstantFiniteForMarkov) {
  const NoiseModel m = NoiseModel::two_state_markov(0.25);
  for (int M = 1; M <= 3; ++M) {
    double sup = 0;
    for (int u = 0; u <= 2000; ++u) sup = std::max(sup, m.phi_bound(u) * (std::pow(u, 2 * M) + std::pow(u, 4)));
    EXPECT_NEAR(m.mixing().moment_constant_D(M), sup, 1e-9 * sup);
  }
}

TEST(Sampler, SameSeedSameSequence) {
  const NoiseModel m = NoiseModel::two_state_markov(0.2);
  auto a = m.sampler(5, 3);
  auto b = m.sampler(5, 3);
  auto c = m.sampler(5, 4);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double x = a.next()[0];
    EXPECT_EQ(x, b.next()[0]);
    differs = differs || x != c.next()[0];
  }
  EXPECT_TRUE(differs);
}
