#pragma once

#include <cstddef>

namespace diffgame {

/// American put on a Cox-Ross-Rubinstein binomial lattice with N steps:
/// u = exp(sigma sqrt(T/N)), d = 1/u, risk-neutral up-probability
/// (exp(r dt) - d) / (u - d).
double crr_american_put(double S0, double K, double r, double sigma, double T, std::size_t N);

/// European put on the same lattice.
double crr_european_put(double S0, double K, double r, double sigma, double T, std::size_t N);

}  // namespace diffgame
