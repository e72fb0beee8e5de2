#include "diffgame/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "diffgame/error.hpp"

namespace diffgame {

namespace {

double crr_put(double S0, double K, double r, double sigma, double T, std::size_t N, bool american) {
  if (!(S0 > 0.0) || !(K > 0.0) || !(sigma > 0.0) || !(T > 0.0) || N == 0) {
    throw Error(ErrorCode::invalid_parameter, "lattice needs S0, K, sigma, T > 0 and N >= 1");
  }
  const double dt = T / static_cast<double>(N);
  const double u = std::exp(sigma * std::sqrt(dt));
  const double d = 1.0 / u;
  const double growth = std::exp(r * dt);
  const double q = (growth - d) / (u - d);
  if (!(q > 0.0 && q < 1.0)) throw Error(ErrorCode::invalid_parameter, "lattice probability outside (0, 1)");
  const double disc = 1.0 / growth;

  std::vector<double> v(N + 1);
  for (std::size_t j = 0; j <= N; ++j) {
    const double S = S0 * std::pow(u, 2.0 * static_cast<double>(j) - static_cast<double>(N));
    v[j] = std::max(K - S, 0.0);
  }
  for (std::size_t n = N; n-- > 0;) {
    for (std::size_t j = 0; j <= n; ++j) {
      double cont = disc * (q * v[j + 1] + (1.0 - q) * v[j]);
      if (american) {
        const double S = S0 * std::pow(u, 2.0 * static_cast<double>(j) - static_cast<double>(n));
        cont = std::max(cont, K - S);
      }
      v[j] = cont;
    }
  }
  return v[0];
}

}  // namespace

double crr_american_put(double S0, double K, double r, double sigma, double T, std::size_t N) {
  return crr_put(S0, K, r, sigma, T, N, true);
}

double crr_european_put(double S0, double K, double r, double sigma, double T, std::size_t N) {
  return crr_put(S0, K, r, sigma, T, N, false);
}

}  // namespace diffgame
