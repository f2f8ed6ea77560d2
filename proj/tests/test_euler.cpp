#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "esdg/euler.hpp"

using namespace esdg;

namespace {

template <int Dim>
State<Dim> random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> rho(0.1, 10.0), p(0.1, 10.0), dir(-1.0, 1.0), mag(0.0, 5.0);
  std::array<double, Dim> vel;
  double n2 = 0.0;
  for (auto& v : vel) {
    v = dir(rng);
    n2 += v * v;
  }
  const double s = mag(rng) / std::max(std::sqrt(n2), 1e-12);
  for (auto& v : vel) v *= s;
  return conservative_from_primitive<Dim>(rho(rng), vel, p(rng));
}

template <int Dim>
double max_abs(const State<Dim>& a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

template <int Dim>
void check_flux_properties(unsigned seed) {
  std::mt19937_64 rng(seed);
  for (int k = 0; k < 1000; ++k) {
    const auto uL = random_state<Dim>(rng), uR = random_state<Dim>(rng);
    const auto F = ec_flux<Dim>(uL, uR), Fs = ec_flux<Dim>(uR, uL);
    const auto FL = ec_flux<Dim>(uL, uL), fL = euler_flux<Dim>(uL);
    const auto vL = entropy_variables<Dim>(uL), vR = entropy_variables<Dim>(uR);
    for (int i = 0; i < Dim; ++i) {
      const double scale = 1.0 + max_abs<Dim>(fL[i]);
      for (int c = 0; c < Dim + 2; ++c) {
        EXPECT_NEAR(FL[i][c], fL[i][c], 1e-12 * scale);
        EXPECT_NEAR(F[i][c], Fs[i][c], 1e-14 * (1.0 + std::abs(F[i][c])));
      }
      double lhs = 0.0, mag = 0.0;
      for (int c = 0; c < Dim + 2; ++c) {
        lhs += (vL[c] - vR[c]) * F[i][c];
        mag += std::abs((vL[c] - vR[c]) * F[i][c]);
      }
      const double rhs = entropy_potential<Dim>(uL, i) - entropy_potential<Dim>(uR, i);
      EXPECT_NEAR(lhs, rhs, 1e-12 * (1.0 + mag));
    }
  }
}

long double log_mean_oracle(double a, double b) {
  const long double A = a, B = b;
  const long double f = (A - B) / (A + B);
  if (f == 0.0L) return A;
  if (std::abs(f) > 0.5L) return (A - B) / (std::log(A) - std::log(B));
  return 0.5L * (A + B) * f / std::atanh(f);
}

}  // namespace

TEST(Entropy, RestState) {
  const auto u = conservative_from_primitive<2>(1.0, {0.0, 0.0}, 1.0);
  EXPECT_NEAR(entropy<2>(u), 0.0, 1e-15);
  const auto v = entropy_variables<2>(u);
  EXPECT_NEAR(v[0], 1.4, 1e-14);
  EXPECT_NEAR(v[1], 0.0, 1e-15);
  EXPECT_NEAR(v[2], 0.0, 1e-15);
  EXPECT_NEAR(v[3], -0.4, 1e-15);
  const auto w = conservative_from_entropy<2>(v);
  EXPECT_NEAR(w[0], 1.0, 1e-14);
  EXPECT_NEAR(w[1], 0.0, 1e-15);
  EXPECT_NEAR(w[3], 2.5, 1e-14);
}

TEST(Entropy, DirectFormulaAndSymmetry) {
  const double rho = 1.7, p = 0.6, g = kDefaultGamma;
  const auto u = conservative_from_primitive<3>(rho, {0.3, -0.2, 0.9}, p);
  const auto um = conservative_from_primitive<3>(rho, {-0.3, 0.2, -0.9}, p);
  const double ref = -rho * std::log(p / std::pow(rho, g)) / (g - 1.0);
  EXPECT_NEAR(entropy<3>(u), ref, 1e-14);
  EXPECT_NEAR(entropy<3>(um), ref, 1e-14);
}

TEST(Entropy, InadmissibleStates) {
  State<2> bad{-1.0, 0.0, 0.0, 1.0};
  EXPECT_THROW(entropy<2>(bad), DomainError);
  EXPECT_THROW(entropy_variables<2>(bad), DomainError);
  State<2> v{1.0, 0.0, 0.0, 0.5};
  EXPECT_THROW(conservative_from_entropy<2>(v), DomainError);
  EXPECT_THROW(ec_flux_2d(bad, bad), DomainError);
}

TEST(Entropy, VariableSignFlip) {
  const auto u = conservative_from_primitive<2>(1.3, {0.4, -0.7}, 2.0);
  auto v = entropy_variables<2>(u);
  EXPECT_LT(v[3], 0.0);
  v[1] = -v[1];
  v[2] = -v[2];
  const auto w = conservative_from_entropy<2>(v);
  EXPECT_NEAR(w[0], u[0], 1e-13);
  EXPECT_NEAR(w[1], -u[1], 1e-13);
  EXPECT_NEAR(w[2], -u[2], 1e-13);
  EXPECT_NEAR(w[3], u[3], 1e-13);
}

TEST(Entropy, RoundTrip) {
  std::mt19937_64 rng(20240611);
  for (int k = 0; k < 1000; ++k) {
    const auto u = random_state<3>(rng);
    const auto v = entropy_variables<3>(u);
    const auto w = conservative_from_entropy<3>(v);
    const auto v2 = entropy_variables<3>(w);
    for (int c = 0; c < 5; ++c) {
      EXPECT_NEAR(w[c], u[c], 1e-13 * max_abs<3>(u));
      EXPECT_NEAR(v2[c], v[c], 1e-13 * max_abs<3>(v));
    }
  }
  std::mt19937_64 rng2(7);
  for (int k = 0; k < 1000; ++k) {
    const auto u = random_state<2>(rng2);
    const auto w = conservative_from_entropy<2>(entropy_variables<2>(u));
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(w[c], u[c], 1e-13 * max_abs<2>(u));
  }
}

TEST(Entropy, ChainRuleInTime) {
  const auto u0 = conservative_from_primitive<2>(1.2, {0.3, -0.4}, 0.9);
  const State<2> w{0.1, -0.2, 0.15, 0.3};
  const auto v = entropy_variables<2>(u0);
  // v is (gamma - 1) times the gradient of S
  double exact = 0.0;
  for (int c = 0; c < 4; ++c) exact += v[c] * w[c] / (kDefaultGamma - 1.0);
  double prev = 0.0;
  for (int k = 0; k < 4; ++k) {
    const double dt = 1e-2 / (1 << k);
    State<2> up = u0, um = u0;
    for (int c = 0; c < 4; ++c) {
      up[c] += dt * w[c];
      um[c] -= dt * w[c];
    }
    const double err = std::abs((entropy<2>(up) - entropy<2>(um)) / (2.0 * dt) - exact);
    if (k > 0) {
      EXPECT_NEAR(std::log2(prev / err), 2.0, 0.1);
    }
    prev = err;
  }
}

TEST(EntropyPotential, RestState) {
  const auto u = conservative_from_primitive<3>(2.0, {0.0, 0.0, 0.0}, 1.0);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(entropy_potential<3>(u, i), 0.0);
}

TEST(LogMean, Examples) {
  for (double x : {1e-8, 1.0, 1e8}) EXPECT_NEAR(log_mean(x, x), x, 1e-15 * x);
  EXPECT_NEAR(log_mean(1.0, std::exp(1.0)), std::exp(1.0) - 1.0, 1e-15);
  EXPECT_NEAR(log_mean(1.0, 1.0 + 1e-12), 1.0 + 0.5e-12, 1e-13);
  EXPECT_THROW(log_mean(0.0, 1.0), DomainError);
  EXPECT_THROW(log_mean(1.0, -2.0), DomainError);
}

TEST(LogMean, AgreesWithHighPrecisionOracle) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> expo(-16.0, 8.0), base(-3.0, 3.0);
  double worst = 0.0;
  for (int k = 0; k < 20000; ++k) {
    const double a = std::pow(10.0, base(rng));
    const double r = 1.0 + std::pow(10.0, expo(rng));
    const double b = a * r;
    const long double ref = log_mean_oracle(a, b);
    const double rel = static_cast<double>(std::abs((log_mean(a, b) - ref) / ref));
    worst = std::max(worst, rel);
    EXPECT_EQ(log_mean(a, b), log_mean(b, a));
  }
  EXPECT_LE(worst, 1e-14);
}

TEST(LogMean, CachedVariantMatches) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(0.1, 10.0);
  for (int k = 0; k < 1000; ++k) {
    const double a = d(rng), b = d(rng);
    EXPECT_NEAR(log_mean_cached(a, b, std::log(a), std::log(b)), log_mean(a, b), 1e-13 * log_mean(a, b));
  }
}

TEST(EcFlux, Properties2D) { check_flux_properties<2>(1234); }
TEST(EcFlux, Properties3D) { check_flux_properties<3>(5678); }

TEST(EcFlux, PlanarEmbedding) {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 100; ++k) {
    const auto a = random_state<2>(rng), b = random_state<2>(rng);
    const State<3> A{a[0], a[1], a[2], 0.0, a[3]}, B{b[0], b[1], b[2], 0.0, b[3]};
    const auto F2 = ec_flux_2d(a, b);
    const auto F3 = ec_flux_3d(A, B);
    for (int i = 0; i < 2; ++i) {
      const int map[4] = {0, 1, 2, 4};
      for (int c = 0; c < 4; ++c) EXPECT_NEAR(F3[i][map[c]], F2[i][c], 1e-14 * (1.0 + std::abs(F2[i][c])));
    }
    EXPECT_NEAR(F3[2][0], 0.0, 1e-14);
    EXPECT_NEAR(F3[2][4], 0.0, 1e-14);
  }
}

TEST(EcFlux, AxisPermutation) {
  std::mt19937_64 rng(12);
  for (int k = 0; k < 100; ++k) {
    const auto a = random_state<3>(rng), b = random_state<3>(rng);
    // cyclic relabeling x -> y -> z -> x
    const State<3> A{a[0], a[3], a[1], a[2], a[4]}, B{b[0], b[3], b[1], b[2], b[4]};
    const auto F = ec_flux_3d(a, b), G = ec_flux_3d(A, B);
    for (int i = 0; i < 3; ++i) {
      const auto& f = F[i];
      const auto& g = G[(i + 1) % 3];
      const double s = 1.0 + max_abs<3>(f);
      EXPECT_NEAR(g[0], f[0], 1e-13 * s);
      EXPECT_NEAR(g[1], f[3], 1e-13 * s);
      EXPECT_NEAR(g[2], f[1], 1e-13 * s);
      EXPECT_NEAR(g[3], f[2], 1e-13 * s);
      EXPECT_NEAR(g[4], f[4], 1e-13 * s);
    }
  }
}

TEST(Dissipation, LaxFriedrichsPenalty) {
  const auto a = conservative_from_primitive<2>(1.0, {0.1, 0.2}, 1.0);
  const auto b = conservative_from_primitive<2>(1.5, {-0.3, 0.2}, 0.7);
  for (double x : lax_friedrichs_penalty<2>(a, a, 2.0)) EXPECT_EQ(x, 0.0);
  for (double x : lax_friedrichs_penalty<2>(a, b, 0.0)) EXPECT_EQ(x, 0.0);
  const auto r = lax_friedrichs_penalty<2>(a, b, 1.7);
  double dot = 0.0, jump2 = 0.0;
  for (int c = 0; c < 4; ++c) {
    dot += r[c] * (b[c] - a[c]);
    jump2 += (b[c] - a[c]) * (b[c] - a[c]);
  }
  EXPECT_NEAR(dot, -0.85 * jump2, 1e-14);
}

TEST(Dissipation, MaxWavespeed) {
  const auto rest = conservative_from_primitive<2>(1.0, {0.0, 0.0}, 1.0);
  EXPECT_NEAR(max_wavespeed<2>(rest, rest), std::sqrt(1.4), 1e-15);
  const auto b = conservative_from_primitive<2>(0.5, {2.0, 0.0}, 3.0);
  EXPECT_EQ(max_wavespeed<2>(rest, b), max_wavespeed<2>(b, rest));
  const auto shifted = conservative_from_primitive<2>(1.0, {0.6, -0.8}, 1.0);
  EXPECT_LE(max_wavespeed<2>(shifted, shifted) - max_wavespeed<2>(rest, rest), 1.0 + 1e-14);
}
