#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>

#include "errors.hpp"

namespace esdg {

template <int Dim>
using State = std::array<double, Dim + 2>;

template <int Dim>
using FluxVector = std::array<State<Dim>, Dim>;

constexpr double kDefaultGamma = 1.4;

template <int Dim>
double kinetic_energy(const State<Dim>& u) {
  double k = 0.0;
  for (int i = 0; i < Dim; ++i) k += u[1 + i] * u[1 + i];
  return 0.5 * k / u[0];
}

template <int Dim>
double pressure(const State<Dim>& u, double gamma = kDefaultGamma) {
  return (gamma - 1.0) * (u[Dim + 1] - kinetic_energy<Dim>(u));
}

template <int Dim>
bool is_admissible(const State<Dim>& u, double gamma = kDefaultGamma) {
  if (!(u[0] > 0.0)) return false;
  return pressure<Dim>(u, gamma) > 0.0;
}

template <int Dim>
void require_admissible(const State<Dim>& u, double gamma, const char* where) {
  if (!is_admissible<Dim>(u, gamma)) throw DomainError(std::string(where) + ": inadmissible state (rho <= 0 or p <= 0)");
}

template <int Dim>
State<Dim> conservative_from_primitive(double rho, const std::array<double, Dim>& vel, double p,
                                       double gamma = kDefaultGamma) {
  State<Dim> u{};
  u[0] = rho;
  double k = 0.0;
  for (int i = 0; i < Dim; ++i) {
    u[1 + i] = rho * vel[i];
    k += vel[i] * vel[i];
  }
  u[Dim + 1] = p / (gamma - 1.0) + 0.5 * rho * k;
  return u;
}

template <int Dim>
double entropy(const State<Dim>& u, double gamma = kDefaultGamma) {
  require_admissible<Dim>(u, gamma, "entropy");
  const double p = pressure<Dim>(u, gamma);
  const double s = std::log(p / std::pow(u[0], gamma));
  return -u[0] * s / (gamma - 1.0);
}

template <int Dim>
State<Dim> entropy_variables(const State<Dim>& u, double gamma = kDefaultGamma) {
  require_admissible<Dim>(u, gamma, "entropy_variables");
  const double rho = u[0];
  const double rhoe = u[Dim + 1] - kinetic_energy<Dim>(u);
  const double p = (gamma - 1.0) * rhoe;
  const double s = std::log(p / std::pow(rho, gamma));
  State<Dim> v{};
  v[0] = (rhoe * (gamma + 1.0 - s) - u[Dim + 1]) / rhoe;
  for (int i = 0; i < Dim; ++i) v[1 + i] = u[1 + i] / rhoe;
  v[Dim + 1] = -rho / rhoe;
  return v;
}

template <int Dim>
State<Dim> conservative_from_entropy(const State<Dim>& v, double gamma = kDefaultGamma) {
  const double vl = v[Dim + 1];
  if (!(vl < 0.0)) throw DomainError("conservative_from_entropy: last entropy variable must be negative");
  double vv = 0.0;
  for (int i = 0; i < Dim; ++i) vv += v[1 + i] * v[1 + i];
  const double s = gamma - v[0] + vv / (2.0 * vl);
  const double rhoe = std::pow((gamma - 1.0) / std::pow(-vl, gamma), 1.0 / (gamma - 1.0)) * std::exp(-s / (gamma - 1.0));
  State<Dim> u{};
  u[0] = -rhoe * vl;
  for (int i = 0; i < Dim; ++i) u[1 + i] = rhoe * v[1 + i];
  u[Dim + 1] = rhoe * (1.0 - vv / (2.0 * vl));
  return u;
}

/// @brief Entropy potential paired with entropy_variables. The variables above are
/// (gamma-1) times the gradient of S, so the potential carries the same factor.
template <int Dim>
double entropy_potential(const State<Dim>& u, int i, double gamma = kDefaultGamma) {
  return (gamma - 1.0) * u[1 + i];
}

/// @brief Logarithmic mean (a-b)/(log a - log b), series branch near a = b.
inline double log_mean(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("log_mean: arguments must be positive");
  if (a < b) std::swap(a, b);
  const double f = (a - b) / (a + b);
  const double z = f * f;
  if (z < 1e-4) {
    const double F = 1.0 + z * (1.0 / 3.0 + z * (1.0 / 5.0 + z * (1.0 / 7.0 + z / 9.0)));
    return 0.5 * (a + b) / F;
  }
  return (a - b) / std::log(a / b);
}

/// @brief Primitive quantities cached per node for flux evaluation.
template <int Dim>
struct Primitive {
  double rho;
  std::array<double, Dim> vel;
  double p;
  double beta;  // rho / (2 p)
  double vel2;
  double log_rho;
  double log_beta;
};

/// @brief Logarithmic mean from cached logarithms of the arguments.
inline double log_mean_cached(double a, double b, double la, double lb) {
  if (a < b) {
    std::swap(a, b);
    std::swap(la, lb);
  }
  const double f = (a - b) / (a + b);
  const double z = f * f;
  if (z < 1e-4) {
    const double F = 1.0 + z * (1.0 / 3.0 + z * (1.0 / 5.0 + z * (1.0 / 7.0 + z / 9.0)));
    return 0.5 * (a + b) / F;
  }
  return (a - b) / (la - lb);
}

template <int Dim>
Primitive<Dim> primitive(const State<Dim>& u, double gamma = kDefaultGamma) {
  Primitive<Dim> q;
  q.rho = u[0];
  q.vel2 = 0.0;
  for (int i = 0; i < Dim; ++i) {
    q.vel[i] = u[1 + i] / u[0];
    q.vel2 += q.vel[i] * q.vel[i];
  }
  q.p = (gamma - 1.0) * (u[Dim + 1] - 0.5 * q.rho * q.vel2);
  q.beta = q.rho / (2.0 * q.p);
  q.log_rho = std::log(q.rho);
  q.log_beta = std::log(q.beta);
  return q;
}

/// @brief Chandrashekar flux contracted with a direction: sum_i n_i f_{i,S}(L, R).
template <int Dim>
State<Dim> ec_flux_normal(const Primitive<Dim>& L, const Primitive<Dim>& R, const double* n,
                          double gamma = kDefaultGamma) {
  const double rho_log = log_mean_cached(L.rho, R.rho, L.log_rho, R.log_rho);
  const double beta_log = log_mean_cached(L.beta, R.beta, L.log_beta, R.log_beta);
  const double rho_avg = 0.5 * (L.rho + R.rho);
  const double beta_avg = 0.5 * (L.beta + R.beta);
  const double p_avg = rho_avg / (2.0 * beta_avg);
  std::array<double, Dim> ua;
  double un = 0.0, uu = 0.0;
  for (int j = 0; j < Dim; ++j) {
    ua[j] = 0.5 * (L.vel[j] + R.vel[j]);
    un += ua[j] * n[j];
    uu += L.vel[j] * R.vel[j];
  }
  const double E_avg = rho_log / (2.0 * beta_log * (gamma - 1.0)) + 0.5 * rho_log * uu;
  State<Dim> f{};
  f[0] = rho_log * un;
  for (int j = 0; j < Dim; ++j) f[1 + j] = f[0] * ua[j] + p_avg * n[j];
  f[Dim + 1] = (E_avg + p_avg) * un;
  return f;
}

template <int Dim>
FluxVector<Dim> ec_flux(const State<Dim>& uL, const State<Dim>& uR, double gamma = kDefaultGamma) {
  require_admissible<Dim>(uL, gamma, "ec_flux");
  require_admissible<Dim>(uR, gamma, "ec_flux");
  const auto L = primitive<Dim>(uL, gamma), R = primitive<Dim>(uR, gamma);
  FluxVector<Dim> F;
  for (int i = 0; i < Dim; ++i) {
    double n[3] = {0, 0, 0};
    n[i] = 1.0;
    F[i] = ec_flux_normal<Dim>(L, R, n, gamma);
  }
  return F;
}

inline FluxVector<2> ec_flux_2d(const State<2>& uL, const State<2>& uR, double gamma = kDefaultGamma) {
  return ec_flux<2>(uL, uR, gamma);
}

inline FluxVector<3> ec_flux_3d(const State<3>& uL, const State<3>& uR, double gamma = kDefaultGamma) {
  return ec_flux<3>(uL, uR, gamma);
}

/// @brief Analytic Euler flux f_i(u).
template <int Dim>
FluxVector<Dim> euler_flux(const State<Dim>& u, double gamma = kDefaultGamma) {
  const double p = pressure<Dim>(u, gamma);
  FluxVector<Dim> F;
  for (int i = 0; i < Dim; ++i) {
    const double ui = u[1 + i] / u[0];
    F[i][0] = u[1 + i];
    for (int j = 0; j < Dim; ++j) F[i][1 + j] = u[1 + j] * ui + (i == j ? p : 0.0);
    F[i][Dim + 1] = (u[Dim + 1] + p) * ui;
  }
  return F;
}

template <int Dim>
State<Dim> lax_friedrichs_penalty(const State<Dim>& u_in, const State<Dim>& u_ext, double lambda) {
  State<Dim> r{};
  for (int k = 0; k < Dim + 2; ++k) r[k] = -0.5 * lambda * (u_ext[k] - u_in[k]);
  return r;
}

template <int Dim>
double wavespeed(const Primitive<Dim>& q, double gamma = kDefaultGamma) {
  return std::sqrt(q.vel2) + std::sqrt(gamma * q.p / q.rho);
}

template <int Dim>
double max_wavespeed(const State<Dim>& uL, const State<Dim>& uR, double gamma = kDefaultGamma) {
  return std::max(wavespeed<Dim>(primitive<Dim>(uL, gamma), gamma), wavespeed<Dim>(primitive<Dim>(uR, gamma), gamma));
}

}  // namespace esdg
