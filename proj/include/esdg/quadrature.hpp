#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace esdg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class NodeKind { Lobatto, Gauss };

inline std::string to_string(NodeKind k) { return k == NodeKind::Gauss ? "gauss" : "lobatto"; }

inline NodeKind parse_node_kind(const std::string& s) {
  if (s == "gauss") return NodeKind::Gauss;
  if (s == "lobatto") return NodeKind::Lobatto;
  throw InvalidArgument("unknown quadrature kind '" + s + "'");
}

struct Quadrature1D {
  NodeKind kind = NodeKind::Gauss;
  std::vector<double> nodes;
  std::vector<double> weights;

  int size() const { return static_cast<int>(nodes.size()); }
  // polynomial degree N of the collocated basis
  int degree() const { return size() - 1; }
};

namespace detail {

// Legendre P_n and its first derivative at x
inline void legendre(int n, double x, double& p, double& dp) {
  double p0 = 1.0, p1 = x;
  if (n == 0) {
    p = 1.0;
    dp = 0.0;
    return;
  }
  for (int k = 2; k <= n; ++k) {
    double pk = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
    p0 = p1;
    p1 = pk;
  }
  p = p1;
  dp = (std::abs(x) < 1.0) ? n * (p0 - x * p1) / (1.0 - x * x) : 0.5 * n * (n + 1) * std::pow(x, n + 1);
}

}  // namespace detail

inline Quadrature1D gauss_quadrature(int n_points) {
  if (n_points < 1) throw InvalidArgument("gauss_quadrature: n_points must be >= 1");
  const int n = n_points;
  Quadrature1D q;
  q.kind = NodeKind::Gauss;
  q.nodes.assign(n, 0.0);
  q.weights.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double p = 0, dp = 0;
    for (int it = 0; it < 100; ++it) {
      detail::legendre(n, x, p, dp);
      double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    detail::legendre(n, x, p, dp);
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    q.nodes[i] = -x;
    q.nodes[n - 1 - i] = x;
    q.weights[i] = q.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) q.nodes[n / 2] = 0.0;
  return q;
}

inline Quadrature1D lobatto_quadrature(int n_points) {
  if (n_points < 2) throw InvalidArgument("lobatto_quadrature: n_points must be >= 2");
  const int N = n_points - 1;
  Quadrature1D q;
  q.kind = NodeKind::Lobatto;
  q.nodes.assign(n_points, 0.0);
  q.weights.assign(n_points, 0.0);
  q.nodes[0] = -1.0;
  q.nodes[N] = 1.0;
  // interior nodes are roots of P'_N; Newton on q(x) = P_{N-1}(x) - x P_N(x) which is
  // proportional to (1 - x^2) P'_N(x)
  for (int i = 1; i <= N / 2; ++i) {
    double x = std::cos(std::numbers::pi * i / N);
    for (int it = 0; it < 100; ++it) {
      double pN = 0, dpN = 0, pM = 0, dpM = 0;
      detail::legendre(N, x, pN, dpN);
      detail::legendre(N - 1, x, pM, dpM);
      double f = pM - x * pN;
      double df = dpM - pN - x * dpN;
      double dx = f / df;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    q.nodes[i] = -x;
    q.nodes[N - i] = x;
  }
  if (N % 2 == 0) q.nodes[N / 2] = 0.0;
  for (int i = 0; i <= N; ++i) {
    double p = 0, dp = 0;
    detail::legendre(N, q.nodes[i], p, dp);
    q.weights[i] = 2.0 / (N * (N + 1) * p * p);
  }
  return q;
}

inline Quadrature1D make_quadrature(NodeKind kind, int n_points) {
  return kind == NodeKind::Gauss ? gauss_quadrature(n_points) : lobatto_quadrature(n_points);
}

// Maps a rule on [-1,1] to [a,b]; weights scale with (b-a)/2.
inline Quadrature1D map_quadrature(const Quadrature1D& q, double a, double b) {
  Quadrature1D r = q;
  for (int i = 0; i < q.size(); ++i) {
    r.nodes[i] = a + 0.5 * (b - a) * (q.nodes[i] + 1.0);
    r.weights[i] = 0.5 * (b - a) * q.weights[i];
  }
  return r;
}

inline void check_distinct(const std::vector<double>& x) {
  for (size_t i = 0; i < x.size(); ++i)
    for (size_t j = i + 1; j < x.size(); ++j)
      if (std::abs(x[i] - x[j]) < 1e-14)
        throw InconsistentOperators("degenerate Lagrange basis: duplicate source nodes");
}

/// @brief (i,j) = l_j(targets[i]) for the Lagrange basis on source nodes.
inline Matrix lagrange_interp_matrix(const std::vector<double>& source, const std::vector<double>& targets) {
  check_distinct(source);
  const int n = static_cast<int>(source.size());
  Matrix V(targets.size(), n);
  for (int i = 0; i < static_cast<int>(targets.size()); ++i) {
    const double t = targets[i];
    for (int j = 0; j < n; ++j) {
      double l = 1.0;
      for (int k = 0; k < n; ++k)
        if (k != j) l *= (t - source[k]) / (source[j] - source[k]);
      V(i, j) = l;
    }
  }
  return V;
}

/// @brief (i,j) = l_j'(targets[i]).
inline Matrix lagrange_derivative_matrix(const std::vector<double>& source, const std::vector<double>& targets) {
  check_distinct(source);
  const int n = static_cast<int>(source.size());
  Matrix D(targets.size(), n);
  for (int i = 0; i < static_cast<int>(targets.size()); ++i) {
    const double t = targets[i];
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int m = 0; m < n; ++m) {
        if (m == j) continue;
        double l = 1.0 / (source[j] - source[m]);
        for (int k = 0; k < n; ++k)
          if (k != j && k != m) l *= (t - source[k]) / (source[j] - source[k]);
        s += l;
      }
      D(i, j) = s;
    }
  }
  return D;
}

/// @brief Nodal differentiation matrix, D(i,j) = l_j'(x_i), via barycentric weights.
inline Matrix differentiation_matrix(const std::vector<double>& x) {
  check_distinct(x);
  const int n = static_cast<int>(x.size());
  std::vector<double> bw(n, 1.0);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      if (k != j) bw[j] /= (x[j] - x[k]);
  Matrix D = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double diag = 0.0;
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      D(i, j) = (bw[j] / bw[i]) / (x[i] - x[j]);
      diag -= D(i, j);
    }
    D(i, i) = diag;
  }
  return D;
}

}  // namespace esdg
