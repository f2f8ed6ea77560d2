#pragma once

#include <array>
#include <vector>

#include "quadrature.hpp"
#include "reference_operators.hpp"

namespace esdg {

// Tensor Lagrange basis on a (P+1)^dim Lobatto grid, x̂1 slowest.
struct LobattoGrid {
  int dim = 2;
  int P = 1;
  std::vector<double> x;  // 1D nodes
  int n = 0;              // (P+1)^dim

  LobattoGrid() = default;
  LobattoGrid(int dim_, int P_) : dim(dim_), P(P_), x(lobatto_quadrature(P_ + 1).nodes), n(ipow(P_ + 1, dim_)) {}

  std::array<int, 3> multi(int idx) const {
    std::array<int, 3> k{0, 0, 0};
    for (int a = dim - 1; a >= 0; --a) {
      k[a] = idx % (P + 1);
      idx /= (P + 1);
    }
    return k;
  }
  int index(const std::array<int, 3>& k) const {
    int idx = 0;
    for (int a = 0; a < dim; ++a) idx = idx * (P + 1) + k[a];
    return idx;
  }
  Matrix points() const {
    Matrix p(n, dim);
    for (int i = 0; i < n; ++i) {
      auto k = multi(i);
      for (int a = 0; a < dim; ++a) p(i, a) = x[k[a]];
    }
    return p;
  }

  /// @brief V(m, j) = basis_j(points(m)); deriv_axis >= 0 differentiates along that axis.
  Matrix interp(const Matrix& pts, int deriv_axis = -1) const {
    const int m = static_cast<int>(pts.rows());
    std::vector<Matrix> L(dim), dL(dim);
    for (int a = 0; a < dim; ++a) {
      std::vector<double> t(m);
      for (int i = 0; i < m; ++i) t[i] = pts(i, a);
      L[a] = lagrange_interp_matrix(x, t);
      if (a == deriv_axis) dL[a] = lagrange_derivative_matrix(x, t);
    }
    Matrix V(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        auto k = multi(j);
        double v = 1.0;
        for (int a = 0; a < dim; ++a) v *= (a == deriv_axis) ? dL[a](i, k[a]) : L[a](i, k[a]);
        V(i, j) = v;
      }
    return V;
  }

  /// @brief Nodal differentiation along one axis on the grid itself.
  Matrix diff(int axis) const {
    Matrix D1 = differentiation_matrix(x);
    Matrix D = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      auto k = multi(i);
      for (int m = 0; m <= P; ++m) {
        auto km = k;
        km[axis] = m;
        D(i, index(km)) = D1(k[axis], m);
      }
    }
    return D;
  }
};

}  // namespace esdg
