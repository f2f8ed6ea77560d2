#pragma once

#include <array>
#include <vector>

#include "quadrature.hpp"

namespace esdg {

struct Operators1D {
  Quadrature1D quad;
  Matrix M;  // diag(weights)
  Matrix D;  // nodal differentiation
  Matrix Q;  // M * D
  Matrix E;  // 2 x (N+1), rows: x = -1, x = +1
  Matrix B;  // diag(-1, 1)
};

struct HybridizedSBP1D {
  Matrix Qh;
  Matrix Bh;
};

inline Operators1D build_operators_1d(const Quadrature1D& quad) {
  Operators1D op;
  op.quad = quad;
  const int n = quad.size();
  op.M = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) op.M(i, i) = quad.weights[i];
  op.D = differentiation_matrix(quad.nodes);
  op.Q = op.M * op.D;
  op.E = lagrange_interp_matrix(quad.nodes, {-1.0, 1.0});
  op.B = Matrix::Zero(2, 2);
  op.B(0, 0) = -1.0;
  op.B(1, 1) = 1.0;
  return op;
}

inline double gsbp_residual(const Operators1D& op) {
  return (op.Q + op.Q.transpose() - op.E.transpose() * op.B * op.E).cwiseAbs().maxCoeff();
}

inline HybridizedSBP1D hybridized_sbp_1d(const Operators1D& op) {
  if (gsbp_residual(op) > 1e-10) throw InconsistentOperators("hybridized_sbp_1d: GSBP residual above 1e-10");
  const int n = op.quad.size();
  HybridizedSBP1D h;
  h.Qh = Matrix::Zero(n + 2, n + 2);
  h.Qh.topLeftCorner(n, n) = 0.5 * (op.Q - op.Q.transpose());
  h.Qh.topRightCorner(n, 2) = 0.5 * op.E.transpose() * op.B;
  h.Qh.bottomLeftCorner(2, n) = -0.5 * op.B * op.E;
  h.Qh.bottomRightCorner(2, 2) = 0.5 * op.B;
  h.Bh = Matrix::Zero(n + 2, n + 2);
  h.Bh.bottomRightCorner(2, 2) = op.B;
  return h;
}

// Faces: f = 2*axis + (side > 0). Within a face, nodes are lexicographic in the
// remaining reference coordinates, the lowest remaining axis slowest.
inline int face_axis(int f) { return f / 2; }
inline int face_side(int f) { return (f % 2) ? 1 : -1; }

inline std::array<int, 2> tangential_axes(int dim, int axis) {
  std::array<int, 2> t{-1, -1};
  int c = 0;
  for (int a = 0; a < dim; ++a)
    if (a != axis) t[c++] = a;
  return t;
}

inline int ipow(int b, int e) {
  int r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

struct TensorOperators {
  int dim = 2;
  int N = 1;
  Operators1D op1d;
  int nv = 0;        // volume nodes
  int nf_face = 0;   // nodes per face
  int nfaces = 0;
  int nf = 0;        // total face nodes

  std::vector<Matrix> Qhat;  // per direction, nv x nv
  Vector Mhat;               // volume weights
  Matrix E;                  // nf x nv
  std::vector<Vector> Bhat;  // per direction, diag entries over face nodes
  std::vector<Matrix> Qh;    // per direction, (nv+nf)^2
  Vector face_weights;       // nf
  Matrix face_normals;       // nf x dim reference normals

  Matrix vol_points;   // nv x dim reference coordinates
  Matrix face_points;  // nf x dim reference coordinates

  int n1() const { return N + 1; }

  int vol_index(const std::array<int, 3>& k) const {
    int idx = 0;
    for (int a = 0; a < dim; ++a) idx = idx * (N + 1) + k[a];
    return idx;
  }
  std::array<int, 3> vol_multi(int idx) const {
    std::array<int, 3> k{0, 0, 0};
    for (int a = dim - 1; a >= 0; --a) {
      k[a] = idx % (N + 1);
      idx /= (N + 1);
    }
    return k;
  }
  // tangential indices of node s on a face
  std::array<int, 2> face_multi(int s) const {
    if (dim == 2) return {s, 0};
    return {s / (N + 1), s % (N + 1)};
  }
  int face_node(int f, int s) const { return f * nf_face + s; }
};

inline TensorOperators tensor_operators(const Operators1D& op, int dim) {
  if (dim != 2 && dim != 3) throw InvalidArgument("tensor_operators: dim must be 2 or 3");
  TensorOperators T;
  T.dim = dim;
  T.N = op.quad.degree();
  T.op1d = op;
  const int n = T.N + 1;
  T.nv = ipow(n, dim);
  T.nf_face = ipow(n, dim - 1);
  T.nfaces = 2 * dim;
  T.nf = T.nfaces * T.nf_face;
  const auto& w = op.quad.weights;
  const auto& x = op.quad.nodes;

  T.Mhat = Vector::Ones(T.nv);
  T.vol_points = Matrix::Zero(T.nv, dim);
  for (int a = 0; a < T.nv; ++a) {
    auto k = T.vol_multi(a);
    for (int d = 0; d < dim; ++d) {
      T.Mhat[a] *= w[k[d]];
      T.vol_points(a, d) = x[k[d]];
    }
  }

  T.Qhat.assign(dim, Matrix::Zero(T.nv, T.nv));
  for (int i = 0; i < dim; ++i) {
    for (int a = 0; a < T.nv; ++a) {
      auto ka = T.vol_multi(a);
      for (int m = 0; m < n; ++m) {
        auto kb = ka;
        kb[i] = m;
        double c = op.Q(ka[i], m);
        for (int d = 0; d < dim; ++d)
          if (d != i) c *= w[ka[d]];
        T.Qhat[i](a, T.vol_index(kb)) = c;
      }
    }
  }

  T.E = Matrix::Zero(T.nf, T.nv);
  T.face_weights = Vector::Ones(T.nf);
  T.face_normals = Matrix::Zero(T.nf, dim);
  T.face_points = Matrix::Zero(T.nf, dim);
  for (int f = 0; f < T.nfaces; ++f) {
    const int ax = face_axis(f), side = face_side(f);
    auto tg = tangential_axes(dim, ax);
    for (int s = 0; s < T.nf_face; ++s) {
      const int row = T.face_node(f, s);
      auto t = T.face_multi(s);
      std::array<int, 3> k{0, 0, 0};
      for (int c = 0; c < dim - 1; ++c) {
        k[tg[c]] = t[c];
        T.face_weights[row] *= w[t[c]];
        T.face_points(row, tg[c]) = x[t[c]];
      }
      T.face_points(row, ax) = side;
      T.face_normals(row, ax) = side;
      for (int m = 0; m < n; ++m) {
        k[ax] = m;
        T.E(row, T.vol_index(k)) = op.E(side > 0 ? 1 : 0, m);
      }
    }
  }

  T.Bhat.assign(dim, Vector::Zero(T.nf));
  for (int i = 0; i < dim; ++i) T.Bhat[i] = T.face_normals.col(i).cwiseProduct(T.face_weights);

  const int nh = T.nv + T.nf;
  T.Qh.assign(dim, Matrix::Zero(nh, nh));
  for (int i = 0; i < dim; ++i) {
    Matrix EtB = T.E.transpose() * T.Bhat[i].asDiagonal();
    T.Qh[i].topLeftCorner(T.nv, T.nv) = 0.5 * (T.Qhat[i] - T.Qhat[i].transpose());
    T.Qh[i].topRightCorner(T.nv, T.nf) = 0.5 * EtB;
    T.Qh[i].bottomLeftCorner(T.nf, T.nv) = -0.5 * EtB.transpose();
    T.Qh[i].bottomRightCorner(T.nf, T.nf) = 0.5 * Matrix(T.Bhat[i].asDiagonal());
  }
  return T;
}

inline TensorOperators tensor_operators(NodeKind kind, int N, int dim) {
  return tensor_operators(build_operators_1d(make_quadrature(kind, N + 1)), dim);
}

}  // namespace esdg
