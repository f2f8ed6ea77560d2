#pragma once

#include <string>
#include <vector>

#include "mesh.hpp"
#include "mortar_operators.hpp"

namespace esdg {

// CrossProduct is the 2D construction; Curl and ReducedCurl are the two 3D
// potential-based constructions.
enum class GeoApproach { CrossProduct = 0, Curl = 1, ReducedCurl = 2 };

inline GeoApproach geo_approach_from_int(int dim, int a) {
  if (dim == 2) return GeoApproach::CrossProduct;
  if (a == 1) return GeoApproach::Curl;
  if (a == 2) return GeoApproach::ReducedCurl;
  throw InvalidArgument("geometric approach must be 1 or 2");
}

/// @brief 2D metric terms at the mapping nodes; columns (g11, g12, g21, g22).
inline Matrix metric_terms_2d(const Matrix& X, const LobattoGrid& G) {
  Matrix D1 = G.diff(0), D2 = G.diff(1);
  Vector x1 = D1 * X.col(0), x2 = D2 * X.col(0), y1 = D1 * X.col(1), y2 = D2 * X.col(1);
  Matrix g(G.n, 4);
  g.col(0) = y2;
  g.col(1) = -y1;
  g.col(2) = -x2;
  g.col(3) = x1;
  return g;
}

/// @brief Nodal geometric potentials f_ij (column 3i+j), optionally degree reduced.
inline Matrix geometric_potentials(const Matrix& X, const LobattoGrid& G, bool reduce) {
  Matrix D[3] = {G.diff(0), G.diff(1), G.diff(2)};
  Vector x = X.col(0), y = X.col(1), z = X.col(2);
  Matrix f(G.n, 9);
  for (int j = 0; j < 3; ++j) {
    f.col(0 * 3 + j) = (D[j] * y).cwiseProduct(z);
    f.col(1 * 3 + j) = (D[j] * x).cwiseProduct(z);
    f.col(2 * 3 + j) = (D[j] * y).cwiseProduct(x);
  }
  if (!reduce) return f;
  const int P = G.P;
  Matrix F1;
  if (P == 1) {
    // degree 0 has no Lobatto rule; reduce to the mean of the two end values
    F1 = Matrix::Constant(2, 2, 0.5);
  } else {
    const auto xl = lobatto_quadrature(P).nodes;
    F1 = lagrange_interp_matrix(xl, G.x) * lagrange_interp_matrix(G.x, xl);
  }
  Matrix out = f;
  for (int j = 0; j < 3; ++j) {
    for (int i = 0; i < G.n; ++i) {
      auto k = G.multi(i);
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int m = 0; m <= P; ++m) {
          auto km = k;
          km[j] = m;
          s += F1(k[j], m) * f(G.index(km), c * 3 + j);
        }
        out(i, c * 3 + j) = s;
      }
    }
  }
  return out;
}

/// @brief Discrete curl of potentials; columns g_ij at 3i+j.
inline Matrix curl_of_potentials(const Matrix& f, const LobattoGrid& G) {
  Matrix D[3] = {G.diff(0), G.diff(1), G.diff(2)};
  const double alpha[3] = {1.0, -1.0, -1.0};
  Matrix g(G.n, 9);
  for (int i = 0; i < 3; ++i) {
    auto fi = [&](int j) { return f.col(i * 3 + j); };
    g.col(i * 3 + 0) = alpha[i] * (D[2] * fi(1) - D[1] * fi(2));
    g.col(i * 3 + 1) = alpha[i] * (D[0] * fi(2) - D[2] * fi(0));
    g.col(i * 3 + 2) = alpha[i] * (D[1] * fi(0) - D[0] * fi(1));
  }
  return g;
}

inline Matrix metric_terms_3d_approach1(const Matrix& X, const LobattoGrid& G) {
  return curl_of_potentials(geometric_potentials(X, G, false), G);
}

inline Matrix metric_terms_3d_approach2(const Matrix& X, const LobattoGrid& G) {
  return curl_of_potentials(geometric_potentials(X, G, true), G);
}

/// @brief Mapping Jacobian dx_a/dxi_b (column a*d+b) at reference points.
inline Matrix mapping_jacobian(const Matrix& X, const LobattoGrid& G, const Matrix& pts) {
  const int d = G.dim;
  Matrix Jm(pts.rows(), d * d);
  for (int b = 0; b < d; ++b) {
    Matrix Vb = G.interp(pts, b);
    Matrix dX = Vb * X;
    for (int a = 0; a < d; ++a) Jm.col(a * d + b) = dX.col(a);
  }
  return Jm;
}

inline double det_row(const Matrix& Jm, int r, int d) {
  auto m = [&](int a, int b) { return Jm(r, a * d + b); };
  if (d == 2) return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
         m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

/// @brief Cofactor form g_ij = J dxi_j/dx_i from a Jacobian row (column i*d+j).
inline void cofactor_metrics(const double* A, int d, double* g) {
  auto m = [&](int a, int b) { return A[a * d + b]; };
  if (d == 2) {
    g[0] = m(1, 1);
    g[1] = -m(1, 0);
    g[2] = -m(0, 1);
    g[3] = m(0, 0);
    return;
  }
  // g_ij = cofactor of entry (i, j) of dx/dxi
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const int i1 = (i + 1) % 3, i2 = (i + 2) % 3, j1 = (j + 1) % 3, j2 = (j + 2) % 3;
      g[i * 3 + j] = m(i1, j1) * m(i2, j2) - m(i1, j2) * m(i2, j1);
    }
}

struct MeshGeometry {
  Mesh mesh;
  GeoApproach approach = GeoApproach::CrossProduct;
  LobattoGrid grid;
  std::vector<Matrix> g;          // per element, grid.n x d^2 nodal metric values
  std::vector<bool> affine;

  int dim() const { return mesh.dim; }
};

namespace detail {

inline bool mapping_is_affine(const Matrix& X, const LobattoGrid& G) {
  if (G.P == 1 && G.dim == 2) {
    // bilinear map is affine iff it is a parallelogram
    return ((X.row(0) + X.row(3)) - (X.row(1) + X.row(2))).cwiseAbs().maxCoeff() <= 1e-13 * (1.0 + X.cwiseAbs().maxCoeff());
  }
  Matrix Jm = mapping_jacobian(X, G, G.points());
  const double scale = 1.0 + Jm.cwiseAbs().maxCoeff();
  for (int r = 1; r < Jm.rows(); ++r)
    if ((Jm.row(r) - Jm.row(0)).cwiseAbs().maxCoeff() > 1e-12 * scale) return false;
  return true;
}

// Overwrites fine-side tangential potentials on non-conforming faces with the
// coarse element's potential polynomial. Across a periodic seam the coarse
// mapping is first translated onto the fine side.
inline void enforce_potential_continuity(const Mesh& m, const LobattoGrid& G, std::vector<Matrix>& pot, bool reduce) {
  const std::vector<Matrix> coarse_pot = pot;
  for (const auto& rec : m.interfaces) {
    if (!rec.mortar) continue;
    const int ec = rec.elem, fc = rec.face;
    const int ax = face_axis(fc), side_c = face_side(fc);
    const int ff = 2 * ax + (side_c > 0 ? 0 : 1);
    auto tg = tangential_axes(3, ax);
    const auto& elc = m.elements[ec];
    const int plane_c = side_c < 0 ? elc.lo[ax] : elc.lo[ax] + elc.size[ax];
    for (int s = 0; s < static_cast<int>(rec.others.size()); ++s) {
      const int ef = rec.others[s];
      const auto& elf = m.elements[ef];
      const int plane_f = side_c < 0 ? elf.lo[ax] + elf.size[ax] : elf.lo[ax];
      const Matrix* cp = &coarse_pot[ec];
      Matrix shifted;
      if (plane_f != plane_c) {
        Matrix X = m.mapping[ec];
        X.col(ax).array() += double(plane_f - plane_c) / m.extent[ax] * (m.upper[ax] - m.lower[ax]);
        shifted = geometric_potentials(X, G, reduce);
        cp = &shifted;
      }
      const int sub[2] = {s / 2, s % 2};
      std::vector<int> nodes;
      const int kface = face_side(ff) < 0 ? 0 : G.P;
      for (int i = 0; i < G.n; ++i)
        if (G.multi(i)[ax] == kface) nodes.push_back(i);
      Matrix pts(nodes.size(), 3);
      for (size_t r = 0; r < nodes.size(); ++r) {
        auto k = G.multi(nodes[r]);
        pts(r, ax) = side_c;
        for (int c = 0; c < 2; ++c) pts(r, tg[c]) = 0.5 * (G.x[k[tg[c]]] + (2 * sub[c] - 1));
      }
      Matrix fc_vals = G.interp(pts) * *cp;
      for (size_t r = 0; r < nodes.size(); ++r)
        for (int i = 0; i < 3; ++i)
          for (int c = 0; c < 2; ++c) {
            const int j = tg[c];
            const double ratio = double(m.elements[ef].size[j]) / m.elements[ec].size[j];
            pot[ef](nodes[r], i * 3 + j) = ratio * fc_vals(r, i * 3 + j);
          }
    }
  }
}

}  // namespace detail

/// @brief Metric polynomials for every element of a mesh.
inline MeshGeometry build_geometry(const Mesh& m, GeoApproach approach) {
  MeshGeometry geo;
  geo.mesh = m;
  geo.approach = m.dim == 2 ? GeoApproach::CrossProduct : approach;
  if (m.dim == 3 && geo.approach == GeoApproach::CrossProduct)
    throw InvalidArgument("build_geometry: 3D meshes need approach 1 or 2");
  geo.grid = LobattoGrid(m.dim, m.ngeo);
  const auto& G = geo.grid;
  const int K = m.num_elements();
  geo.g.resize(K);
  geo.affine.resize(K);
  for (int e = 0; e < K; ++e) geo.affine[e] = detail::mapping_is_affine(m.mapping[e], G);
  if (m.dim == 2) {
    for (int e = 0; e < K; ++e) geo.g[e] = metric_terms_2d(m.mapping[e], G);
  } else {
    std::vector<Matrix> pot(K);
    for (int e = 0; e < K; ++e) pot[e] = geometric_potentials(m.mapping[e], G, geo.approach == GeoApproach::ReducedCurl);
    detail::enforce_potential_continuity(m, G, pot, geo.approach == GeoApproach::ReducedCurl);
    for (int e = 0; e < K; ++e) geo.g[e] = curl_of_potentials(pot[e], G);
  }
  const Matrix P = G.points();
  for (int e = 0; e < K; ++e) {
    Matrix Jm = mapping_jacobian(m.mapping[e], G, P);
    for (int r = 0; r < Jm.rows(); ++r)
      if (!(det_row(Jm, r, m.dim) > 0.0))
        throw InvalidGeometry("non-positive Jacobian in element " + std::to_string(e));
  }
  return geo;
}

/// @brief Largest mapping degree that keeps curved elements with split mortars entropy stable.
inline int max_mapping_degree(int dim, NodeKind kind, int N, GeoApproach approach) {
  const int Nf = kind == NodeKind::Gauss ? N + 1 : N - 1;
  if (dim == 3 && approach == GeoApproach::Curl) return std::min(N, Nf);
  return std::min(N, Nf + 1);
}

inline void check_mapping_degree(int dim, NodeKind kind, int N, int ngeo, GeoApproach approach) {
  const int bound = max_mapping_degree(dim, kind, N, approach);
  if (ngeo > bound) {
    const int Nf = kind == NodeKind::Gauss ? N + 1 : N - 1;
    std::string which = (dim == 3 && approach == GeoApproach::Curl) ? "N_geo <= min(N, N_f, N_m)" : "N_geo <= min(N, N_f+1, N_m+1)";
    throw StabilityPreconditionError("entropy stability precondition violated: " + which + " with N = " + std::to_string(N) +
                                     ", N_f = N_m = " + std::to_string(Nf) + " requires N_geo <= " + std::to_string(bound) +
                                     ", got N_geo = " + std::to_string(ngeo));
  }
}

/// @brief Checks the degree preconditions on a concrete mesh: the mapping degree
/// must not exceed N, and curved elements owning split mortars obey the mortar degree bound.
inline void check_mesh_preconditions(const MeshGeometry& geo, NodeKind kind, int N) {
  const auto& m = geo.mesh;
  if (m.ngeo > N) {
    bool curved = false;
    for (bool a : geo.affine) curved = curved || !a;
    if (curved) throw StabilityPreconditionError("mapping degree N_geo = " + std::to_string(m.ngeo) + " exceeds N = " + std::to_string(N));
  }
  for (int e = 0; e < m.num_elements(); ++e) {
    if (geo.affine[e]) continue;
    for (int f = 0; f < m.nfaces(); ++f)
      if (m.links[e][f].kind == FaceKind::MortarCoarse) {
        check_mapping_degree(m.dim, kind, N, m.ngeo, geo.approach);
        break;
      }
  }
}

/// @brief Physical operators 1/2 sum_j (diag(g_ij) Qhat_j + Qhat_j diag(g_ij)).
/// g holds the metric at every node of the operator (rows), columns i*d+j.
inline std::vector<Matrix> physical_operators(const std::vector<Matrix>& Qhat, const Matrix& g) {
  const int d = static_cast<int>(Qhat.size());
  std::vector<Matrix> Q(d, Matrix::Zero(Qhat[0].rows(), Qhat[0].cols()));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      Vector gij = g.col(i * d + j);
      Q[i] += 0.5 * (gij.asDiagonal() * Qhat[j] + Qhat[j] * gij.asDiagonal());
    }
  return Q;
}

/// @brief Metric values of element e at arbitrary reference points.
inline Matrix eval_metric(const MeshGeometry& geo, int e, const Matrix& pts) { return geo.grid.interp(pts) * geo.g[e]; }

/// @brief Discrete GCL residual max_i |sum_j D_j g_ij| at the volume nodes of T.
inline double gcl_residual(const MeshGeometry& geo, int e, const TensorOperators& T) {
  Matrix gv = eval_metric(geo, e, T.vol_points);
  const int d = T.dim;
  Matrix D = T.op1d.D;
  double r = 0.0;
  for (int i = 0; i < d; ++i) {
    Vector div = Vector::Zero(T.nv);
    for (int j = 0; j < d; ++j) {
      Vector w = T.Mhat.cwiseInverse().asDiagonal() * (T.Qhat[j] * gv.col(i * d + j));
      div += w;
    }
    r = std::max(r, div.cwiseAbs().maxCoeff());
  }
  return r;
}

inline std::vector<Matrix> physical_sbp(const TensorOperators& T, const MeshGeometry& geo, int e) {
  Matrix pts(T.nv + T.nf, T.dim);
  pts << T.vol_points, T.face_points;
  if (gcl_residual(geo, e, T) > 1e-10) throw InvalidGeometry("physical_sbp: metric terms violate the discrete GCL");
  return physical_operators(T.Qh, eval_metric(geo, e, pts));
}

inline std::vector<Matrix> physical_mortar_sbp(const MortarSBP& S, const TensorOperators& T, const MeshGeometry& geo, int e,
                                               NodeKind kind, int N) {
  bool split = false;
  for (const auto& l : S.face_layouts) split = split || l.split != MortarSplit::Conforming;
  if (split && !geo.affine[e]) check_mapping_degree(T.dim, kind, N, geo.mesh.ngeo, geo.approach);
  return physical_operators(S.Q, eval_metric(geo, e, S.points));
}

}  // namespace esdg
