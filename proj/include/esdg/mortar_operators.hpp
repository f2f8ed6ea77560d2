#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "reference_operators.hpp"

namespace esdg {

enum class MortarSplit { Conforming, HalfSplit, TwoLayer };

struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::vector<int> sub;  // sub-interval of each node (0 or 1); all 0 if unsplit
  bool split = false;
};

struct MortarLayer {
  std::array<Rule1D, 2> axes;  // per tangential axis, only face_dim used
  int n = 0;
  Matrix points;   // n x face_dim, reference face coordinates
  Vector weights;  // n
  std::vector<int> subface;  // sub-rectangle index (sub_t0 * 2 + sub_t1 in 3D)
};

struct Triplet {
  int row;
  int col;
  double value;
};

/// @brief Node layers on one reference face. layers[0] are the face nodes; the
/// last layer carries the terminal (exchanged) mortar nodes.
struct MortarLayout {
  int face_dim = 1;
  NodeKind kind = NodeKind::Gauss;
  int N = 1;
  MortarSplit split = MortarSplit::Conforming;
  std::vector<MortarLayer> layers;
  std::vector<Matrix> chain;                  // chain[l]: layer l -> layer l+1
  std::vector<std::vector<Triplet>> pattern;  // structural entries of chain[l]

  int num_layers() const { return static_cast<int>(layers.size()) - 1; }
  const MortarLayer& terminal() const { return layers.back(); }
  const MortarLayer& face() const { return layers.front(); }
};

namespace detail {

inline Rule1D face_rule(const Quadrature1D& q) {
  Rule1D r;
  r.nodes = q.nodes;
  r.weights = q.weights;
  r.sub.assign(q.size(), 0);
  return r;
}

inline Rule1D split_rule(const Quadrature1D& q) {
  Rule1D r;
  r.split = true;
  for (int s = 0; s < 2; ++s) {
    auto m = map_quadrature(q, s == 0 ? -1.0 : 0.0, s == 0 ? 0.0 : 1.0);
    for (int i = 0; i < q.size(); ++i) {
      r.nodes.push_back(m.nodes[i]);
      r.weights.push_back(m.weights[i]);
      r.sub.push_back(s);
    }
  }
  return r;
}

inline MortarLayer make_layer(int face_dim, const Rule1D& a0, const Rule1D& a1) {
  MortarLayer L;
  L.axes = {a0, a1};
  const int n0 = static_cast<int>(a0.nodes.size());
  const int n1 = face_dim == 2 ? static_cast<int>(a1.nodes.size()) : 1;
  L.n = n0 * n1;
  L.points = Matrix::Zero(L.n, face_dim);
  L.weights = Vector::Zero(L.n);
  L.subface.assign(L.n, 0);
  for (int i = 0; i < n0; ++i)
    for (int j = 0; j < n1; ++j) {
      const int q = i * n1 + j;
      L.points(q, 0) = a0.nodes[i];
      L.weights[q] = a0.weights[i];
      L.subface[q] = a0.sub[i];
      if (face_dim == 2) {
        L.points(q, 1) = a1.nodes[j];
        L.weights[q] *= a1.weights[j];
        L.subface[q] = a0.sub[i] * 2 + a1.sub[j];
      }
    }
  return L;
}

inline bool same_rule(const Rule1D& a, const Rule1D& b) { return a.nodes == b.nodes && a.sub == b.sub; }

// 1D factor of a chain step plus its structural pattern
inline std::pair<Matrix, Matrix> chain_factor(const Rule1D& from, const Rule1D& to) {
  const int m = static_cast<int>(to.nodes.size()), n = static_cast<int>(from.nodes.size());
  if (same_rule(from, to)) return {Matrix::Identity(n, n), Matrix::Identity(n, n)};
  if (from.split) throw InternalError("mortar chain: cannot interpolate from a split rule");
  return {lagrange_interp_matrix(from.nodes, to.nodes), Matrix::Ones(m, n)};
}

inline Matrix kron(const Matrix& A, const Matrix& B) {
  Matrix K(A.rows() * B.rows(), A.cols() * B.cols());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j) K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return K;
}

}  // namespace detail

inline MortarLayout build_mortar_layout(int face_dim, MortarSplit split, NodeKind kind, int N) {
  if (face_dim != 1 && face_dim != 2) throw InvalidArgument("build_mortar_layout: face dimension must be 1 or 2");
  if (N < 1) throw InvalidArgument("build_mortar_layout: N must be >= 1");
  if (split == MortarSplit::TwoLayer && face_dim != 2)
    throw InvalidArgument("build_mortar_layout: two-layer mortars need 2D faces (hexahedra)");
  const auto q = make_quadrature(kind, N + 1);
  MortarLayout L;
  L.face_dim = face_dim;
  L.kind = kind;
  L.N = N;
  L.split = split;
  const auto f = detail::face_rule(q);
  const auto s = detail::split_rule(q);
  L.layers.push_back(detail::make_layer(face_dim, f, f));
  switch (split) {
    case MortarSplit::Conforming:
      L.layers.push_back(detail::make_layer(face_dim, f, f));
      break;
    case MortarSplit::HalfSplit:
      L.layers.push_back(detail::make_layer(face_dim, s, s));
      break;
    case MortarSplit::TwoLayer:
      L.layers.push_back(detail::make_layer(face_dim, s, f));
      L.layers.push_back(detail::make_layer(face_dim, s, s));
      break;
  }
  for (int l = 0; l + 1 < static_cast<int>(L.layers.size()); ++l) {
    const auto& A = L.layers[l];
    const auto& B = L.layers[l + 1];
    auto [m0, p0] = detail::chain_factor(A.axes[0], B.axes[0]);
    Matrix M = m0, P = p0;
    if (face_dim == 2) {
      auto [m1, p1] = detail::chain_factor(A.axes[1], B.axes[1]);
      M = detail::kron(m0, m1);
      P = detail::kron(p0, p1);
    }
    L.chain.push_back(M);
    std::vector<Triplet> pat;
    for (int r = 0; r < P.rows(); ++r)
      for (int c = 0; c < P.cols(); ++c)
        if (P(r, c) != 0.0) pat.push_back({r, c, M(r, c)});
    L.pattern.push_back(std::move(pat));
  }
  return L;
}

/// @brief One-shot face -> terminal interpolation (product of the chain).
inline Matrix chained_interp(const MortarLayout& L) {
  Matrix E = Matrix::Identity(L.face().n, L.face().n);
  for (const auto& c : L.chain) E = c * E;
  return E;
}

/// @brief Direct face -> terminal interpolation built from the tensor 1D interpolants.
inline Matrix direct_interp(const MortarLayout& L) {
  const auto& f = L.face();
  const auto& t = L.terminal();
  Matrix A0 = lagrange_interp_matrix(f.axes[0].nodes, t.axes[0].nodes);
  if (L.face_dim == 1) return A0;
  return detail::kron(A0, lagrange_interp_matrix(f.axes[1].nodes, t.axes[1].nodes));
}

struct MortarInterp {
  Matrix E_mf;
  Matrix E_fm;
  Vector Mf;
  Vector Mm;
  std::vector<Vector> Bf;  // per direction i
  std::vector<Vector> Bm;
};

inline MortarInterp build_mortar_interp(const MortarLayout& L, const Vector& reference_normal) {
  MortarInterp I;
  I.E_mf = chained_interp(L);
  I.Mf = L.face().weights;
  I.Mm = L.terminal().weights;
  I.E_fm = I.Mf.cwiseInverse().asDiagonal() * I.E_mf.transpose() * I.Mm.asDiagonal();
  for (int i = 0; i < reference_normal.size(); ++i) {
    I.Bf.push_back(reference_normal[i] * I.Mf);
    I.Bm.push_back(reference_normal[i] * I.Mm);
  }
  return I;
}

/// @brief Size and structural nonzero count of the face-local correction
/// (flux differencing) matrix of one face: face + mortar layers.
inline std::pair<int, int> correction_matrix_structure(const MortarLayout& L) {
  int size = 0, nnz = 0;
  for (const auto& layer : L.layers) size += layer.n;
  for (const auto& p : L.pattern) nnz += 2 * static_cast<int>(p.size());
  return {size, nnz};
}

/// @brief Element-level layered hybridized operator: volume, face and mortar
/// layers coupled as in the block SBP forms. Dense; used for verification and
/// by the direct mortar formulation.
struct MortarSBP {
  int dim = 2;
  int layers = 1;  // number of mortar layers beyond the face nodes
  std::vector<MortarLayout> face_layouts;
  std::vector<int> level_offset;  // start index of level l (0 volume, 1 face, 2.. layers)
  std::vector<int> level_size;
  std::vector<Matrix> level_interp;  // level_interp[l]: level l -> level l+1
  Matrix V;                          // test matrix, stacked levels from volume
  std::vector<Matrix> Q;             // per direction
  std::vector<Vector> B_terminal;    // per direction
  Matrix points;                     // all hybrid nodes, reference coordinates
  Vector weights;                    // quadrature weights (volume, then faces/layers)
  std::vector<int> node_face;        // face of each non-volume node, -1 for volume
  std::vector<int> node_local;       // index within the face's layer
  int total = 0;

  int terminal_level() const { return layers + 1; }
  int terminal_offset() const { return level_offset[terminal_level()]; }
  int terminal_size() const { return level_size[terminal_level()]; }
};

// Face-local coordinates -> element reference coordinates.
/// @brief Row q of a point matrix as a contiguous array.
inline std::array<double, 3> point_row(const Matrix& P, int q) {
  std::array<double, 3> x{0, 0, 0};
  for (int c = 0; c < P.cols(); ++c) x[c] = P(q, c);
  return x;
}

inline void face_to_volume_point(int dim, int f, const double* t, double* x) {
  const int ax = face_axis(f);
  auto tg = tangential_axes(dim, ax);
  x[ax] = face_side(f);
  for (int c = 0; c < dim - 1; ++c) x[tg[c]] = t[c];
}

inline MortarSBP build_layered_sbp(const TensorOperators& T, const std::vector<MortarLayout>& faces) {
  if (static_cast<int>(faces.size()) != T.nfaces) throw InvalidArgument("build_layered_sbp: need one layout per face");
  MortarSBP S;
  S.dim = T.dim;
  S.face_layouts = faces;
  int L = 0;
  for (const auto& lay : faces) {
    if (lay.face_dim != T.dim - 1 || lay.N != T.N || lay.kind != T.op1d.quad.kind)
      throw InvalidArgument("build_layered_sbp: layout does not match the tensor operators");
    L = std::max(L, lay.num_layers());
  }
  S.layers = L;
  const int dim = T.dim;
  // layer l of face f, padded with identity layers
  auto layer_of = [&](int f, int l) -> const MortarLayer& {
    const auto& lay = faces[f];
    return lay.layers[std::min(l, lay.num_layers())];
  };
  auto step_of = [&](int f, int l) -> Matrix {  // layer l -> l+1 of face f
    const auto& lay = faces[f];
    if (l < lay.num_layers()) return lay.chain[l];
    const int n = lay.terminal().n;
    return Matrix::Identity(n, n);
  };

  S.level_size.push_back(T.nv);
  for (int l = 0; l <= L; ++l) {
    int n = 0;
    for (int f = 0; f < T.nfaces; ++f) n += layer_of(f, l).n;
    S.level_size.push_back(n);
  }
  int off = 0;
  for (int s : S.level_size) {
    S.level_offset.push_back(off);
    off += s;
  }
  S.total = off;

  S.points = Matrix::Zero(S.total, dim);
  S.weights = Vector::Zero(S.total);
  S.node_face.assign(S.total, -1);
  S.node_local.assign(S.total, 0);
  S.points.topRows(T.nv) = T.vol_points;
  S.weights.head(T.nv) = T.Mhat;
  for (int l = 0; l <= L; ++l) {
    int o = S.level_offset[l + 1];
    for (int f = 0; f < T.nfaces; ++f) {
      const auto& ly = layer_of(f, l);
      for (int q = 0; q < ly.n; ++q) {
        double x[3] = {0, 0, 0};
        face_to_volume_point(dim, f, point_row(ly.points, q).data(), x);
        for (int d = 0; d < dim; ++d) S.points(o + q, d) = x[d];
        S.weights[o + q] = ly.weights[q];
        S.node_face[o + q] = f;
        S.node_local[o + q] = q;
      }
      o += ly.n;
    }
  }

  // level interpolation matrices (block diagonal over faces)
  S.level_interp.push_back(T.E);
  for (int l = 0; l < L; ++l) {
    Matrix M = Matrix::Zero(S.level_size[l + 2], S.level_size[l + 1]);
    int r = 0, c = 0;
    for (int f = 0; f < T.nfaces; ++f) {
      Matrix s = step_of(f, l);
      M.block(r, c, s.rows(), s.cols()) = s;
      r += s.rows();
      c += s.cols();
    }
    S.level_interp.push_back(M);
  }
  for (int l = 1; l <= L; ++l) {
    Vector wl = S.weights.segment(S.level_offset[l], S.level_size[l]);
    Vector wn = S.weights.segment(S.level_offset[l + 1], S.level_size[l + 1]);
    if ((S.level_interp[l].transpose() * wn - wl).cwiseAbs().maxCoeff() > 1e-10)
      throw InconsistentOperators("build_layered_sbp: incompatible face and mortar quadratures");
  }

  S.V = Matrix::Zero(S.total, T.nv);
  Matrix cur = Matrix::Identity(T.nv, T.nv);
  S.V.topRows(T.nv) = cur;
  for (int l = 0; l <= L; ++l) {
    cur = S.level_interp[l] * cur;
    S.V.middleRows(S.level_offset[l + 1], S.level_size[l + 1]) = cur;
  }

  // reference normals of every non-volume node
  Matrix nrm = Matrix::Zero(S.total, dim);
  for (int k = T.nv; k < S.total; ++k) nrm(k, face_axis(S.node_face[k])) = face_side(S.node_face[k]);

  S.Q.assign(dim, Matrix::Zero(S.total, S.total));
  S.B_terminal.assign(dim, Vector::Zero(S.terminal_size()));
  for (int i = 0; i < dim; ++i) {
    Matrix& Q = S.Q[i];
    Q.topLeftCorner(T.nv, T.nv) = 0.5 * (T.Qhat[i] - T.Qhat[i].transpose());
    for (int l = 0; l <= L; ++l) {
      const int ro = S.level_offset[l], rn = S.level_size[l];
      const int co = S.level_offset[l + 1], cn = S.level_size[l + 1];
      Vector b = nrm.col(i).segment(co, cn).cwiseProduct(S.weights.segment(co, cn));
      Matrix EtB = S.level_interp[l].transpose() * b.asDiagonal();
      Q.block(ro, co, rn, cn) += 0.5 * EtB;
      Q.block(co, ro, cn, rn) -= 0.5 * EtB.transpose();
      if (l == L) {
        Q.block(co, co, cn, cn) += 0.5 * Matrix(b.asDiagonal());
        S.B_terminal[i] = b;
      }
    }
  }
  return S;
}

inline MortarSBP build_mortar_sbp(const TensorOperators& T, const MortarLayout& layout) {
  if (layout.num_layers() != 1) throw InvalidArgument("build_mortar_sbp: expects a one-layer layout");
  return build_layered_sbp(T, std::vector<MortarLayout>(T.nfaces, layout));
}

inline MortarSBP build_two_layer_mortar_sbp(const TensorOperators& T, const MortarLayout& layout) {
  if (T.dim != 3) throw InvalidArgument("build_two_layer_mortar_sbp: requires hexahedra (dim = 3)");
  if (layout.split != MortarSplit::TwoLayer) throw InvalidArgument("build_two_layer_mortar_sbp: expects a two-layer layout");
  return build_layered_sbp(T, std::vector<MortarLayout>(T.nfaces, layout));
}

/// @brief max |Bhat_f E_fm - E_mf^T Bhat_m| over all directions.
inline double boundary_compatibility_residual(const MortarInterp& I) {
  double r = 0.0;
  for (size_t i = 0; i < I.Bf.size(); ++i)
    r = std::max(r, (I.Bf[i].asDiagonal() * I.E_fm - I.E_mf.transpose() * I.Bm[i].asDiagonal()).cwiseAbs().maxCoeff());
  return r;
}

}  // namespace esdg
