#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "tensor_basis.hpp"

namespace esdg {

enum class FaceKind { Boundary, Conforming, MortarCoarse, MortarFine };

inline const char* to_string(FaceKind k) {
  switch (k) {
    case FaceKind::Boundary: return "boundary";
    case FaceKind::Conforming: return "conforming";
    case FaceKind::MortarCoarse: return "mortar";
    case FaceKind::MortarFine: return "fine";
  }
  return "?";
}

struct FaceLink {
  FaceKind kind = FaceKind::Boundary;
  int nbr = -1;       // conforming neighbor, or coarse owner for a fine face
  int nbr_face = -1;
  int subface = -1;   // fine face: position inside the coarse face
  std::vector<int> fine;  // coarse face: fine elements ordered by subface (face index is opposite)
};

// Elements are axis-aligned boxes of an integer lattice; the lattice only
// carries topology, geometry lives in the Lobatto mapping nodes.
struct Element {
  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> size{1, 1, 1};
};

struct InterfaceRecord {
  bool mortar = false;
  int elem = -1;
  int face = -1;
  std::vector<int> others;  // conforming: one neighbor; mortar: fine elements by subface
};

struct Mesh {
  int dim = 2;
  int ngeo = 1;
  std::array<double, 3> lower{0, 0, 0};
  std::array<double, 3> upper{1, 1, 1};
  std::array<int, 3> extent{1, 1, 1};
  std::array<bool, 3> periodic{true, true, true};
  std::vector<Element> elements;
  std::vector<Matrix> mapping;  // per element, (ngeo+1)^dim x dim physical coordinates
  std::vector<std::array<FaceLink, 6>> links;
  std::vector<InterfaceRecord> interfaces;

  int num_elements() const { return static_cast<int>(elements.size()); }
  int nfaces() const { return 2 * dim; }

  // physical coordinate of an affine lattice point
  double lattice_to_physical(int axis, double lat) const {
    return lower[axis] + (upper[axis] - lower[axis]) * lat / extent[axis];
  }
};

namespace detail {

// key: axis, side, plane, lo_t0, lo_t1, size_t0, size_t1
using FaceKey = std::array<int, 7>;

inline FaceKey face_key(const Mesh& m, int e, int f) {
  const auto& el = m.elements[e];
  const int ax = face_axis(f), side = face_side(f);
  int plane = side < 0 ? el.lo[ax] : el.lo[ax] + el.size[ax];
  if (m.periodic[ax]) plane = ((plane % m.extent[ax]) + m.extent[ax]) % m.extent[ax];
  auto tg = tangential_axes(m.dim, ax);
  FaceKey k{ax, side, plane, 0, 0, 0, 0};
  for (int c = 0; c < m.dim - 1; ++c) {
    k[3 + c] = el.lo[tg[c]];
    k[5 + c] = el.size[tg[c]];
  }
  return k;
}

}  // namespace detail

/// @brief Recomputes face links and interface records from the lattice boxes.
/// Supports conforming faces and 2:1 non-conforming faces.
inline void build_topology(Mesh& m) {
  const int K = m.num_elements();
  const int nf = m.nfaces();
  std::map<detail::FaceKey, std::pair<int, int>> faces;
  for (int e = 0; e < K; ++e)
    for (int f = 0; f < nf; ++f) {
      auto key = detail::face_key(m, e, f);
      if (!faces.emplace(key, std::make_pair(e, f)).second)
        throw InvalidGeometry("build_topology: overlapping elements");
    }
  m.links.assign(K, {});
  m.interfaces.clear();
  for (int e = 0; e < K; ++e) {
    for (int f = 0; f < nf; ++f) {
      auto& link = m.links[e][f];
      if (link.kind != FaceKind::Boundary) continue;
      auto key = detail::face_key(m, e, f);
      auto opp = key;
      opp[1] = -key[1];
      if (auto it = faces.find(opp); it != faces.end()) {
        auto [e2, f2] = it->second;
        link.kind = FaceKind::Conforming;
        link.nbr = e2;
        link.nbr_face = f2;
        auto& back = m.links[e2][f2];
        back.kind = FaceKind::Conforming;
        back.nbr = e;
        back.nbr_face = f;
        m.interfaces.push_back({false, e, f, {e2}});
        continue;
      }
      // try 2:1 split of this face into smaller opposite faces
      bool splittable = true;
      for (int c = 0; c < m.dim - 1; ++c) splittable = splittable && (key[5 + c] % 2 == 0);
      if (!splittable) continue;
      const int nsub = m.dim == 2 ? 2 : 4;
      std::vector<std::pair<int, int>> fine;
      for (int s = 0; s < nsub; ++s) {
        auto k = opp;
        const int s0 = m.dim == 2 ? s : s / 2, s1 = m.dim == 2 ? 0 : s % 2;
        k[3] = key[3] + s0 * key[5] / 2;
        k[5] = key[5] / 2;
        if (m.dim == 3) {
          k[4] = key[4] + s1 * key[6] / 2;
          k[6] = key[6] / 2;
        }
        auto it = faces.find(k);
        if (it == faces.end()) break;
        fine.push_back(it->second);
      }
      if (static_cast<int>(fine.size()) != nsub) continue;
      link.kind = FaceKind::MortarCoarse;
      InterfaceRecord rec{true, e, f, {}};
      for (int s = 0; s < nsub; ++s) {
        auto [e2, f2] = fine[s];
        link.fine.push_back(e2);
        auto& back = m.links[e2][f2];
        back.kind = FaceKind::MortarFine;
        back.nbr = e;
        back.nbr_face = f;
        back.subface = s;
        rec.others.push_back(e2);
      }
      m.interfaces.push_back(rec);
    }
  }
  for (int e = 0; e < K; ++e)
    for (int f = 0; f < nf; ++f) {
      if (m.links[e][f].kind != FaceKind::Boundary) continue;
      const int ax = face_axis(f);
      const auto& el = m.elements[e];
      const bool on_edge = face_side(f) < 0 ? el.lo[ax] == 0 : el.lo[ax] + el.size[ax] == m.extent[ax];
      if (!on_edge || m.periodic[ax])
        throw InvalidGeometry("build_topology: face " + std::to_string(f) + " of element " + std::to_string(e) +
                              " has no matching neighbor (only 2:1 refinement is supported)");
    }
}

/// @brief Degree-ngeo Lobatto mapping of the affine box of element e.
inline Matrix affine_mapping(const Mesh& m, const Element& el, int ngeo) {
  LobattoGrid G(m.dim, ngeo);
  Matrix X(G.n, m.dim);
  for (int i = 0; i < G.n; ++i) {
    auto k = G.multi(i);
    for (int a = 0; a < m.dim; ++a) {
      const double lat = el.lo[a] + 0.5 * (G.x[k[a]] + 1.0) * el.size[a];
      X(i, a) = m.lattice_to_physical(a, lat);
    }
  }
  return X;
}

inline Mesh make_cartesian_mesh(int dim, const std::array<double, 3>& lower, const std::array<double, 3>& upper,
                                const std::array<int, 3>& cells, const std::array<bool, 3>& periodic) {
  if (dim != 2 && dim != 3) throw InvalidArgument("make_cartesian_mesh: dim must be 2 or 3");
  for (int a = 0; a < dim; ++a) {
    if (cells[a] < 1) throw InvalidArgument("make_cartesian_mesh: need at least one cell per axis");
    if (!(upper[a] > lower[a])) throw InvalidArgument("make_cartesian_mesh: empty extent");
  }
  Mesh m;
  m.dim = dim;
  m.ngeo = 1;
  m.lower = lower;
  m.upper = upper;
  m.periodic = periodic;
  constexpr int scale = 2;  // leaves room for one 2:1 refinement
  for (int a = 0; a < 3; ++a) m.extent[a] = a < dim ? cells[a] * scale : 1;
  const int nz = dim == 3 ? cells[2] : 1;
  for (int i = 0; i < cells[0]; ++i)
    for (int j = 0; j < cells[1]; ++j)
      for (int k = 0; k < nz; ++k) {
        Element el;
        el.lo = {i * scale, j * scale, dim == 3 ? k * scale : 0};
        el.size = {scale, scale, dim == 3 ? scale : 1};
        m.elements.push_back(el);
        m.mapping.push_back(affine_mapping(m, el, 1));
      }
  build_topology(m);
  return m;
}

/// @brief Re-interpolates every element mapping onto a degree-ngeo Lobatto grid.
inline void set_mapping_degree(Mesh& m, int ngeo) {
  if (ngeo < 1) throw InvalidArgument("set_mapping_degree: N_geo must be >= 1");
  if (ngeo == m.ngeo) return;
  LobattoGrid from(m.dim, m.ngeo), to(m.dim, ngeo);
  Matrix V = from.interp(to.points());
  for (auto& X : m.mapping) X = V * X;
  m.ngeo = ngeo;
}

/// @brief Applies a pointwise map to the mapping nodes of every element.
inline void apply_warp(Mesh& m, const std::function<void(const double*, double*)>& phi) {
  for (auto& X : m.mapping)
    for (int i = 0; i < X.rows(); ++i) {
      double in[3] = {0, 0, 0}, out[3] = {0, 0, 0};
      for (int a = 0; a < m.dim; ++a) in[a] = X(i, a);
      phi(in, out);
      for (int a = 0; a < m.dim; ++a) X(i, a) = out[a];
    }
}

/// @brief Splits the selected elements into 2^dim children. Children inherit the
/// parent's mapping polynomial (keeps refined meshes watertight).
inline Mesh refine_elements(const Mesh& m, const std::vector<bool>& selected) {
  Mesh r = m;
  r.elements.clear();
  r.mapping.clear();
  LobattoGrid G(m.dim, m.ngeo);
  const Matrix P = G.points();
  const int nchild = 1 << m.dim;
  for (int e = 0; e < m.num_elements(); ++e) {
    const auto& el = m.elements[e];
    if (!selected[e]) {
      r.elements.push_back(el);
      r.mapping.push_back(m.mapping[e]);
      continue;
    }
    for (int a = 0; a < m.dim; ++a)
      if (el.size[a] % 2 != 0) throw InvalidArgument("refine_elements: element already at finest lattice size");
    for (int c = 0; c < nchild; ++c) {
      std::array<int, 3> bit{0, 0, 0};
      for (int a = 0; a < m.dim; ++a) bit[a] = (c >> (m.dim - 1 - a)) & 1;
      Element ch = el;
      Matrix pts = P;
      for (int a = 0; a < m.dim; ++a) {
        ch.size[a] = el.size[a] / 2;
        ch.lo[a] = el.lo[a] + bit[a] * ch.size[a];
        for (int i = 0; i < P.rows(); ++i) pts(i, a) = 0.5 * (P(i, a) + (2 * bit[a] - 1));
      }
      r.elements.push_back(ch);
      r.mapping.push_back(G.interp(pts) * m.mapping[e]);
    }
  }
  build_topology(r);
  return r;
}

/// @brief Refines cells with (i + j) % 2 == parity. Odd cell counts are accepted.
inline Mesh checkerboard_refine_2d(const Mesh& m, int parity = 0) {
  if (m.dim != 2) throw InvalidArgument("checkerboard_refine_2d: 2D meshes only");
  std::vector<bool> sel(m.num_elements());
  for (int e = 0; e < m.num_elements(); ++e) {
    const auto& el = m.elements[e];
    for (int a = 0; a < 2; ++a)
      if (el.size[a] != m.elements[0].size[a])
        throw InvalidArgument("checkerboard_refine_2d: input mesh must be uniform and conforming");
    const int i = el.lo[0] / el.size[0], j = el.lo[1] / el.size[1];
    sel[e] = ((i + j) % 2) == parity;
  }
  return refine_elements(m, sel);
}

/// @brief Domain [0,15]x[0,20]x[0,1]; elements with x >= interface_x are refined.
/// Coarse cell size h; the x3 direction uses max(1, round(1/h)) cells.
inline Mesh two_block_base_mesh_3d(double h) {
  const double L[3] = {15.0, 20.0, 1.0};
  std::array<int, 3> cells{};
  for (int a = 0; a < 2; ++a) {
    const double c = L[a] / h;
    cells[a] = static_cast<int>(std::lround(c));
    if (std::abs(c - cells[a]) > 1e-9 || cells[a] < 1) throw InvalidArgument("two_block_mesh_3d: h must divide the domain");
  }
  if (h >= 1.0) {
    cells[2] = 1;
  } else {
    const double c = 1.0 / h;
    cells[2] = static_cast<int>(std::lround(c));
    if (std::abs(c - cells[2]) > 1e-9) throw InvalidArgument("two_block_mesh_3d: h must divide the domain");
  }
  return make_cartesian_mesh(3, {0, 0, 0}, {L[0], L[1], L[2]}, cells, {true, true, true});
}

inline Mesh refine_right_block(const Mesh& base, double interface_x) {
  std::vector<bool> sel(base.num_elements());
  bool aligned = false;
  for (int e = 0; e < base.num_elements(); ++e) {
    const auto& el = base.elements[e];
    const double x0 = base.lattice_to_physical(0, el.lo[0]);
    const double x1 = base.lattice_to_physical(0, el.lo[0] + el.size[0]);
    if (std::abs(x0 - interface_x) < 1e-9) aligned = true;
    if (x0 < interface_x - 1e-9 && x1 > interface_x + 1e-9)
      throw InvalidArgument("two_block_mesh_3d: interface plane cuts through cells (misaligned block extents)");
    sel[e] = x0 >= interface_x - 1e-9;
  }
  if (!aligned) throw InvalidArgument("two_block_mesh_3d: interface plane is not a cell boundary");
  return refine_elements(base, sel);
}

inline Mesh two_block_mesh_3d(double h, double interface_x = 7.0) { return refine_right_block(two_block_base_mesh_3d(h), interface_x); }

/// @brief The two-stage 2D warp with amplitude alpha on [x0, x0+Lx] x [yc-Ly/2, yc+Ly/2].
inline void warp_2d(Mesh& m, double alpha, int ngeo) {
  if (m.dim != 2) throw InvalidArgument("warp_2d: 2D meshes only");
  set_mapping_degree(m, ngeo);
  const double Lx = m.upper[0] - m.lower[0], Ly = m.upper[1] - m.lower[1];
  const double x0 = m.lower[0], yc = 0.5 * (m.lower[1] + m.upper[1]);
  const double pi = std::numbers::pi;
  apply_warp(m, [=](const double* p, double* q) {
    const double x = p[0] - x0, y = p[1] - yc;
    const double xt = x + Lx * alpha * std::cos(pi / Lx * (x - 0.5 * Lx)) * std::cos(3.0 * pi / Ly * y);
    const double yt = y + Ly * alpha * std::sin(4.0 * pi / Lx * (xt - 0.5 * Lx)) * std::cos(pi / Ly * y);
    q[0] = xt + x0;
    q[1] = yt + yc;
  });
}

/// @brief The appendix warp x + 1/4 cos(x) sin(y) sin(z) (and cyclic), for meshes of [-1,1]^3.
inline void warp_3d(Mesh& m, int ngeo) {
  if (m.dim != 3) throw InvalidArgument("warp_3d: 3D meshes only");
  set_mapping_degree(m, ngeo);
  apply_warp(m, [](const double* p, double* q) {
    const double x = p[0], y = p[1], z = p[2];
    q[0] = x + 0.25 * std::cos(x) * std::sin(y) * std::sin(z);
    q[1] = y + 0.25 * std::sin(x) * std::cos(y) * std::sin(z);
    q[2] = z + 0.25 * std::sin(x) * std::sin(y) * std::cos(z);
  });
}

/// @brief Periodic-compatible smooth warp of a box domain: each coordinate is
/// shifted by alpha * L_k * prod sin(2 pi (x_a - lower_a) / L_a).
inline void warp_box(Mesh& m, double alpha, int ngeo) {
  set_mapping_degree(m, ngeo);
  const auto lo = m.lower, up = m.upper;
  const int dim = m.dim;
  apply_warp(m, [=](const double* p, double* q) {
    double s = 1.0;
    for (int a = 0; a < dim; ++a) s *= std::sin(2.0 * std::numbers::pi * (p[a] - lo[a]) / (up[a] - lo[a]));
    for (int a = 0; a < dim; ++a) q[a] = p[a] + alpha * (up[a] - lo[a]) * s;
  });
}

// ---- text format -----------------------------------------------------------
//
//   esdg-mesh 1
//   dim <d> ngeo <P>
//   lower <x..> upper <x..> extent <n..> periodic <0|1 ..>
//   elements <K>
//   <lo..> <size..>                      one line per element
//   <x..>                                (P+1)^d lines per element
//   faces <F>
//   <elem> <face> <kind> [<nbr> <nbr_face>] | [<n> <fine elems..>] | [<coarse> <coarse_face> <subface>]
//   end

inline void write_mesh(const Mesh& m, std::ostream& os) {
  os.precision(17);
  const int d = m.dim;
  os << "esdg-mesh 1\n";
  os << "dim " << d << " ngeo " << m.ngeo << "\n";
  os << "lower";
  for (int a = 0; a < d; ++a) os << ' ' << m.lower[a];
  os << " upper";
  for (int a = 0; a < d; ++a) os << ' ' << m.upper[a];
  os << " extent";
  for (int a = 0; a < d; ++a) os << ' ' << m.extent[a];
  os << " periodic";
  for (int a = 0; a < d; ++a) os << ' ' << (m.periodic[a] ? 1 : 0);
  os << "\nelements " << m.num_elements() << "\n";
  for (int e = 0; e < m.num_elements(); ++e) {
    const auto& el = m.elements[e];
    for (int a = 0; a < d; ++a) os << el.lo[a] << ' ';
    for (int a = 0; a < d; ++a) os << el.size[a] << (a + 1 < d ? ' ' : '\n');
    const auto& X = m.mapping[e];
    for (int i = 0; i < X.rows(); ++i)
      for (int a = 0; a < d; ++a) os << X(i, a) << (a + 1 < d ? ' ' : '\n');
  }
  os << "faces " << m.num_elements() * m.nfaces() << "\n";
  for (int e = 0; e < m.num_elements(); ++e)
    for (int f = 0; f < m.nfaces(); ++f) {
      const auto& l = m.links[e][f];
      os << e << ' ' << f << ' ' << to_string(l.kind);
      if (l.kind == FaceKind::Conforming) os << ' ' << l.nbr << ' ' << l.nbr_face;
      if (l.kind == FaceKind::MortarFine) os << ' ' << l.nbr << ' ' << l.nbr_face << ' ' << l.subface;
      if (l.kind == FaceKind::MortarCoarse) {
        os << ' ' << l.fine.size();
        for (int x : l.fine) os << ' ' << x;
      }
      os << '\n';
    }
  os << "end\n";
}

inline void write_mesh_file(const Mesh& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw InvalidArgument("cannot open mesh file for writing: " + path);
  write_mesh(m, os);
}

/// @brief Reads a mesh; the face records are checked against the topology
/// implied by the element boxes.
inline Mesh read_mesh(std::istream& is) {
  auto expect = [&](const std::string& word) {
    std::string w;
    if (!(is >> w) || w != word) throw InvalidArgument("mesh file: expected '" + word + "'");
  };
  Mesh m;
  int version = 0;
  expect("esdg-mesh");
  is >> version;
  if (version != 1) throw InvalidArgument("mesh file: unsupported version");
  expect("dim");
  is >> m.dim;
  if (m.dim != 2 && m.dim != 3) throw InvalidArgument("mesh file: dim must be 2 or 3");
  expect("ngeo");
  is >> m.ngeo;
  if (m.ngeo < 1) throw InvalidArgument("mesh file: ngeo must be >= 1");
  const int d = m.dim;
  expect("lower");
  for (int a = 0; a < d; ++a) is >> m.lower[a];
  expect("upper");
  for (int a = 0; a < d; ++a) is >> m.upper[a];
  expect("extent");
  for (int a = 0; a < d; ++a) is >> m.extent[a];
  expect("periodic");
  for (int a = 0; a < d; ++a) {
    int p = 0;
    is >> p;
    m.periodic[a] = p != 0;
  }
  int K = 0;
  expect("elements");
  is >> K;
  if (!is || K < 1) throw InvalidArgument("mesh file: bad element count");
  const int np = ipow(m.ngeo + 1, d);
  for (int e = 0; e < K; ++e) {
    Element el;
    for (int a = 0; a < d; ++a) is >> el.lo[a];
    for (int a = 0; a < d; ++a) is >> el.size[a];
    Matrix X(np, d);
    for (int i = 0; i < np; ++i)
      for (int a = 0; a < d; ++a) is >> X(i, a);
    if (!is) throw InvalidArgument("mesh file: truncated element block");
    m.elements.push_back(el);
    m.mapping.push_back(X);
  }
  build_topology(m);
  int F = 0;
  expect("faces");
  is >> F;
  for (int r = 0; r < F; ++r) {
    int e = 0, f = 0;
    std::string kind;
    is >> e >> f >> kind;
    if (!is || e < 0 || e >= K || f < 0 || f >= m.nfaces()) throw InvalidArgument("mesh file: bad face record");
    const auto& l = m.links[e][f];
    bool ok = kind == to_string(l.kind);
    if (kind == "conforming") {
      int n = 0, nf = 0;
      is >> n >> nf;
      ok = ok && n == l.nbr && nf == l.nbr_face;
    } else if (kind == "fine") {
      int n = 0, nf = 0, s = 0;
      is >> n >> nf >> s;
      ok = ok && n == l.nbr && nf == l.nbr_face && s == l.subface;
    } else if (kind == "mortar") {
      int n = 0;
      is >> n;
      std::vector<int> fine(n);
      for (auto& x : fine) is >> x;
      ok = ok && fine == l.fine;
    }
    if (!ok) throw InvalidArgument("mesh file: face record (" + std::to_string(e) + "," + std::to_string(f) +
                                   ") disagrees with element boxes");
  }
  expect("end");
  return m;
}

inline Mesh read_mesh_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("cannot open mesh file: " + path);
  return read_mesh(is);
}

}  // namespace esdg
