#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "solver.hpp"

namespace esdg {

/// @brief 2D isentropic vortex on [0,15] x [-5,5], periodic in x with period 15.
inline State<2> vortex_2d(double x, double y, double t, double gamma = kDefaultGamma) {
  constexpr double x0 = 5.0, y0 = 0.0, beta = 5.0, Lx = 15.0;
  const double pi = std::numbers::pi;
  double dx = x - x0 - t;
  dx -= Lx * std::floor((dx + 0.5 * Lx) / Lx);
  const double dy = y - y0;
  const double e = std::exp(1.0 - (dx * dx + dy * dy));
  const double rho = std::pow(1.0 - 0.5 * (gamma - 1.0) * (beta * e) * (beta * e) / (8.0 * gamma * pi * pi), 1.0 / (gamma - 1.0));
  const double u = 1.0 - beta / (2.0 * pi) * e * dy;
  const double v = beta / (2.0 * pi) * e * dx;
  return conservative_from_primitive<2>(rho, {u, v}, std::pow(rho, gamma), gamma);
}

/// @brief Extruded vortex on [0,15] x [0,20] x [0,1] moving in +y, periodic in y with period 20.
inline State<3> vortex_3d(double x, double y, double z, double t, double gamma = kDefaultGamma) {
  (void)z;
  constexpr double c1 = 7.5, c2 = 7.5, pmax = 0.4, Ly = 20.0;
  const double p0 = 1.0 / gamma;
  double dy = y - c2 - t;
  dy -= Ly * std::floor((dy + 0.5 * Ly) / Ly);
  const double r1 = -dy, r2 = x - c1;
  const double Pi = pmax * std::exp(0.5 * (1.0 - r1 * r1 - r2 * r2));
  const double th = 1.0 - 0.5 * (gamma - 1.0) * Pi * Pi;
  const double rho = std::pow(th, 1.0 / (gamma - 1.0));
  const double p = p0 * std::pow(th, gamma / (gamma - 1.0));
  return conservative_from_primitive<3>(rho, {Pi * r1, Pi * r2 + 1.0, 0.0}, p, gamma);
}

template <int Dim>
State<Dim> vortex(const double* x, double t, double gamma = kDefaultGamma) {
  if constexpr (Dim == 2)
    return vortex_2d(x[0], x[1], t, gamma);
  else
    return vortex_3d(x[0], x[1], x[2], t, gamma);
}

struct RunConfig {
  int dim = 2;
  int N = 2;
  NodeKind kind = NodeKind::Gauss;
  Formulation formulation = Formulation::MortarFaceLocal;
  int geo_approach = 2;  // 3D only: 1 curl, 2 reduced curl
  int ngeo = -1;         // -1: N on curved meshes, 1 otherwise
  std::string mesh = "checkerboard";
  int levels = 2;
  int first_level = 0;
  bool curved = false;
  double cfl = 0.5;
  double final_time = -1.0;  // -1: 5 in 2D, 1 in 3D
  Dissipation dissipation = Dissipation::LaxFriedrichs;
  int threads = 1;
  unsigned seed = 0;
  double interface_x = 7.0;
  int parity = 0;
  double alpha = 1.0 / 16.0;     // 2D warp amplitude
  double alpha_3d = 1.0 / 32.0;  // 3D box warp amplitude
};

inline int effective_ngeo(const RunConfig& c) {
  if (c.ngeo > 0) return c.ngeo;
  return c.curved ? c.N : 1;
}

inline double default_final_time(int dim) { return dim == 2 ? 5.0 : 1.0; }

/// @brief Nominal mesh size of refinement level k (base conforming cell size).
inline double level_h(int dim, int k) { return dim == 2 ? 15.0 / (9 << k) : 1.0 / (1 << k); }

/// @brief Mesh of refinement level k for the vortex domains (or a mesh file).
inline Mesh build_level_mesh(const RunConfig& c, int k) {
  if (c.mesh.rfind("file:", 0) == 0) {
    Mesh m = read_mesh_file(c.mesh.substr(5));
    if (m.dim != c.dim) throw InvalidArgument("mesh file dimension does not match --dim");
    if (effective_ngeo(c) > m.ngeo) set_mapping_degree(m, effective_ngeo(c));
    return m;
  }
  const bool refine = c.mesh == "checkerboard" || c.mesh == "two-block";
  if (c.mesh != "cartesian" && !refine) throw InvalidArgument("unknown mesh '" + c.mesh + "'");
  if (c.dim == 2 && c.mesh == "two-block") throw InvalidArgument("two-block meshes are 3D");
  if (c.dim == 3 && c.mesh == "checkerboard") throw InvalidArgument("checkerboard meshes are 2D");
  const int ngeo = effective_ngeo(c);
  if (c.dim == 2) {
    Mesh m = make_cartesian_mesh(2, {0.0, -5.0, 0.0}, {15.0, 5.0, 1.0}, {9 << k, 6 << k, 1}, {true, true, true});
    if (c.curved)
      warp_2d(m, c.alpha, ngeo);
    else
      set_mapping_degree(m, ngeo);
    return refine ? checkerboard_refine_2d(m, c.parity) : m;
  }
  Mesh m = two_block_base_mesh_3d(level_h(3, k));
  if (c.curved)
    warp_box(m, c.alpha_3d, ngeo);
  else
    set_mapping_degree(m, ngeo);
  return refine ? refine_right_block(m, c.interface_x) : m;
}

inline GeoApproach geo_approach_of(const RunConfig& c) {
  return c.dim == 2 ? GeoApproach::CrossProduct : geo_approach_from_int(3, c.geo_approach);
}

inline SolverOptions solver_options(const RunConfig& c) {
  SolverOptions o;
  o.kind = c.kind;
  o.N = c.N;
  o.formulation = c.formulation;
  o.dissipation = c.dissipation;
  o.threads = c.threads;
  return o;
}

/// @brief Tensor Lagrange interpolation from 1D nodes x (first axis slowest) to points.
inline Matrix tensor_interp(const std::vector<double>& x, int dim, const Matrix& pts) {
  const int n1 = static_cast<int>(x.size()), n = ipow(n1, dim), m = static_cast<int>(pts.rows());
  std::vector<Matrix> L(dim);
  for (int a = 0; a < dim; ++a) {
    std::vector<double> t(m);
    for (int i = 0; i < m; ++i) t[i] = pts(i, a);
    L[a] = lagrange_interp_matrix(x, t);
  }
  Matrix V(m, n);
  for (int j = 0; j < n; ++j) {
    int idx = j;
    std::array<int, 3> k{0, 0, 0};
    for (int a = dim - 1; a >= 0; --a) {
      k[a] = idx % n1;
      idx /= n1;
    }
    for (int i = 0; i < m; ++i) {
      double v = 1.0;
      for (int a = 0; a < dim; ++a) v *= L[a](i, k[a]);
      V(i, j) = v;
    }
  }
  return V;
}

/// @brief Tensor Gauss rule with n points per axis on [-1,1]^dim.
inline std::pair<Matrix, Vector> tensor_gauss(int dim, int n) {
  const auto q = gauss_quadrature(n);
  const int m = ipow(n, dim);
  Matrix p(m, dim);
  Vector w(m);
  for (int i = 0; i < m; ++i) {
    int idx = i;
    w[i] = 1.0;
    for (int a = dim - 1; a >= 0; --a) {
      const int k = idx % n;
      idx /= n;
      p(i, a) = q.nodes[k];
      w[i] *= q.weights[k];
    }
  }
  return {p, w};
}

template <int Dim>
struct ErrorEntry {
  double h = 0.0;
  std::array<double, Dim + 2> l2{};
  std::array<double, Dim + 2> linf{};
  double l2_total = 0.0;
  double linf_total = 0.0;
};

/// @brief L2 / Linf errors against the vortex at time t using n Gauss points per axis.
template <int Dim>
ErrorEntry<Dim> compute_errors(const Solver<Dim>& s, const std::vector<State<Dim>>& u, double t, int npts) {
  const auto& T = s.ops();
  const auto& geo = s.geometry();
  const auto [pts, w] = tensor_gauss(Dim, npts);
  const Matrix Vu = tensor_interp(T.op1d.quad.nodes, Dim, pts);
  const Matrix Vx = geo.grid.interp(pts);
  ErrorEntry<Dim> out;
  std::array<double, Dim + 2> sq{};
  const int nv = T.nv;
  for (int e = 0; e < s.num_elements(); ++e) {
    const Matrix& X = geo.mesh.mapping[e];
    Matrix xp = Vx * X;
    Matrix Jm = mapping_jacobian(X, geo.grid, pts);
    Matrix ue(nv, Dim + 2);
    for (int a = 0; a < nv; ++a)
      for (int k = 0; k < Dim + 2; ++k) ue(a, k) = u[size_t(e) * nv + a][k];
    Matrix uh = Vu * ue;
    for (int q = 0; q < pts.rows(); ++q) {
      const double J = det_row(Jm, q, Dim);
      double x[3] = {0, 0, 0};
      for (int a = 0; a < Dim; ++a) x[a] = xp(q, a);
      const auto ex = vortex<Dim>(x, t);
      for (int k = 0; k < Dim + 2; ++k) {
        const double d = uh(q, k) - ex[k];
        sq[k] += w[q] * J * d * d;
        out.linf[k] = std::max(out.linf[k], std::abs(d));
      }
    }
  }
  for (int k = 0; k < Dim + 2; ++k) {
    out.l2[k] = std::sqrt(sq[k]);
    out.l2_total += sq[k];
    out.linf_total = std::max(out.linf_total, out.linf[k]);
  }
  out.l2_total = std::sqrt(out.l2_total);
  return out;
}

template <int Dim>
std::vector<State<Dim>> sample(const Solver<Dim>& s, const std::function<State<Dim>(const double*)>& f) {
  const Matrix& X = s.node_coordinates();
  std::vector<State<Dim>> u(s.num_dofs());
  for (int i = 0; i < s.num_dofs(); ++i) {
    double x[3] = {0, 0, 0};
    for (int a = 0; a < Dim; ++a) x[a] = X(i, a);
    u[i] = f(x);
  }
  return u;
}

struct LevelResult {
  int level = 0;
  double h = 0.0;
  int elements = 0;
  int steps = 0;
  double dt = 0.0;
  std::vector<double> l2, linf;
  double l2_total = 0.0, linf_total = 0.0;
  double rate_l2 = std::nan("");
  double wall_seconds = 0.0;
};

template <int Dim>
LevelResult run_vortex_level(const RunConfig& c, int k) {
  const auto t0 = std::chrono::steady_clock::now();
  Mesh m = build_level_mesh(c, k);
  auto geo = build_geometry(m, geo_approach_of(c));
  Solver<Dim> s(geo, solver_options(c));
  const double T = c.final_time > 0 ? c.final_time : default_final_time(Dim);
  auto u = sample<Dim>(s, [](const double* x) { return vortex<Dim>(x, 0.0); });
  const double dt = estimate_dt(s.mesh_size_estimate(), Dim, c.N, s.max_wavespeed_of(u), c.cfl);
  auto res = integrate<Dim>(s, u, T, dt, default_check_cadence());
  auto err = compute_errors<Dim>(s, u, T, c.N + (Dim == 2 ? 2 : 3));
  LevelResult r;
  r.level = k;
  r.h = c.mesh.rfind("file:", 0) == 0 ? s.mesh_size_estimate() : level_h(Dim, k);
  r.elements = s.num_elements();
  r.steps = res.steps;
  r.dt = dt;
  r.l2.assign(err.l2.begin(), err.l2.end());
  r.linf.assign(err.linf.begin(), err.linf.end());
  r.l2_total = err.l2_total;
  r.linf_total = err.linf_total;
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline double fitted_rate(double e0, double e1, double h0, double h1) { return std::log(e0 / e1) / std::log(h0 / h1); }

inline void fill_rates(std::vector<LevelResult>& rows) {
  for (size_t i = 1; i < rows.size(); ++i)
    rows[i].rate_l2 = fitted_rate(rows[i - 1].l2_total, rows[i].l2_total, rows[i - 1].h, rows[i].h);
}

inline std::vector<std::string> field_names(int dim) {
  return dim == 2 ? std::vector<std::string>{"rho", "rhou", "rhov", "E"}
                  : std::vector<std::string>{"rho", "rhou", "rhov", "rhow", "E"};
}

inline void write_convergence_csv(std::ostream& os, const RunConfig& c, const std::vector<LevelResult>& rows) {
  const auto names = field_names(c.dim);
  os << "level,h,N,quad,formulation,l2_total,linf_total,rate_l2,wall_seconds";
  for (const auto& n : names) os << ",l2_" << n;
  for (const auto& n : names) os << ",linf_" << n;
  os << "\n" << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.level << "," << r.h << "," << c.N << "," << to_string(c.kind) << "," << to_string(c.formulation) << ","
       << r.l2_total << "," << r.linf_total << ",";
    if (!std::isnan(r.rate_l2)) os << r.rate_l2;
    os << "," << std::setprecision(4) << r.wall_seconds << std::setprecision(10);
    for (double v : r.l2) os << "," << v;
    for (double v : r.linf) os << "," << v;
    os << "\n";
  }
}

/// @brief Runs levels first_level .. first_level+levels-1; on_level is called after each one.
inline std::vector<LevelResult> run_convergence(const RunConfig& c,
                                                const std::function<void(const LevelResult&)>& on_level = {}) {
  if (c.levels < 1) throw InvalidArgument("--levels must be >= 1");
  std::vector<LevelResult> rows;
  for (int k = c.first_level; k < c.first_level + c.levels; ++k) {
    rows.push_back(c.dim == 2 ? run_vortex_level<2>(c, k) : run_vortex_level<3>(c, k));
    fill_rates(rows);
    if (on_level) on_level(rows.back());
  }
  return rows;
}

// ---- entropy conservation check ----------------------------------------------

struct EntropyResult {
  int dim = 2;
  int N = 1;
  NodeKind kind = NodeKind::Gauss;
  Formulation formulation = Formulation::MortarFaceLocal;
  double value = 0.0;     // v^T (M du/dt)
  double absolute = 0.0;  // |value|
  double relative = 0.0;  // |value| / (||v|| ||M du/dt||)
};

/// @brief Piecewise-constant data with jumps at the domain midlines; optional seeded
/// +-1e-2 perturbation of density and pressure.
template <int Dim>
std::vector<State<Dim>> discontinuous_data(const Solver<Dim>& s, unsigned seed) {
  const auto& m = s.geometry().mesh;
  const double xm = 0.5 * (m.lower[0] + m.upper[0]), ym = 0.5 * (m.lower[1] + m.upper[1]);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pert(-1e-2, 1e-2);
  return sample<Dim>(s, [&](const double* x) {
    double rho = 1.0 + 0.5 * (x[0] < xm), p = 1.0 + 0.3 * (x[1] < ym);
    if (seed != 0) {
      rho += pert(rng);
      p += pert(rng);
    }
    std::array<double, Dim> vel;
    vel[0] = 0.1;
    vel[1] = 0.2;
    if constexpr (Dim == 3) vel[2] = 0.1;
    return conservative_from_primitive<Dim>(rho, vel, p);
  });
}

/// @brief Small curved meshes for the entropy check. Non-conforming unless conforming is requested.
inline Mesh entropy_check_mesh(int dim, int ngeo, bool conforming, double interface_x = 5.0) {
  if (dim == 2) {
    Mesh m = make_cartesian_mesh(2, {0.0, -5.0, 0.0}, {15.0, 5.0, 1.0}, {6, 4, 1}, {true, true, true});
    warp_2d(m, 1.0 / 16.0, ngeo);
    return conforming ? m : checkerboard_refine_2d(m);
  }
  Mesh m = make_cartesian_mesh(3, {0, 0, 0}, {15.0, 20.0, 1.0}, {3, 4, 2}, {true, true, true});
  warp_box(m, 1.0 / 32.0, ngeo);
  return conforming ? m : refine_right_block(m, interface_x);
}

template <int Dim>
EntropyResult entropy_check_one(const Mesh& m, GeoApproach approach, const SolverOptions& o, unsigned seed) {
  auto geo = build_geometry(m, approach);
  Solver<Dim> s(geo, o);
  auto u = discontinuous_data<Dim>(s, seed);
  auto [v, scale] = s.spatial_entropy(u);
  EntropyResult r;
  r.dim = Dim;
  r.N = o.N;
  r.kind = o.kind;
  r.formulation = o.formulation;
  r.value = v;
  r.absolute = std::abs(v);
  r.relative = scale > 0 ? std::abs(v) / scale : 0.0;
  return r;
}

/// @brief Spatial entropy production of one configuration on the curved check mesh.
inline EntropyResult run_entropy_check_case(int dim, int N, NodeKind kind, Formulation f, int geo_approach, int ngeo,
                                            Dissipation diss, unsigned seed, int threads = 1) {
  if (ngeo < 1) ngeo = N;
  Mesh m = entropy_check_mesh(dim, ngeo, f == Formulation::Conforming);
  SolverOptions o;
  o.kind = kind;
  o.N = N;
  o.formulation = f;
  o.dissipation = diss;
  o.threads = threads;
  if (dim == 2) return entropy_check_one<2>(m, GeoApproach::CrossProduct, o, seed);
  return entropy_check_one<3>(m, geo_approach_from_int(3, geo_approach), o, seed);
}

inline std::vector<Formulation> formulations_for(int dim) {
  std::vector<Formulation> f{Formulation::Conforming, Formulation::MortarDirect, Formulation::MortarFaceLocal};
  if (dim == 3) f.push_back(Formulation::TwoLayerMortar);
  return f;
}

// ---- metric-term convergence ---------------------------------------------------

struct MetricResult {
  int approach = 1;
  int ngeo = 1;
  double h = 0.0;
  double error = 0.0;
  double rate = std::nan("");
};

inline void warp_3d_jacobian(const double* p, double* A) {
  const double x = p[0], y = p[1], z = p[2];
  const double cx = std::cos(x), sx = std::sin(x), cy = std::cos(y), sy = std::sin(y), cz = std::cos(z), sz = std::sin(z);
  A[0] = 1.0 - 0.25 * sx * sy * sz;
  A[1] = 0.25 * cx * cy * sz;
  A[2] = 0.25 * cx * sy * cz;
  A[3] = 0.25 * cx * cy * sz;
  A[4] = 1.0 - 0.25 * sx * sy * sz;
  A[5] = 0.25 * sx * cy * cz;
  A[6] = 0.25 * cx * sy * cz;
  A[7] = 0.25 * sx * cy * cz;
  A[8] = 1.0 - 0.25 * sx * sy * sz;
}

/// @brief L2 error of the discrete metric terms on the warped cube [-1,1]^3 with K^3 elements.
inline double metric_error(int approach, int ngeo, int K, bool identity = false) {
  Mesh m = make_cartesian_mesh(3, {-1, -1, -1}, {1, 1, 1}, {K, K, K}, {false, false, false});
  if (identity)
    set_mapping_degree(m, ngeo);
  else
    warp_3d(m, ngeo);
  auto geo = build_geometry(m, geo_approach_from_int(3, approach));
  const auto [pts, w] = tensor_gauss(3, ngeo + 3);
  const Matrix V = geo.grid.interp(pts);
  double sq = 0.0;
  for (int e = 0; e < m.num_elements(); ++e) {
    const auto& el = m.elements[e];
    Matrix g = V * geo.g[e];
    for (int q = 0; q < pts.rows(); ++q) {
      double p[3], scale[3];
      for (int a = 0; a < 3; ++a) {
        const double lat = el.lo[a] + 0.5 * (pts(q, a) + 1.0) * el.size[a];
        p[a] = m.lattice_to_physical(a, lat);
        scale[a] = 0.5 * el.size[a] * (m.upper[a] - m.lower[a]) / m.extent[a];
      }
      double A[9], ge[9];
      if (identity) {
        for (int k = 0; k < 9; ++k) A[k] = (k % 4 == 0) ? 1.0 : 0.0;
      } else {
        warp_3d_jacobian(p, A);
      }
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) A[a * 3 + b] *= scale[b];
      cofactor_metrics(A, 3, ge);
      const double J = A[0] * (A[4] * A[8] - A[5] * A[7]) - A[1] * (A[3] * A[8] - A[5] * A[6]) + A[2] * (A[3] * A[7] - A[4] * A[6]);
      for (int k = 0; k < 9; ++k) {
        const double d = g(q, k) - ge[k];
        sq += w[q] * J * d * d;
      }
    }
  }
  return std::sqrt(sq);
}

/// @brief Metric errors for K = 2, 4, ..., 2^levels (h = 2/K) and fitted rates.
inline std::vector<MetricResult> run_metric_convergence(int approach, int ngeo, int levels = 4) {
  std::vector<MetricResult> out;
  for (int l = 0; l < levels; ++l) {
    const int K = 2 << l;
    MetricResult r;
    r.approach = approach;
    r.ngeo = ngeo;
    r.h = 2.0 / K;
    r.error = metric_error(approach, ngeo, K);
    if (!out.empty()) r.rate = fitted_rate(out.back().error, r.error, out.back().h, r.h);
    out.push_back(r);
  }
  return out;
}

}  // namespace esdg
