#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "euler.hpp"
#include "geometry.hpp"

namespace esdg {

enum class Formulation { Conforming, MortarDirect, MortarFaceLocal, TwoLayerMortar };
enum class Dissipation { None, LaxFriedrichs };

inline std::string to_string(Formulation f) {
  switch (f) {
    case Formulation::Conforming: return "conforming";
    case Formulation::MortarDirect: return "mortar-direct";
    case Formulation::MortarFaceLocal: return "mortar";
    case Formulation::TwoLayerMortar: return "two-mortar";
  }
  return "?";
}

inline Formulation parse_formulation(const std::string& s) {
  if (s == "conforming") return Formulation::Conforming;
  if (s == "mortar-direct") return Formulation::MortarDirect;
  if (s == "mortar") return Formulation::MortarFaceLocal;
  if (s == "two-mortar") return Formulation::TwoLayerMortar;
  throw InvalidArgument("unknown formulation '" + s + "'");
}

inline Dissipation parse_dissipation(const std::string& s) {
  if (s == "none") return Dissipation::None;
  if (s == "lf") return Dissipation::LaxFriedrichs;
  throw InvalidArgument("unknown dissipation '" + s + "'");
}

struct SolverOptions {
  NodeKind kind = NodeKind::Gauss;
  int N = 2;
  Formulation formulation = Formulation::MortarFaceLocal;
  Dissipation dissipation = Dissipation::LaxFriedrichs;
  double gamma = kDefaultGamma;
  // give conforming faces an explicit identity mortar layer
  bool explicit_conforming_mortars = false;
  int threads = 1;
};

enum class ChainType { None, Identity, Split, TwoLayer };

/// @brief Runs body(begin, end) over [0, n) split into contiguous chunks.
inline void parallel_for(int n, int threads, const std::function<void(int, int)>& body) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  const int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int b = t * chunk, e = std::min(n, b + chunk);
    if (b < e) pool.emplace_back(body, b, e);
  }
  for (auto& th : pool) th.join();
}

/// @brief Trace-layer flux pairs of one face chain. Accumulates the face-local
/// correction into r (indexed like prim/gs); returns the number of flux evaluations.
template <int Dim>
int accumulate_chain_pairs(const MortarLayout& L, const std::array<int, 4>& layer_off, double sign,
                           const Primitive<Dim>* prim, const double* gs, State<Dim>* r, double gamma) {
  int evals = 0;
  for (int l = 0; l < L.num_layers(); ++l) {
    const auto& w = L.layers[l + 1].weights;
    for (const auto& t : L.pattern[l]) {
      const int p = layer_off[l] + t.col, q = layer_off[l + 1] + t.row;
      const double c = 0.5 * t.value * w[t.row] * sign;
      double n[3];
      for (int i = 0; i < Dim; ++i) n[i] = c * (gs[p * Dim + i] + gs[q * Dim + i]);
      const auto F = ec_flux_normal<Dim>(prim[p], prim[q], n, gamma);
      for (int k = 0; k < Dim + 2; ++k) {
        r[p][k] += F[k];
        r[q][k] -= F[k];
      }
      ++evals;
    }
  }
  return evals;
}

/// @brief Transposed chain: pushes residual from the terminal layer back to the face nodes.
template <int Dim>
void back_propagate_chain(const MortarLayout& L, const std::array<int, 4>& layer_off, State<Dim>* r) {
  for (int l = L.num_layers() - 1; l >= 0; --l)
    for (const auto& t : L.pattern[l]) {
      const int p = layer_off[l] + t.col, q = layer_off[l + 1] + t.row;
      for (int k = 0; k < Dim + 2; ++k) r[p][k] += t.value * r[q][k];
    }
}

/// @brief Face-local mortar correction delta f at the face nodes of one face
/// (contracted with the scaled normals). Layer 0 of prim/gs are the face nodes.
template <int Dim>
std::vector<State<Dim>> mortar_flux_correction(const MortarLayout& L, double sign, const std::vector<Primitive<Dim>>& prim,
                                               const std::vector<double>& gs, int* evals = nullptr,
                                               double gamma = kDefaultGamma) {
  std::array<int, 4> off{0, 0, 0, 0};
  int total = 0;
  for (int l = 0; l < static_cast<int>(L.layers.size()); ++l) {
    off[l] = total;
    total += L.layers[l].n;
  }
  std::vector<State<Dim>> r(total, State<Dim>{});
  const int n = accumulate_chain_pairs<Dim>(L, off, sign, prim.data(), gs.data(), r.data(), gamma);
  back_propagate_chain<Dim>(L, off, r.data());
  if (evals) *evals = n;
  r.resize(L.face().n);
  return r;
}

template <int Dim>
class Solver {
 public:
  using S = State<Dim>;
  using P = Primitive<Dim>;

  struct FaceChain {
    ChainType type = ChainType::None;
    const MortarLayout* layout = nullptr;
    std::array<int, 4> layer_off{0, 0, 0, 0};  // element-local hybrid index of each layer
    int term_slot = 0;                          // global terminal slot of the first terminal node
    int nterm = 0;
  };

  Solver(const MeshGeometry& geo, const SolverOptions& opt) : geo_(geo), opt_(opt) {
    if (geo.dim() != Dim) throw InvalidArgument("Solver: dimension mismatch between mesh and solver");
    if (opt.N < 1) throw InvalidArgument("Solver: N must be >= 1");
    if (opt.formulation == Formulation::TwoLayerMortar && Dim != 3)
      throw InvalidArgument("two-layer mortars require dim = 3");
    T_ = tensor_operators(opt.kind, opt.N, Dim);
    check_mesh_preconditions(geo, opt.kind, opt.N);
    identity_ = build_mortar_layout(Dim - 1, MortarSplit::Conforming, opt.kind, opt.N);
    split_ = build_mortar_layout(Dim - 1, MortarSplit::HalfSplit, opt.kind, opt.N);
    if (Dim == 3) two_ = build_mortar_layout(Dim - 1, MortarSplit::TwoLayer, opt.kind, opt.N);
    setup_topology();
    setup_metrics();
    setup_pairs();
    setup_partners();
  }

  const TensorOperators& ops() const { return T_; }
  const MeshGeometry& geometry() const { return geo_; }
  const SolverOptions& options() const { return opt_; }
  int num_elements() const { return K_; }
  int nodes_per_element() const { return T_.nv; }
  int num_dofs() const { return K_ * T_.nv; }
  const std::vector<FaceChain>& chains(int e) const { return chain_[e]; }

  /// @brief Physical coordinates of the volume nodes, (K*nv) x Dim.
  const Matrix& node_coordinates() const { return xv_; }
  double jacobian(int e, int a) const { return J_[e * T_.nv + a]; }
  double mass(int e, int a) const { return T_.Mhat[a] * J_[e * T_.nv + a]; }

  /// @brief max |n w + n^+ w^+| over all exchanged trace nodes.
  double watertightness_residual() const {
    double r = 0.0;
    for (int t = 0; t < nterm_; ++t)
      for (int i = 0; i < Dim; ++i) r = std::max(r, std::abs(term_nw_[t * Dim + i] + term_nw_[ext_[t] * Dim + i]));
    return r;
  }

  double gcl_residual_max() const {
    double r = 0.0;
    for (int e = 0; e < K_; ++e) r = std::max(r, gcl_residual(geo_, e, T_));
    return r;
  }

  double min_jacobian() const { return *std::min_element(J_.begin(), J_.end()); }

  /// @brief Weighted residual R with M du/dt = -R (no mass inversion).
  void residual(const std::vector<S>& u, std::vector<S>& R) {
    R.assign(num_dofs(), S{});
    compute_traces(u);
    if (opt_.formulation == Formulation::MortarDirect) {
      parallel_for(K_, opt_.threads, [&](int b, int e) {
        for (int k = b; k < e; ++k) direct_element(k, u, R);
      });
    } else {
      parallel_for(K_, opt_.threads, [&](int b, int e) {
        std::vector<S> r;
        for (int k = b; k < e; ++k) face_local_element(k, R, r);
      });
    }
  }

  /// @brief du/dt = -M^{-1} R.
  void rhs(const std::vector<S>& u, std::vector<S>& dudt) {
    residual(u, dudt);
    for (int i = 0; i < num_dofs(); ++i) {
      const double s = -wJinv_[i];
      for (int k = 0; k < Dim + 2; ++k) dudt[i][k] *= s;
    }
  }

  /// @brief v^T (M du/dt) summed over all nodes, and its scale ||v|| ||M du/dt||.
  std::pair<double, double> spatial_entropy(const std::vector<S>& u) {
    std::vector<S> R;
    residual(u, R);
    double s = 0.0, nv = 0.0, nr = 0.0;
    for (int i = 0; i < num_dofs(); ++i) {
      const auto v = entropy_variables<Dim>(u[i], opt_.gamma);
      for (int k = 0; k < Dim + 2; ++k) {
        s -= v[k] * R[i][k];
        nv += v[k] * v[k];
        nr += R[i][k] * R[i][k];
      }
    }
    return {s, std::sqrt(nv) * std::sqrt(nr)};
  }

  /// @brief Entropy-projected states at the face and mortar nodes of element e
  /// (element-local hybrid order, volume entries hold u itself).
  std::vector<S> entropy_project(const std::vector<S>& u, int e) {
    compute_traces(u);
    std::vector<S> out(ut_.begin() + hyb_off_[e], ut_.begin() + hyb_off_[e] + hyb_size_[e]);
    return out;
  }

  /// @brief h = min over elements of 1 / (||J^-1||_inf ||J_f||_inf).
  double mesh_size_estimate() const {
    double h = 1e300;
    for (int e = 0; e < K_; ++e) {
      double jinv = 0.0, jf = 0.0;
      for (int a = 0; a < T_.nv; ++a) jinv = std::max(jinv, 1.0 / J_[e * T_.nv + a]);
      for (int s = 0; s < T_.nf; ++s) {
        double n2 = 0.0;
        for (int i = 0; i < Dim; ++i) n2 += face_g_[(size_t(e) * T_.nf + s) * Dim + i] * face_g_[(size_t(e) * T_.nf + s) * Dim + i];
        jf = std::max(jf, std::sqrt(n2));
      }
      h = std::min(h, 1.0 / (jinv * jf));
    }
    return h;
  }

  double max_wavespeed_of(const std::vector<S>& u) const {
    double a = 0.0;
    for (const auto& s : u) a = std::max(a, wavespeed<Dim>(primitive<Dim>(s, opt_.gamma), opt_.gamma));
    return a;
  }

  void check_admissible(const std::vector<S>& u) const {
    for (int i = 0; i < num_dofs(); ++i)
      if (!is_admissible<Dim>(u[i], opt_.gamma))
        throw AdmissibilityError("inadmissible state at element " + std::to_string(i / T_.nv) + ", node " +
                                 std::to_string(i % T_.nv));
  }

  /// @brief Sum over nodes of w J u (quadrature totals of each field).
  S integrate(const std::vector<S>& u) const {
    S tot{};
    for (int i = 0; i < num_dofs(); ++i)
      for (int k = 0; k < Dim + 2; ++k) tot[k] += T_.Mhat[i % T_.nv] * J_[i] * u[i][k];
    return tot;
  }

  /// @brief Number of flux-differencing pairs in the face-local correction of one face chain.
  int chain_pair_count(ChainType t) const {
    const MortarLayout* L = layout_of(t);
    if (!L) return 0;
    int n = 0;
    for (const auto& p : L->pattern) n += static_cast<int>(p.size());
    return n;
  }

 private:
  const MortarLayout* layout_of(ChainType t) const {
    switch (t) {
      case ChainType::Identity: return &identity_;
      case ChainType::Split: return &split_;
      case ChainType::TwoLayer: return &two_;
      default: return nullptr;
    }
  }

  ChainType chain_for(FaceKind k) const {
    const bool coarse = k == FaceKind::MortarCoarse;
    const bool ident = opt_.explicit_conforming_mortars || opt_.formulation == Formulation::MortarDirect;
    switch (opt_.formulation) {
      case Formulation::Conforming:
        if (k == FaceKind::MortarCoarse || k == FaceKind::MortarFine)
          throw InvalidArgument("conforming formulation requested on a non-conforming mesh");
        return ident ? ChainType::Identity : ChainType::None;
      case Formulation::MortarDirect:
      case Formulation::MortarFaceLocal:
        return coarse ? ChainType::Split : (ident ? ChainType::Identity : ChainType::None);
      case Formulation::TwoLayerMortar:
        return coarse ? ChainType::TwoLayer : (ident ? ChainType::Identity : ChainType::None);
    }
    return ChainType::None;
  }

  void setup_topology() {
    const auto& m = geo_.mesh;
    K_ = m.num_elements();
    chain_.assign(K_, std::vector<FaceChain>(T_.nfaces));
    hyb_off_.assign(K_, 0);
    hyb_size_.assign(K_, 0);
    term_off_.assign(K_, 0);
    int hoff = 0, toff = 0;
    for (int e = 0; e < K_; ++e) {
      int n = T_.nv + T_.nf;
      term_off_[e] = toff;
      for (int f = 0; f < T_.nfaces; ++f) {
        const auto kind = m.links[e][f].kind;
        if (kind == FaceKind::Boundary) throw InvalidArgument("non-periodic boundaries are not supported");
        auto& c = chain_[e][f];
        c.type = chain_for(kind);
        c.layout = layout_of(c.type);
        c.layer_off[0] = T_.nv + f * T_.nf_face;
        if (c.layout) {
          for (int l = 1; l <= c.layout->num_layers(); ++l) {
            c.layer_off[l] = n;
            n += c.layout->layers[l].n;
          }
          c.nterm = c.layout->terminal().n;
        } else {
          c.nterm = T_.nf_face;
        }
        c.term_slot = toff;
        toff += c.nterm;
      }
      hyb_off_[e] = hoff;
      hyb_size_[e] = n;
      hoff += n;
    }
    nhyb_ = hoff;
    nterm_ = toff;
    ut_.assign(nhyb_, S{});
    pt_.assign(nhyb_, P{});
    gs_.assign(size_t(nhyb_) * Dim, 0.0);
    ws_.assign(nhyb_, 0.0);
    term_hyb_.assign(nterm_, 0);
    term_nw_.assign(size_t(nterm_) * Dim, 0.0);
    term_state_.assign(nterm_, S{});
    for (int e = 0; e < K_; ++e)
      for (int f = 0; f < T_.nfaces; ++f) {
        const auto& c = chain_[e][f];
        const int last = c.layout ? c.layout->num_layers() : 0;
        for (int q = 0; q < c.nterm; ++q) term_hyb_[c.term_slot + q] = hyb_off_[e] + c.layer_off[last] + q;
      }
  }

  // face/layer node reference points of face f, layer l of a chain
  Matrix layer_points(int f, const MortarLayer& ly) const {
    Matrix pts(ly.n, Dim);
    for (int q = 0; q < ly.n; ++q) {
      double x[3] = {0, 0, 0};
      face_to_volume_point(Dim, f, point_row(ly.points, q).data(), x);
      for (int d = 0; d < Dim; ++d) pts(q, d) = x[d];
    }
    return pts;
  }

  void setup_metrics() {
    const auto& G = geo_.grid;
    const auto& m = geo_.mesh;
    const int nv = T_.nv, d2 = Dim * Dim;
    Matrix Vv = G.interp(T_.vol_points), Vf = G.interp(T_.face_points);
    std::vector<Matrix> Vd(Dim);
    for (int b = 0; b < Dim; ++b) Vd[b] = G.interp(T_.vol_points, b);
    // per (chain type, face, layer) interpolation to layer points
    std::map<std::tuple<int, int, int>, Matrix> Vl;
    gv_.assign(size_t(K_) * nv * d2, 0.0);
    face_g_.assign(size_t(K_) * T_.nf * Dim, 0.0);
    J_.assign(size_t(K_) * nv, 0.0);
    wJinv_.assign(size_t(K_) * nv, 0.0);
    xv_ = Matrix::Zero(size_t(K_) * nv, Dim);
    for (int e = 0; e < K_; ++e) {
      const Matrix& g = geo_.g[e];
      Matrix gv = Vv * g, gf = Vf * g;
      xv_.middleRows(size_t(e) * nv, nv) = Vv * m.mapping[e];
      std::vector<Matrix> dX(Dim);
      for (int b = 0; b < Dim; ++b) dX[b] = Vd[b] * m.mapping[e];
      for (int a = 0; a < nv; ++a) {
        for (int k = 0; k < d2; ++k) gv_[(size_t(e) * nv + a) * d2 + k] = gv(a, k);
        Matrix A(Dim, Dim);
        for (int x = 0; x < Dim; ++x)
          for (int b = 0; b < Dim; ++b) A(x, b) = dX[b](a, x);
        const double J = A.determinant();
        if (!(J > 0.0)) throw InvalidGeometry("non-positive Jacobian at element " + std::to_string(e) + ", node " + std::to_string(a));
        J_[size_t(e) * nv + a] = J;
        wJinv_[size_t(e) * nv + a] = 1.0 / (T_.Mhat[a] * J);
      }
      // face nodes: g_{i,axis} and scaled normals n_i = sign * g_{i,axis}
      for (int s = 0; s < T_.nf; ++s) {
        const int f = s / T_.nf_face, ax = face_axis(f);
        const double sg = face_side(f);
        const int h = hyb_off_[e] + nv + s;
        ws_[h] = T_.face_weights[s];
        for (int i = 0; i < Dim; ++i) {
          face_g_[(size_t(e) * T_.nf + s) * Dim + i] = sg * gf(s, i * Dim + ax);
          gs_[size_t(h) * Dim + i] = sg * gf(s, i * Dim + ax);
        }
      }
      for (int f = 0; f < T_.nfaces; ++f) {
        const auto& c = chain_[e][f];
        if (!c.layout) continue;
        const int ax = face_axis(f);
        const double sg = face_side(f);
        for (int l = 1; l <= c.layout->num_layers(); ++l) {
          const auto& ly = c.layout->layers[l];
          auto key = std::make_tuple(int(c.type), f, l);
          auto it = Vl.find(key);
          if (it == Vl.end()) it = Vl.emplace(key, G.interp(layer_points(f, ly))).first;
          Matrix gl = it->second * g;
          for (int q = 0; q < ly.n; ++q) {
            const int h = hyb_off_[e] + c.layer_off[l] + q;
            ws_[h] = ly.weights[q];
            for (int i = 0; i < Dim; ++i) gs_[size_t(h) * Dim + i] = sg * gl(q, i * Dim + ax);
          }
        }
      }
      for (int f = 0; f < T_.nfaces; ++f) {
        const auto& c = chain_[e][f];
        const int last = c.layout ? c.layout->num_layers() : 0;
        for (int q = 0; q < c.nterm; ++q) {
          const int h = hyb_off_[e] + c.layer_off[last] + q;
          for (int i = 0; i < Dim; ++i) term_nw_[size_t(c.term_slot + q) * Dim + i] = gs_[size_t(h) * Dim + i] * ws_[h];
        }
      }
    }
  }

  void setup_pairs() {
    const int n = T_.N + 1;
    const auto& op = T_.op1d;
    const auto& w = op.quad.weights;
    vol_pairs_.clear();
    for (int j = 0; j < Dim; ++j)
      for (int a = 0; a < T_.nv; ++a) {
        auto ka = T_.vol_multi(a);
        for (int m = ka[j] + 1; m < n; ++m) {
          auto kb = ka;
          kb[j] = m;
          double c = 0.5 * (op.Q(ka[j], m) - op.Q(m, ka[j]));
          for (int d = 0; d < Dim; ++d)
            if (d != j) c *= w[ka[d]];
          if (c != 0.0) vol_pairs_.push_back({a, T_.vol_index(kb), j, c});
        }
      }
    vf_pairs_.clear();
    for (int s = 0; s < T_.nf; ++s) {
      const int f = s / T_.nf_face, ax = face_axis(f);
      for (int b = 0; b < T_.nv; ++b) {
        const double E = T_.E(s, b);
        if (E == 0.0) continue;
        // coefficient multiplies (g_{i,ax}(b) + g_{i,ax}(s))
        vf_pairs_.push_back({b, s, ax, 0.5 * E * T_.face_weights[s] * face_side(f), E});
      }
    }
  }

  // tangential lattice coordinates of a face-local reference point
  std::array<double, 2> lattice_point(int e, int f, const double* t) const {
    const auto& el = geo_.mesh.elements[e];
    auto tg = tangential_axes(Dim, face_axis(f));
    std::array<double, 2> p{0, 0};
    for (int c = 0; c < Dim - 1; ++c) p[c] = el.lo[tg[c]] + 0.5 * (t[c] + 1.0) * el.size[tg[c]];
    return p;
  }

  const MortarLayer& terminal_layer(int e, int f) const {
    const auto& c = chain_[e][f];
    return c.layout ? c.layout->terminal() : identity_.face();
  }

  void setup_partners() {
    const auto& m = geo_.mesh;
    ext_.assign(nterm_, -1);
    auto match = [&](int e, int f, int q, int e2, int f2, int sub2) {
      const auto& ly = terminal_layer(e, f);
      auto p = lattice_point(e, f, point_row(ly.points, q).data());
      const auto& ly2 = terminal_layer(e2, f2);
      int best = -1;
      double bd = 1e300;
      for (int q2 = 0; q2 < ly2.n; ++q2) {
        if (sub2 >= 0 && ly2.subface[q2] != sub2) continue;
        auto p2 = lattice_point(e2, f2, point_row(ly2.points, q2).data());
        double dd = std::abs(p[0] - p2[0]) + std::abs(p[1] - p2[1]);
        if (dd < bd) {
          bd = dd;
          best = q2;
        }
      }
      if (best < 0 || bd > 1e-8) throw InternalError("trace node matching failed");
      return chain_[e2][f2].term_slot + best;
    };
    for (int e = 0; e < K_; ++e)
      for (int f = 0; f < T_.nfaces; ++f) {
        const auto& link = m.links[e][f];
        const auto& c = chain_[e][f];
        const auto& ly = terminal_layer(e, f);
        for (int q = 0; q < c.nterm; ++q) {
          int slot = -1;
          if (link.kind == FaceKind::Conforming) {
            slot = match(e, f, q, link.nbr, link.nbr_face, -1);
          } else if (link.kind == FaceKind::MortarCoarse) {
            const int s = ly.subface[q];
            const int e2 = link.fine[s];
            const int f2 = f ^ 1;
            // fine face is conforming with its sub-rectangle of the mortar
            const auto& ly2 = terminal_layer(e2, f2);
            auto p = lattice_point(e, f, point_row(ly.points, q).data());
            int best = -1;
            double bd = 1e300;
            for (int q2 = 0; q2 < ly2.n; ++q2) {
              auto p2 = lattice_point(e2, f2, point_row(ly2.points, q2).data());
              double dd = std::abs(p[0] - p2[0]) + std::abs(p[1] - p2[1]);
              if (dd < bd) {
                bd = dd;
                best = q2;
              }
            }
            if (best < 0 || bd > 1e-8) throw InternalError("mortar node matching failed e=" + std::to_string(e) + " f=" + std::to_string(f) + " q=" + std::to_string(q) + " sub=" + std::to_string(s) + " e2=" + std::to_string(e2) + " bd=" + std::to_string(bd));
            slot = chain_[e2][f2].term_slot + best;
          } else if (link.kind == FaceKind::MortarFine) {
            slot = match(e, f, q, link.nbr, link.nbr_face, link.subface);
          }
          ext_[c.term_slot + q] = slot;
        }
      }
    for (int t = 0; t < nterm_; ++t)
      if (ext_[ext_[t]] != t) throw InternalError("trace exchange map is not an involution");
  }

  // phase 1: entropy projection for all elements, publishes terminal states
  void compute_traces(const std::vector<S>& u) {
    if (static_cast<int>(u.size()) != num_dofs()) throw InternalError("solution size does not match the mesh");
    parallel_for(K_, opt_.threads, [&](int b, int e) {
      std::vector<S> v(T_.nv);
      for (int k = b; k < e; ++k) project_element(k, u, v);
    });
  }

  void project_element(int e, const std::vector<S>& u, std::vector<S>& v) {
    const int nv = T_.nv;
    const int h0 = hyb_off_[e];
    const double gm = opt_.gamma;
    for (int a = 0; a < nv; ++a) {
      const auto& s = u[size_t(e) * nv + a];
      if (!is_admissible<Dim>(s, gm))
        throw AdmissibilityError("inadmissible state at element " + std::to_string(e) + ", node " + std::to_string(a));
      v[a] = entropy_variables<Dim>(s, gm);
      ut_[h0 + a] = s;
      pt_[h0 + a] = primitive<Dim>(s, gm);
    }
    auto finish = [&](int h, const S& vv, int f) {
      if (!(vv[Dim + 1] < 0.0))
        throw AdmissibilityError("entropy projection failed at element " + std::to_string(e) + ", face " + std::to_string(f));
      ut_[h] = conservative_from_entropy<Dim>(vv, gm);
      pt_[h] = primitive<Dim>(ut_[h], gm);
    };
    // face nodes
    std::vector<S> vf(T_.nf, S{});
    for (const auto& p : vf_pairs_)
      for (int k = 0; k < Dim + 2; ++k) vf[p.s][k] += p.E * v[p.b][k];
    for (int s = 0; s < T_.nf; ++s) finish(h0 + nv + s, vf[s], s / T_.nf_face);
    // mortar layers, interpolated entropy variables carried layer by layer
    for (int f = 0; f < T_.nfaces; ++f) {
      const auto& c = chain_[e][f];
      if (!c.layout) continue;
      std::vector<S> cur(vf.begin() + f * T_.nf_face, vf.begin() + (f + 1) * T_.nf_face);
      for (int l = 0; l < c.layout->num_layers(); ++l) {
        std::vector<S> nxt(c.layout->layers[l + 1].n, S{});
        for (const auto& t : c.layout->pattern[l])
          for (int k = 0; k < Dim + 2; ++k) nxt[t.row][k] += t.value * cur[t.col][k];
        for (int q = 0; q < static_cast<int>(nxt.size()); ++q) finish(h0 + c.layer_off[l + 1] + q, nxt[q], f);
        cur = std::move(nxt);
      }
    }
    for (int f = 0; f < T_.nfaces; ++f) {
      const auto& c = chain_[e][f];
      for (int q = 0; q < c.nterm; ++q) term_state_[c.term_slot + q] = ut_[term_hyb_[c.term_slot + q]];
    }
  }

  void add_interface_flux(int slot, const P& pin, const S& uin, S& r) const {
    const int x = ext_[slot];
    const double* nw = &term_nw_[size_t(slot) * Dim];
    const S& uout = term_state_[x];
    const P pout = pt_[term_hyb_[x]];
    const auto F = ec_flux_normal<Dim>(pin, pout, nw, opt_.gamma);
    for (int k = 0; k < Dim + 2; ++k) r[k] += F[k];
    if (opt_.dissipation == Dissipation::LaxFriedrichs) {
      double nn = 0.0;
      for (int i = 0; i < Dim; ++i) nn += nw[i] * nw[i];
      const double lam = std::max(wavespeed<Dim>(pin, opt_.gamma), wavespeed<Dim>(pout, opt_.gamma));
      const auto pen = lax_friedrichs_penalty<Dim>(uin, uout, lam * std::sqrt(nn));
      for (int k = 0; k < Dim + 2; ++k) r[k] += pen[k];
    }
  }

  // phase 2, sparse face-local form
  void face_local_element(int e, std::vector<S>& R, std::vector<S>& r) const {
    const int nv = T_.nv, d2 = Dim * Dim;
    const int h0 = hyb_off_[e];
    const double gm = opt_.gamma;
    r.assign(hyb_size_[e], S{});
    const P* pr = &pt_[h0];
    const double* gv = &gv_[size_t(e) * nv * d2];
    const double* gs = &gs_[size_t(h0) * Dim];
    for (const auto& p : vol_pairs_) {
      double n[3];
      for (int i = 0; i < Dim; ++i) n[i] = p.c * (gv[p.a * d2 + i * Dim + p.j] + gv[p.b * d2 + i * Dim + p.j]);
      const auto F = ec_flux_normal<Dim>(pr[p.a], pr[p.b], n, gm);
      for (int k = 0; k < Dim + 2; ++k) {
        r[p.a][k] += F[k];
        r[p.b][k] -= F[k];
      }
    }
    for (const auto& p : vf_pairs_) {
      const int s = nv + p.s;
      const double sg = face_side(p.s / T_.nf_face);
      double n[3];
      // gs holds sign * g_{i,ax} at face nodes
      for (int i = 0; i < Dim; ++i) n[i] = p.c * (gv[p.b * d2 + i * Dim + p.ax] + sg * gs[s * Dim + i]);
      const auto F = ec_flux_normal<Dim>(pr[p.b], pr[s], n, gm);
      for (int k = 0; k < Dim + 2; ++k) {
        r[p.b][k] += F[k];
        r[s][k] -= F[k];
      }
    }
    for (int f = 0; f < T_.nfaces; ++f) {
      const auto& c = chain_[e][f];
      if (c.layout) accumulate_chain_pairs<Dim>(*c.layout, c.layer_off, 1.0, pr, gs, r.data(), gm);
    }
    for (int f = 0; f < T_.nfaces; ++f) {
      const auto& c = chain_[e][f];
      for (int q = 0; q < c.nterm; ++q) {
        const int slot = c.term_slot + q;
        const int hl = term_hyb_[slot] - h0;
        add_interface_flux(slot, pr[hl], ut_[term_hyb_[slot]], r[hl]);
      }
      if (c.layout) back_propagate_chain<Dim>(*c.layout, c.layer_off, r.data());
    }
    for (const auto& p : vf_pairs_)
      for (int k = 0; k < Dim + 2; ++k) r[p.b][k] += p.E * r[nv + p.s][k];
    for (int a = 0; a < nv; ++a) R[size_t(e) * nv + a] = r[a];
  }

  struct DirectOps {
    MortarSBP S;
    Matrix Vgeo;  // metric grid -> all hybrid nodes
  };

  const DirectOps& direct_ops(int e) {
    std::string key;
    std::vector<MortarLayout> faces;
    for (int f = 0; f < T_.nfaces; ++f) {
      const auto& c = chain_[e][f];
      key += char('0' + int(c.type));
      faces.push_back(*c.layout);
    }
    std::lock_guard<std::mutex> lock(direct_mutex_);
    auto it = direct_.find(key);
    if (it == direct_.end()) {
      auto d = std::make_shared<DirectOps>();
      d->S = build_layered_sbp(T_, faces);
      d->Vgeo = geo_.grid.interp(d->S.points);
      it = direct_.emplace(key, d).first;
    }
    return *it->second;
  }

  // phase 2, literal block form: V^T [ sum_i (2 Q_i o F_i) 1 + B_i (f* - f(u_m)) ]
  void direct_element(int e, const std::vector<S>& u, std::vector<S>& R) {
    const auto& D = direct_ops(e);
    const auto& Sb = D.S;
    const int nv = T_.nv, nt = Sb.total;
    const double gm = opt_.gamma;
    Matrix g = D.Vgeo * geo_.g[e];
    auto Q = physical_operators(Sb.Q, g);
    // entropy projection through the dense test matrix
    Matrix vol(nv, Dim + 2);
    for (int a = 0; a < nv; ++a) {
      auto v = entropy_variables<Dim>(u[size_t(e) * nv + a], gm);
      for (int k = 0; k < Dim + 2; ++k) vol(a, k) = v[k];
    }
    Matrix vh = Sb.V * vol;
    std::vector<S> uh(nt);
    std::vector<P> ph(nt);
    for (int a = 0; a < nt; ++a) {
      if (a < nv) {
        uh[a] = u[size_t(e) * nv + a];
      } else {
        S vv;
        for (int k = 0; k < Dim + 2; ++k) vv[k] = vh(a, k);
        uh[a] = conservative_from_entropy<Dim>(vv, gm);
      }
      ph[a] = primitive<Dim>(uh[a], gm);
    }
    Matrix r = Matrix::Zero(nt, Dim + 2);
    for (int a = 0; a < nt; ++a)
      for (int b = 0; b < nt; ++b) {
        double n[3];
        bool nz = false;
        for (int i = 0; i < Dim; ++i) {
          n[i] = 2.0 * Q[i](a, b);
          nz = nz || n[i] != 0.0;
        }
        if (!nz) continue;
        const auto F = ec_flux_normal<Dim>(ph[a], ph[b], n, gm);
        for (int k = 0; k < Dim + 2; ++k) r(a, k) += F[k];
      }
    const int to = Sb.terminal_offset();
    for (int q = 0; q < Sb.terminal_size(); ++q) {
      const int a = to + q;
      const int f = Sb.node_face[a];
      const int slot = chain_[e][f].term_slot + Sb.node_local[a];
      // B_i (f* - f(u_m)) with B_i = diag(n_i w) from the physical terminal boundary
      double nw[3];
      for (int i = 0; i < Dim; ++i) {
        double b = 0.0;
        for (int j = 0; j < Dim; ++j) b += g(a, i * Dim + j) * Sb.B_terminal[j][q];
        nw[i] = b;
      }
      const int x = ext_[slot];
      const P pout = primitive<Dim>(term_state_[x], gm);
      const auto Fs = ec_flux_normal<Dim>(ph[a], pout, nw, gm);
      const auto Fm = ec_flux_normal<Dim>(ph[a], ph[a], nw, gm);
      for (int k = 0; k < Dim + 2; ++k) r(a, k) += Fs[k] - Fm[k];
      if (opt_.dissipation == Dissipation::LaxFriedrichs) {
        double nn = 0.0;
        for (int i = 0; i < Dim; ++i) nn += nw[i] * nw[i];
        const double lam = std::max(wavespeed<Dim>(ph[a], gm), wavespeed<Dim>(pout, gm));
        const auto pen = lax_friedrichs_penalty<Dim>(uh[a], term_state_[x], lam * std::sqrt(nn));
        for (int k = 0; k < Dim + 2; ++k) r(a, k) += pen[k];
      }
    }
    Matrix Rv = Sb.V.transpose() * r;
    for (int a = 0; a < nv; ++a)
      for (int k = 0; k < Dim + 2; ++k) R[size_t(e) * nv + a][k] = Rv(a, k);
  }

  struct VolPair {
    int a, b, j;
    double c;
  };
  struct VFPair {
    int b, s, ax;
    double c, E;
  };

  MeshGeometry geo_;
  SolverOptions opt_;
  TensorOperators T_;
  MortarLayout identity_, split_, two_;
  int K_ = 0, nhyb_ = 0, nterm_ = 0;
  std::vector<std::vector<FaceChain>> chain_;
  std::vector<int> hyb_off_, hyb_size_, term_off_;
  std::vector<double> gv_, face_g_, gs_, ws_, J_, wJinv_, term_nw_;
  Matrix xv_;
  std::vector<int> term_hyb_, ext_;
  std::vector<S> ut_, term_state_;
  std::vector<P> pt_;
  std::vector<VolPair> vol_pairs_;
  std::vector<VFPair> vf_pairs_;
  std::map<std::string, std::shared_ptr<DirectOps>> direct_;
  std::mutex direct_mutex_;
};

/// @brief Trace constants: d(N+1)(N+2)/2 for Gauss, d N(N+1)/2 for GLL.
inline double trace_constant(int dim, int N, NodeKind kind) {
  return kind == NodeKind::Gauss ? dim * (N + 1) * (N + 2) / 2.0 : dim * N * (N + 1) / 2.0;
}

/// @brief dt = C_CFL h / (a C_N); both node kinds use the Gauss constant.
inline double estimate_dt(double h, int dim, int N, double a, double cfl) {
  if (!(a > 0.0)) throw InvalidArgument("estimate_dt: wavespeed must be positive");
  return cfl * h / (a * trace_constant(dim, N, NodeKind::Gauss));
}

/// @brief Carpenter & Kennedy (1994) five-stage fourth-order 2N-storage Runge-Kutta.
struct LowStorageRK45 {
  static constexpr double A[5] = {0.0, -567301805773.0 / 1357537059087.0, -2404267990393.0 / 2016746695238.0,
                                  -3550918686646.0 / 2091501179385.0, -1275806237668.0 / 842570457699.0};
  static constexpr double B[5] = {1432997174477.0 / 9575080441755.0, 5161836677717.0 / 13612068292357.0,
                                  1720146321549.0 / 2090206949498.0, 3134564353537.0 / 4481467310338.0,
                                  2277821191437.0 / 14882151754819.0};
  static constexpr double C[5] = {0.0, 1432997174477.0 / 9575080441755.0, 2526269341429.0 / 6820363183471.0,
                                  2006345519317.0 / 3224310063776.0, 2802321613138.0 / 2924317926251.0};

  /// @brief One step on n doubles; rhs(u, t, dudt). res is scratch of size n.
  template <class Rhs>
  static void step(double* u, double* res, double* k, int n, double t, double dt, Rhs&& rhs) {
    for (int i = 0; i < n; ++i) res[i] = 0.0;
    for (int s = 0; s < 5; ++s) {
      rhs(u, t + C[s] * dt, k);
      for (int i = 0; i < n; ++i) {
        if (!std::isfinite(k[i])) throw AdmissibilityError("non-finite right-hand side in RK stage " + std::to_string(s + 1));
        res[i] = A[s] * res[i] + dt * k[i];
        u[i] += B[s] * res[i];
      }
    }
  }
};

template <int Dim>
struct TimeIntegrationResult {
  int steps = 0;
  double dt = 0.0;
  double t = 0.0;
};

/// @brief Integrates to final_time with fixed dt (last step clamped).
/// Admissibility is checked every `check_every` steps.
template <int Dim>
TimeIntegrationResult<Dim> integrate(Solver<Dim>& solver, std::vector<State<Dim>>& u, double final_time, double dt,
                                     int check_every) {
  using S = State<Dim>;
  const int n = static_cast<int>(u.size()) * (Dim + 2);
  std::vector<S> res(u.size()), k(u.size()), tmp(u.size());
  TimeIntegrationResult<Dim> out;
  out.dt = dt;
  double t = 0.0;
  auto rhs = [&](const double* x, double, double* dx) {
    std::copy(reinterpret_cast<const S*>(x), reinterpret_cast<const S*>(x) + u.size(), tmp.begin());
    std::vector<S> d;
    solver.rhs(tmp, d);
    std::copy(d.begin(), d.end(), reinterpret_cast<S*>(dx));
  };
  while (t < final_time - 1e-14 * std::max(1.0, final_time)) {
    const double h = std::min(dt, final_time - t);
    LowStorageRK45::step(reinterpret_cast<double*>(u.data()), reinterpret_cast<double*>(res.data()),
                         reinterpret_cast<double*>(k.data()), n, t, h, rhs);
    t += h;
    ++out.steps;
    if (check_every > 0 && out.steps % check_every == 0) solver.check_admissible(u);
  }
  solver.check_admissible(u);
  out.t = t;
  return out;
}

inline int default_check_cadence() {
#ifdef NDEBUG
  return 50;
#else
  return 1;
#endif
}

}  // namespace esdg
