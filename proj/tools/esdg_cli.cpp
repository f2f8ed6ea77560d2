#include <CLI11.hpp>

#include <esdg/harness.hpp>

#include <fstream>
#include <iostream>

using namespace esdg;

namespace {

struct CliOptions {
  int dim = 2;
  int degree = -1;
  std::string quadrature;
  std::string formulation;
  int geo_approach = -1;
  int ngeo = -1;
  std::string mesh;
  int levels = -1;
  int level = 0;
  bool curved = false;
  double cfl = 0.5;
  double final_time = -1.0;
  std::string dissipation;
  std::string out;
  int threads = 1;
  unsigned seed = 0;
  bool all_levels = false;
  double interface_x = 7.0;
};

void add_common(CLI::App* app, CliOptions& o) {
  app->add_option("--dim", o.dim, "Spatial dimension")->check(CLI::IsMember({2, 3}));
  app->add_option("--degree", o.degree, "Polynomial degree N")->check(CLI::Range(1, 8));
  app->add_option("--quadrature", o.quadrature, "Node kind")->check(CLI::IsMember({"lobatto", "gauss"}));
  app->add_option("--formulation", o.formulation, "Interface formulation")
      ->check(CLI::IsMember({"conforming", "mortar-direct", "mortar", "two-mortar"}));
  app->add_option("--geo-approach", o.geo_approach, "3D metric approach")->check(CLI::IsMember({1, 2}));
  app->add_option("--ngeo", o.ngeo, "Geometry degree")->check(CLI::Range(1, 8));
  app->add_option("--mesh", o.mesh, "cartesian | checkerboard | two-block | file:<path>");
  app->add_option("--levels", o.levels, "Number of refinement levels")->check(CLI::Range(1, 8));
  app->add_flag("--curved", o.curved, "Warp the mesh");
  app->add_option("--cfl", o.cfl, "CFL constant")->check(CLI::PositiveNumber);
  app->add_option("--final-time", o.final_time, "Final time")->check(CLI::PositiveNumber);
  app->add_option("--dissipation", o.dissipation, "Interface dissipation")->check(CLI::IsMember({"none", "lf"}));
  app->add_option("--out", o.out, "Output file");
  app->add_option("--threads", o.threads, "Thread cap")->check(CLI::Range(1, 256));
  app->add_option("--seed", o.seed, "Seed for perturbed initial data (0: none)");
  app->add_flag("--all-levels", o.all_levels, "Run every refinement level of the study");
  app->add_option("--interface-x", o.interface_x, "x position of the 3D two-block interface");
}

RunConfig to_config(const CliOptions& o, const std::string& default_diss) {
  RunConfig c;
  c.dim = o.dim;
  c.N = o.degree > 0 ? o.degree : 2;
  c.kind = o.quadrature.empty() ? NodeKind::Gauss : parse_node_kind(o.quadrature);
  c.formulation = o.formulation.empty() ? Formulation::MortarFaceLocal : parse_formulation(o.formulation);
  c.geo_approach = o.geo_approach > 0 ? o.geo_approach : 2;
  c.ngeo = o.ngeo;
  c.mesh = o.mesh.empty() ? (o.dim == 2 ? "checkerboard" : "two-block") : o.mesh;
  if (c.formulation == Formulation::Conforming && o.mesh.empty()) c.mesh = "cartesian";
  c.levels = o.all_levels ? 4 : (o.levels > 0 ? o.levels : 2);
  c.curved = o.curved;
  c.cfl = o.cfl;
  c.final_time = o.final_time;
  c.dissipation = parse_dissipation(o.dissipation.empty() ? default_diss : o.dissipation);
  c.threads = o.threads;
  c.seed = o.seed;
  c.interface_x = o.interface_x;
  return c;
}

std::ostream& open_out(const std::string& path, std::ofstream& f) {
  if (path.empty()) return std::cout;
  f.open(path);
  if (!f) throw InvalidArgument("cannot open output file '" + path + "'");
  return f;
}

void print_level(const LevelResult& r) {
  std::cerr << "level " << r.level << "  h " << r.h << "  K " << r.elements << "  steps " << r.steps << "  L2 "
            << r.l2_total << "  Linf " << r.linf_total;
  if (!std::isnan(r.rate_l2)) std::cerr << "  rate " << r.rate_l2;
  std::cerr << "  (" << r.wall_seconds << " s)\n";
}

int cmd_convergence(const CliOptions& o, bool single) {
  RunConfig c = to_config(o, "lf");
  if (single) {
    c.levels = 1;
    c.first_level = o.level;
  }
  auto rows = run_convergence(c, print_level);
  std::ofstream f;
  write_convergence_csv(open_out(o.out, f), c, rows);
  return 0;
}

int cmd_entropy(const CliOptions& o) {
  const RunConfig c = to_config(o, "none");
  std::vector<int> Ns;
  if (o.degree > 0)
    Ns = {o.degree};
  else
    Ns = {1, 2, 3, 4};
  std::vector<NodeKind> kinds;
  if (o.quadrature.empty())
    kinds = {NodeKind::Lobatto, NodeKind::Gauss};
  else
    kinds = {parse_node_kind(o.quadrature)};
  std::vector<Formulation> forms = o.formulation.empty() ? formulations_for(o.dim) : std::vector<Formulation>{c.formulation};
  std::ofstream f;
  std::ostream& os = open_out(o.out, f);
  os << "# seed=" << c.seed << "\n";
  os << "dim,N,quad,formulation,entropy,rel_entropy\n" << std::setprecision(6);
  bool ok = true;
  for (int N : Ns)
    for (auto k : kinds)
      for (auto fm : forms) {
        const int ngeo = o.ngeo > 0 ? o.ngeo : N;
        auto r = run_entropy_check_case(o.dim, N, k, fm, c.geo_approach, ngeo, c.dissipation, c.seed, c.threads);
        os << r.dim << "," << r.N << "," << to_string(r.kind) << "," << to_string(r.formulation) << "," << r.value
           << "," << r.relative << "\n";
        // with dissipation the production must be non-positive up to rounding
        if (c.dissipation == Dissipation::None)
          ok = ok && r.relative <= 1e-13;
        else
          ok = ok && (r.value <= 0.0 || r.relative <= 1e-13);
      }
  if (!ok) {
    std::cerr << "entropy check failed\n";
    return 2;
  }
  return 0;
}

int cmd_metric(const CliOptions& o) {
  std::vector<int> approaches = o.geo_approach > 0 ? std::vector<int>{o.geo_approach} : std::vector<int>{1, 2};
  std::vector<int> ngeos = o.ngeo > 0 ? std::vector<int>{o.ngeo} : std::vector<int>{1, 2, 3, 4};
  const int levels = o.levels > 0 ? o.levels : 4;
  std::ofstream f;
  std::ostream& os = open_out(o.out, f);
  os << "approach,ngeo,h,error,rate\n" << std::setprecision(8);
  for (int a : approaches)
    for (int g : ngeos)
      for (const auto& r : run_metric_convergence(a, g, levels)) {
        os << r.approach << "," << r.ngeo << "," << r.h << "," << r.error << ",";
        if (!std::isnan(r.rate)) os << r.rate;
        os << "\n";
      }
  return 0;
}

int cmd_make_mesh(const CliOptions& o) {
  RunConfig c = to_config(o, "lf");
  if (o.out.empty()) throw InvalidArgument("make-mesh requires --out");
  Mesh m = build_level_mesh(c, o.level);
  write_mesh_file(m, o.out);
  std::cerr << "wrote " << m.num_elements() << " elements to " << o.out << "\n";
  return 0;
}

template <int Dim>
int check_geometry_dim(const RunConfig& c, int level) {
  Mesh m = build_level_mesh(c, level);
  auto geo = build_geometry(m, geo_approach_of(c));
  Solver<Dim> s(geo, solver_options(c));
  const double gcl = s.gcl_residual_max(), wt = s.watertightness_residual();
  int mortars = 0;
  for (const auto& r : m.interfaces) mortars += r.mortar;
  std::cout << "elements " << m.num_elements() << "\nnon-conforming interfaces " << mortars << "\nngeo " << m.ngeo
            << "\nmin jacobian " << s.min_jacobian() << "\ngcl residual " << gcl << "\nwatertightness residual " << wt
            << "\nmesh size estimate " << s.mesh_size_estimate() << "\n";
  return (gcl > 1e-10 || wt > 1e-10) ? 2 : 0;
}

int cmd_check_geometry(const CliOptions& o) {
  RunConfig c = to_config(o, "lf");
  return o.dim == 2 ? check_geometry_dim<2>(c, o.level) : check_geometry_dim<3>(c, o.level);
}

int cmd_dump(const CliOptions& o) {
  const RunConfig c = to_config(o, "lf");
  const auto T = tensor_operators(c.kind, c.N, c.dim);
  std::ofstream f;
  std::ostream& os = open_out(o.out, f);
  os << "operator,row,col,value\n" << std::setprecision(17);
  auto dump = [&](const std::string& name, const Matrix& A) {
    for (int i = 0; i < A.rows(); ++i)
      for (int j = 0; j < A.cols(); ++j)
        if (A(i, j) != 0.0) os << name << "," << i << "," << j << "," << A(i, j) << "\n";
  };
  dump("D1D", T.op1d.D);
  dump("Q1D", T.op1d.Q);
  dump("E1D", T.op1d.E);
  for (int i = 0; i < c.dim; ++i) {
    dump("Q" + std::to_string(i + 1), T.Qhat[i]);
    dump("Qh" + std::to_string(i + 1), T.Qh[i]);
  }
  dump("E", T.E);
  for (int a = 0; a < T.nv; ++a) os << "M," << a << "," << a << "," << T.Mhat[a] << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropy stable DG solver for the compressible Euler equations on non-conforming meshes"};
  app.require_subcommand(1, 1);
  CliOptions o;
  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {{"run", "Run one vortex simulation and report errors"},
                      {"convergence", "Vortex convergence study over refinement levels"},
                      {"entropy-check", "Spatial entropy production for discontinuous data"},
                      {"metric-study", "Metric-term convergence on the warped cube"},
                      {"make-mesh", "Write a generated mesh to a file"},
                      {"check-geometry", "Report geometric conservation and watertightness"},
                      {"dump-operators", "Dump reference operators as CSV"}};
  for (const auto& s : subs) {
    auto* sc = app.add_subcommand(s.name, s.help);
    add_common(sc, o);
    if (std::string(s.name) == "run" || std::string(s.name) == "make-mesh" || std::string(s.name) == "check-geometry")
      sc->add_option("--level", o.level, "Refinement level")->check(CLI::Range(0, 8));
    if (std::string(s.name) == "dump-operators") sc->get_option("--degree")->required();
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "run") return cmd_convergence(o, true);
    if (cmd == "convergence") return cmd_convergence(o, false);
    if (cmd == "entropy-check") return cmd_entropy(o);
    if (cmd == "metric-study") return cmd_metric(o);
    if (cmd == "make-mesh") return cmd_make_mesh(o);
    if (cmd == "check-geometry") return cmd_check_geometry(o);
    if (cmd == "dump-operators") return cmd_dump(o);
  } catch (const InvalidArgument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const StabilityPreconditionError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const InvalidGeometry& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
