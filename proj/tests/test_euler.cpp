#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "shapeopt/euler/io.hpp"
#include "shapeopt/euler/solver.hpp"
#include "shapeopt/mesh/deform.hpp"
#include "shapeopt/mesh/omesh.hpp"

using namespace shapeopt;
using namespace shapeopt::euler;

namespace {

State random_state(std::mt19937& rng) {
  std::uniform_real_distribution<double> rho(0.5, 1.5), v(-1.0, 1.0), p(0.3, 1.5);
  return prim_to_cons({rho(rng), v(rng), v(rng), p(rng)});
}

Vec2 random_normal(std::mt19937& rng) {
  std::uniform_real_distribution<double> a(0.0, 2.0 * kPi);
  const double t = a(rng);
  return {std::cos(t), std::sin(t)};
}

/// Rotation of the momentum components by angle a.
State rotate(const State& u, double a) {
  const double c = std::cos(a);
  const double s = std::sin(a);
  return {u[0], c * u[1] - s * u[2], s * u[1] + c * u[2], u[3]};
}

Vec2 rotate(const Vec2& n, double a) { return {std::cos(a) * n.x - std::sin(a) * n.y, std::sin(a) * n.x + std::cos(a) * n.y}; }

template <class F>
Block fd_jacobian(F f, const State& u) {
  Block j;
  for (int k = 0; k < 4; ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(u[k]));
    State up = u;
    State um = u;
    up[k] += h;
    um[k] -= h;
    j.col(k) = (f(up) - f(um)) / (2.0 * h);
  }
  return j;
}

double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

/// Square [-1,1]^2 split into 2 n^2 triangles, all boundary vertices far field.
mesh::UnstructuredMesh square_mesh(int n) {
  mesh::UnstructuredMesh m;
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) {
      m.vertices.push_back({-1.0 + 2.0 * i / n, -1.0 + 2.0 * j / n + 0.1 * std::sin(i)});
      const bool edge = i == 0 || j == 0 || i == n || j == n;
      m.markers.push_back(edge ? mesh::VertexMarker::farfield : mesh::VertexMarker::interior);
    }
  auto id = [n](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      m.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      m.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return m;
}

const mesh::UnstructuredMesh& small_airfoil_mesh() {
  static const auto m = [] {
    const auto s = geometry::naca4_init(0.12, 40);
    auto g = mesh::generate_omesh(s, 35.0, 6);
    mesh::update_boundary(g, geometry::fit_surfaces(s, 12, 1e-3));
    return g;
  }();
  return m;
}

const mesh::UnstructuredMesh& coarse_airfoil_mesh() {
  static const auto m = [] {
    const auto s = geometry::naca4_init(0.12, 100);
    auto g = mesh::generate_omesh(s, 35.0, 24);
    mesh::update_boundary(g, geometry::fit_surfaces(s, 16, 1e-3));
    return g;
  }();
  return m;
}

FlowField random_field(std::size_t n, std::mt19937& rng) {
  FlowField f;
  f.u.resize(static_cast<Eigen::Index>(4 * n));
  for (std::size_t i = 0; i < n; ++i) f.set_cell(i, random_state(rng));
  return f;
}

}  // namespace

// ---------------------------------------------------------------------------

TEST(Gas, RestStateEnergy) {
  const State u = prim_to_cons({1.0, 0.0, 0.0, 1.0 / kGamma});
  EXPECT_NEAR(u[3], 1.0 / (kGamma * (kGamma - 1.0)), 1e-15);
  EXPECT_NEAR(u[3], 1.7857142857142858, 1e-12);
}

TEST(Gas, RoundTrip) {
  std::mt19937 rng(1);
  for (int i = 0; i < 50; ++i) {
    std::uniform_real_distribution<double> rho(0.5, 1.5), v(-1.0, 1.0), p(0.3, 1.5);
    const Primitive w{rho(rng), v(rng), v(rng), p(rng)};
    const auto back = cons_to_prim(prim_to_cons(w));
    EXPECT_NEAR(back.rho, w.rho, 1e-14);
    EXPECT_NEAR(back.ux, w.ux, 1e-14);
    EXPECT_NEAR(back.uy, w.uy, 1e-14);
    EXPECT_NEAR(back.p, w.p, 1e-14);
  }
}

TEST(Gas, NonPhysicalThrows) {
  EXPECT_THROW(prim_to_cons({0.0, 0.0, 0.0, 1.0}), StateError);
  EXPECT_THROW(prim_to_cons({-1.0, 0.0, 0.0, 1.0}), StateError);
  EXPECT_THROW(prim_to_cons({1.0, 0.0, 0.0, 0.0}), StateError);
  EXPECT_THROW(cons_to_prim(State{1.0, 2.0, 0.0, 1.0}), StateError);
}

TEST(Gas, FreeStreamNondimensionalization) {
  const FreeStream fs{0.85, 0.0};
  const State u = freestream_state(fs);
  EXPECT_NEAR(u[0], 1.0, 1e-15);
  EXPECT_NEAR(sound_speed(u), 1.0, 1e-15);
  EXPECT_NEAR(u[1], 0.85, 1e-15);
  EXPECT_THROW(validate(FreeStream{0.0, 0.0}), DomainError);
  EXPECT_THROW(validate(FreeStream{0.5, 0.0, 1.3}), DomainError);
}

TEST(Gas, FluxJacobianMatchesFiniteDifference) {
  std::mt19937 rng(2);
  for (int i = 0; i < 20; ++i) {
    const State u = random_state(rng);
    const Vec2 n = random_normal(rng);
    const auto fd = fd_jacobian([&](const State& s) { return normal_flux(s, n); }, u);
    EXPECT_LT(rel_err(normal_flux_jacobian(u, n), fd), 1e-8);
    Eigen::RowVector4d gp;
    for (int k = 0; k < 4; ++k) {
      State up = u;
      State um = u;
      up[k] += 1e-6;
      um[k] -= 1e-6;
      gp[k] = (pressure(up) - pressure(um)) / 2e-6;
    }
    EXPECT_LT((pressure_gradient(u) - gp).norm(), 1e-8);
  }
}

// ---------------------------------------------------------------------------

TEST(Rusanov, Consistency) {
  std::mt19937 rng(3);
  for (int i = 0; i < 20; ++i) {
    const State u = random_state(rng);
    const Vec2 n = random_normal(rng);
    const State h = numerical_flux(u, u, n);
    const State f = normal_flux(u, n);
    for (int k = 0; k < 4; ++k) EXPECT_EQ(h[k], f[k]);
  }
}

TEST(Rusanov, Conservativity) {
  std::mt19937 rng(4);
  for (int i = 0; i < 20; ++i) {
    const State a = random_state(rng);
    const State b = random_state(rng);
    const Vec2 n = random_normal(rng);
    EXPECT_LT((numerical_flux(a, b, n) + numerical_flux(b, a, -n)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Rusanov, RotationInvariance) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * kPi);
  for (int i = 0; i < 20; ++i) {
    const State a = random_state(rng);
    const State b = random_state(rng);
    const Vec2 n = random_normal(rng);
    const double t = ang(rng);
    const State lhs = numerical_flux(rotate(a, t), rotate(b, t), rotate(n, t));
    const State rhs = rotate(numerical_flux(a, b, n), t);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Rusanov, JacobianMatchesFiniteDifference) {
  std::mt19937 rng(6);
  for (int i = 0; i < 20; ++i) {
    const State a = random_state(rng);
    const State b = random_state(rng);
    const Vec2 n = random_normal(rng);
    const auto j = numerical_flux_jacobian(a, b, n);
    EXPECT_EQ(j.flux, numerical_flux(a, b, n));
    const auto fl = fd_jacobian([&](const State& s) { return numerical_flux(s, b, n); }, a);
    const auto fr = fd_jacobian([&](const State& s) { return numerical_flux(a, s, n); }, b);
    EXPECT_LT(rel_err(j.d_left, fl), 1e-6);
    EXPECT_LT(rel_err(j.d_right, fr), 1e-6);
  }
}

TEST(Rusanov, NonPhysicalThrows) {
  const State bad{1.0, 2.0, 0.0, 1.0};
  const State ok = prim_to_cons({1, 0, 0, 1});
  EXPECT_THROW(numerical_flux(bad, ok, {1, 0}), StateError);
  EXPECT_THROW(numerical_flux(ok, bad, {1, 0}), StateError);
}

// ---------------------------------------------------------------------------

TEST(Wall, TangentialFlowGivesPressureOnly) {
  const Primitive w{1.2, 0.0, 0.4, 0.9};
  const State u = prim_to_cons(w);
  const State h = wall_flux(u, {1.0, 0.0});
  EXPECT_EQ(h[0], 0.0);
  EXPECT_EQ(h[1], pressure(u));
  EXPECT_EQ(h[2], 0.0);
  EXPECT_EQ(h[3], 0.0);
}

TEST(Wall, NoMassOrEnergyFlux) {
  std::mt19937 rng(7);
  for (int i = 0; i < 50; ++i) {
    const State u = random_state(rng);
    const Vec2 n = random_normal(rng);
    const State h = wall_flux(u, n);
    EXPECT_LT(std::abs(h[0]), 1e-12);
    EXPECT_LT(std::abs(h[3]), 1e-12);
    // momentum along the normal only: p + rho vn^2 + lambda rho vn
    const double vn = (u[1] * n.x + u[2] * n.y) / u[0];
    const double mag = pressure(u) + u[0] * vn * vn + max_wave_speed(u, n) * u[0] * vn;
    EXPECT_NEAR(h[1], mag * n.x, 1e-12);
    EXPECT_NEAR(h[2], mag * n.y, 1e-12);
  }
}

TEST(Wall, JacobianMatchesFiniteDifference) {
  std::mt19937 rng(8);
  for (int i = 0; i < 20; ++i) {
    const State u = random_state(rng);
    const Vec2 n = random_normal(rng);
    const auto fd = fd_jacobian([&](const State& s) { return wall_flux(s, n); }, u);
    EXPECT_LT(rel_err(wall_flux_jacobian(u, n).d_left, fd), 1e-6);
  }
}

TEST(Farfield, FreeStreamInteriorGivesPhysicalFlux) {
  const FreeStream fs{0.85, 1.25};
  const State inf = freestream_state(fs);
  std::mt19937 rng(9);
  for (int i = 0; i < 10; ++i) {
    const Vec2 n = random_normal(rng);
    EXPECT_EQ(farfield_flux(inf, fs, n), normal_flux(inf, n));
  }
  const State u = random_state(rng);
  const Vec2 n = random_normal(rng);
  const auto fd = fd_jacobian([&](const State& s) { return farfield_flux(s, fs, n); }, u);
  EXPECT_LT(rel_err(farfield_flux_jacobian(u, fs, n).d_left, fd), 1e-6);
}

// ---------------------------------------------------------------------------

TEST(Residual, FreeStreamPreservedOnAllFarfieldMesh) {
  const FvMesh fv(square_mesh(8));
  for (const auto& f : fv.faces) EXPECT_NE(f.kind, FaceKind::wall);
  const FreeStream fs{0.85, 3.0};
  const auto r = assemble_residual(fv, uniform_field(fv.num_cells(), fs), fs);
  EXPECT_LT(max_norm(r), 1e-12);
}

TEST(Residual, InteriorFluxesTelescope) {
  std::mt19937 rng(10);
  const FvMesh fv(small_airfoil_mesh());
  const FreeStream fs{0.85, 0.0};
  const auto f = random_field(fv.num_cells(), rng);
  const auto r = assemble_residual(fv, f, fs);
  State total = State::Zero();
  for (std::size_t i = 0; i < fv.num_cells(); ++i) total += r.segment<4>(static_cast<Eigen::Index>(4 * i));
  // sum over cells leaves only the boundary fluxes
  State boundary = State::Zero();
  for (const auto& face : fv.faces) {
    const State u = f.cell(static_cast<std::size_t>(face.left));
    if (face.kind == FaceKind::wall) boundary += face.length * wall_flux(u, face.normal);
    if (face.kind == FaceKind::farfield) boundary += face.length * farfield_flux(u, fs, face.normal);
  }
  EXPECT_LT((total - boundary).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Residual, NonPhysicalCellIsNamed) {
  const FvMesh fv(square_mesh(3));
  const FreeStream fs{0.5, 0.0};
  auto f = uniform_field(fv.num_cells(), fs);
  f.set_cell(5, State{1.0, 3.0, 0.0, 1.0});
  try {
    assemble_residual(fv, f, fs);
    FAIL() << "expected StateError";
  } catch (const StateError& e) {
    EXPECT_EQ(e.cell(), 5);
  }
}

TEST(Jacobian, MatchesFiniteDifferenceOnRandomStates) {
  std::mt19937 rng(11);
  const FvMesh fv(small_airfoil_mesh());
  const FreeStream fs{0.85, 1.25};
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = random_field(fv.num_cells(), rng);
    Eigen::VectorXd v(f.u.size());
    for (auto& x : v) x = nd(rng);
    const double eps = 1e-6;
    const FlowField fp{f.u + eps * v};
    const FlowField fm{f.u - eps * v};
    const Eigen::VectorXd fd = (assemble_residual(fv, fp, fs) - assemble_residual(fv, fm, fs)) / (2.0 * eps);
    const Eigen::VectorXd jv = assemble_jacobian(fv, f, fs) * v;
    EXPECT_LT((jv - fd).norm() / fd.norm(), 1e-6);
  }
}

TEST(Jacobian, BlockSparsityFollowsEdges) {
  std::mt19937 rng(12);
  const auto& m = small_airfoil_mesh();
  const FvMesh fv(m);
  const FreeStream fs{0.85, 0.0};
  const auto j = assemble_jacobian(fv, random_field(fv.num_cells(), rng), fs);
  const auto adj = mesh::build_adjacency(m);
  for (int k = 0; k < j.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(j, k); it; ++it) {
      if (it.value() == 0.0) continue;
      const int bi = static_cast<int>(it.row() / 4);
      const int bj = static_cast<int>(it.col() / 4);
      const auto& nb = adj.neighbor[static_cast<std::size_t>(bi)];
      EXPECT_TRUE(bi == bj || nb[0] == bj || nb[1] == bj || nb[2] == bj);
    }
}

TEST(Jacobian, ConstantProbeVanishesAwayFromBoundary) {
  const auto& m = small_airfoil_mesh();
  const FvMesh fv(m);
  const FreeStream fs{0.7, 2.0};
  const auto f = uniform_field(fv.num_cells(), fs);
  const auto j = assemble_jacobian(fv, f, fs);
  std::set<int> touches_boundary;
  for (const auto& face : fv.faces)
    if (face.right < 0) touches_boundary.insert(face.left);
  Eigen::VectorXd c(f.u.size());
  for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = std::array{0.3, -1.1, 0.7, 2.0}[static_cast<std::size_t>(i % 4)];
  const Eigen::VectorXd jc = j * c;
  double worst = 0.0;
  for (std::size_t i = 0; i < fv.num_cells(); ++i)
    if (!touches_boundary.contains(static_cast<int>(i)))
      worst = std::max(worst, jc.segment<4>(static_cast<Eigen::Index>(4 * i)).cwiseAbs().maxCoeff());
  EXPECT_LT(worst, 1e-10);
}

// ---------------------------------------------------------------------------

TEST(Newton, ConvergedInputReturnsImmediately) {
  const FvMesh fv(square_mesh(4));
  const FreeStream fs{0.5, 0.0};
  const auto r = newton_solve(fv, fs);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_TRUE(r.converged);
  ASSERT_EQ(r.history.size(), 1u);
}

TEST(Newton, TransonicNacaConverges) {
  const FvMesh fv(coarse_airfoil_mesh());
  const FreeStream fs{0.85, 0.0};
  const auto r = newton_solve(fv, fs);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.iterations, 100);
  EXPECT_LE(r.residual_norm, 1e-3);
  EXPECT_LT(max_norm(assemble_residual(fv, r.field, fs)), 1e-3);
  EXPECT_TRUE(all_physical(r.field));
  const auto forces = compute_forces(fv, r.field, fs);
  EXPECT_LT(std::abs(forces.cl), 5e-3);
  EXPECT_GT(forces.cd, 0.0);
}

TEST(Newton, SuperlinearNearConvergenceSubsonic) {
  const FvMesh fv(coarse_airfoil_mesh());
  const FreeStream fs{0.3, 0.0};
  NewtonOptions o;
  o.tol = 1e-9;
  const auto r = newton_solve(fv, fs, o);
  const auto& h = r.history;
  ASSERT_GE(h.size(), 5u);
  const auto n = h.size();
  const double q1 = h[n - 3].residual_norm / h[n - 4].residual_norm;
  const double q2 = h[n - 2].residual_norm / h[n - 3].residual_norm;
  const double q3 = h[n - 1].residual_norm / h[n - 2].residual_norm;
  EXPECT_LT(q2, q1);
  EXPECT_LT(q3, q2);
  EXPECT_LT(q3, 0.1);
}

TEST(Newton, IterationLimitThrowsWithHistory) {
  const FvMesh fv(coarse_airfoil_mesh());
  const FreeStream fs{0.85, 0.0};
  NewtonOptions o;
  o.max_iter = 2;
  try {
    newton_solve(fv, fs, o);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.history().size(), 3u);
  }
  o.throw_on_max_iter = false;
  const auto r = newton_solve(fv, fs, o);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 2);
}

// ---------------------------------------------------------------------------

TEST(Forces, UniformPressureGivesNoForce) {
  const FvMesh fv(coarse_airfoil_mesh());
  const FreeStream fs{0.85, 0.0};
  const auto f = compute_forces(fv, uniform_field(fv.num_cells(), fs), fs);
  EXPECT_LT(std::abs(f.cd), 1e-10);
  EXPECT_LT(std::abs(f.cl), 1e-10);
  EXPECT_THROW(lift_drag_ratio(f), DomainError);
  EXPECT_NEAR(lift_drag_ratio({0.02, 0.3}), 15.0, 1e-12);
}

TEST(Forces, RotatedFreeStreamSwapsAxes) {
  // a pure x-force reads as drag at 0 degrees and as -lift at 90 degrees
  std::mt19937 rng(13);
  const FvMesh fv(coarse_airfoil_mesh());
  const auto f = random_field(fv.num_cells(), rng);
  const auto a = compute_forces(fv, f, FreeStream{0.5, 0.0});
  const auto b = compute_forces(fv, f, FreeStream{0.5, 90.0});
  EXPECT_NEAR(b.cl, -a.cd, 1e-12);
  EXPECT_NEAR(b.cd, a.cl, 1e-12);
}

// ---------------------------------------------------------------------------

TEST(SolutionFile, RoundTripIsBitExact) {
  std::mt19937 rng(14);
  const auto f = random_field(57, rng);
  std::stringstream ss;
  write_solution(ss, f);
  const auto back = read_solution(ss);
  ASSERT_EQ(back.u.size(), f.u.size());
  for (Eigen::Index i = 0; i < f.u.size(); ++i) EXPECT_EQ(back.u[i], f.u[i]);
  std::stringstream bad("1 2 3\n");
  EXPECT_THROW(read_solution(bad), IoError);
}

TEST(HistoryFile, Header) {
  std::stringstream ss;
  write_history(ss, {{0, 1.5, 10.0}, {1, 0.25, 20.0}});
  EXPECT_EQ(ss.str(), "iter,residual_norm,cfl\n0,1.5,10\n1,0.25,20\n");
}
