#include "oracles.hpp"

#include <cellhom/assembly.hpp>

#include <gtest/gtest.h>

#include <numbers>

using namespace cellhom;

namespace {

constexpr double pi = std::numbers::pi;

TensorField<2> anisotropic_field() {
  auto eval = [](const Point<2>& y) {
    Tensor<2> a;
    const double s = std::sin(2 * pi * y[0]) * std::cos(2 * pi * y[1]);
    a << 2.0 + s, 0.3 + 0.2 * s, 0.3 + 0.2 * s, 1.5 - 0.5 * s;
    return a;
  };
  return TensorField<2>("anisotropic", eval, 0.5, 3.5, 1.0);
}

// ---------------------------------------------------------------------------
// Grid

TEST(Grid, NodeAndUnknownCounts) {
  const auto d = build_grid<2>(1.0, 4, Boundary::dirichlet);
  EXPECT_EQ(d.node_count(), 25);
  EXPECT_EQ(d.dof_count(), 9);
  const auto p = build_grid<2>(1.0, 4, Boundary::periodic);
  EXPECT_EQ(p.dof_count(), 16);
  const auto g = build_grid<1>(2.0, 8, Boundary::dirichlet);
  EXPECT_DOUBLE_EQ(g.h(), 0.25);
  EXPECT_EQ(g.dof_count(), 7);
  EXPECT_EQ(build_grid<3>(1.0, 3, Boundary::dirichlet).dof_count(), 8);
}

TEST(Grid, RejectsDegenerateInput) {
  EXPECT_THROW(build_grid<2>(1.0, 1, Boundary::dirichlet), InvalidInput);
  EXPECT_THROW(build_grid<2>(0.0, 4, Boundary::dirichlet), InvalidInput);
  EXPECT_THROW(build_grid<2>(-1.0, 4, Boundary::periodic), InvalidInput);
  EXPECT_THROW(grid_for_mesh_size<2>(1.0, 0.0, Boundary::periodic), InvalidInput);
}

TEST(Grid, MeshSizeKeepsTheExactSide) {
  const auto g = grid_for_mesh_size<2>(4.49, 1.0 / 32.0, Boundary::dirichlet);
  EXPECT_EQ(g.side(), 4.49);
  EXPECT_EQ(g.cells_per_axis(), 144);
  EXPECT_NEAR(g.coordinate(g.cells_per_axis()), 0.5 * 4.49, 1e-14);
}

TEST(Grid, PeriodicWrapIdentifiesOppositeNodes) {
  const auto g = build_grid<2>(1.0, 4, Boundary::periodic);
  EXPECT_EQ(g.dof_of({4, 1}), g.dof_of({0, 1}));
  EXPECT_EQ(g.dof_of({2, 4}), g.dof_of({2, 0}));
  const auto d = build_grid<2>(1.0, 4, Boundary::dirichlet);
  EXPECT_EQ(d.dof_of({0, 2}), -1);
  EXPECT_EQ(d.dof_of({1, 1}), 0);
  EXPECT_NEAR(d.dof_point(0)[0], -0.25, 1e-15);
}

TEST(Grid, BoundaryNamesRoundTrip) {
  EXPECT_EQ(parse_boundary(to_string(Boundary::periodic)), Boundary::periodic);
  EXPECT_EQ(parse_boundary("dirichlet"), Boundary::dirichlet);
  EXPECT_THROW(parse_boundary("neumann"), ConfigError);
}

// ---------------------------------------------------------------------------
// Assembly

TEST(Assembly, OneDimensionalLaplacianByHand) {
  const auto sys = assemble(constant_field<1>(1.0), build_grid<1>(1.0, 4, Boundary::dirichlet));
  Eigen::MatrixXd expected(3, 3);
  expected << 8, -4, 0, -4, 8, -4, 0, -4, 8;
  EXPECT_LT((Matrix(sys.stiffness.storage()) - expected).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LT(sys.loads.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Assembly, MatchesDenseOracleInOneDimension) {
  auto a = [](double y) { return 2.0 + std::sin(2 * pi * y); };
  const auto field = sinusoidal_field<1>(2.0, 1.0);
  for (Boundary bc : {Boundary::dirichlet, Boundary::periodic}) {
    SCOPED_TRACE(to_string(bc));
    const auto sys = assemble(field, build_grid<1>(3.3, 40, bc));
    const oracle::Dense1D ref(a, 3.3, 40, bc == Boundary::periodic);
    EXPECT_LT((Matrix(sys.stiffness.storage()) - ref.K).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((Matrix(sys.mass.storage()) - ref.M).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((sys.loads.col(0) - ref.b).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(Assembly, TwoDimensionalStencilForConstantCoefficient) {
  // Q1 element stencil of -c Laplace: 8c/3 on the diagonal, -c/3 for the eight
  // neighbours; the mass stencil is h^2 (16, 4, 1) / 36.
  const double c = 1.7;
  const int n = 6;
  const auto g = build_grid<2>(1.0, n, Boundary::dirichlet);
  const auto sys = assemble(constant_field<2>(c), g);
  const double h = g.h();
  const long mid = g.dof_of({3, 3});
  EXPECT_NEAR(sys.stiffness.entry(mid, mid), 8 * c / 3, 1e-13);
  EXPECT_NEAR(sys.stiffness.entry(mid, g.dof_of({4, 3})), -c / 3, 1e-13);
  EXPECT_NEAR(sys.stiffness.entry(mid, g.dof_of({4, 4})), -c / 3, 1e-13);
  EXPECT_NEAR(sys.mass.entry(mid, mid), 16 * h * h / 36, 1e-15);
  EXPECT_NEAR(sys.mass.entry(mid, g.dof_of({3, 2})), 4 * h * h / 36, 1e-15);
  EXPECT_NEAR(sys.mass.entry(mid, g.dof_of({2, 2})), h * h / 36, 1e-15);
  EXPECT_EQ(sys.stiffness.entry(mid, g.dof_of({5, 3})), 0.0);
}

TEST(Assembly, ConstantCoefficientGivesZeroLoads) {
  const auto sys = assemble(constant_field<2>(3.0), build_grid<2>(2.5, 20, Boundary::dirichlet));
  EXPECT_LT(sys.loads.cwiseAbs().maxCoeff(), 1e-13);
  const auto per = assemble(constant_field<3>(3.0), build_grid<3>(1.0, 4, Boundary::periodic));
  EXPECT_LT(per.loads.cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Assembly, PeriodicMassSumsToVolumeAndStiffnessKillsConstants) {
  const auto sys = assemble(benchmark_tensor_2d(), build_grid<2>(2.0, 24, Boundary::periodic));
  EXPECT_NEAR(sys.mass.row_sums().sum(), 4.0, 1e-12);
  EXPECT_LT(sys.stiffness.row_sums().cwiseAbs().maxCoeff(), 1e-12);
  // The weak divergence of a periodic field integrates to zero.
  EXPECT_LT(std::abs(sys.loads.col(0).sum()), 1e-12);
}

TEST(Assembly, OperatorsAreBitwiseSymmetric) {
  for (Boundary bc : {Boundary::dirichlet, Boundary::periodic}) {
    const auto sys = assemble(anisotropic_field(), build_grid<2>(2.0, 16, bc));
    EXPECT_EQ(sys.stiffness.max_asymmetry(), 0.0);
    EXPECT_EQ(sys.mass.max_asymmetry(), 0.0);
  }
}

TEST(Assembly, DirichletStiffnessIsPositiveDefinite) {
  const auto sys = assemble(anisotropic_field(), build_grid<2>(1.5, 10, Boundary::dirichlet));
  const Matrix k(sys.stiffness.storage());
  Eigen::SelfAdjointEigenSolver<Matrix> es(k);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(FilteredFlux, LinearCorrectorCancelsTheUnitGradient) {
  // chi^j = -y_j is reproduced exactly by Q1 interpolation away from the boundary cells.
  const auto g = build_grid<2>(2.0, 16, Boundary::dirichlet);
  const auto field = constant_field<2>(1.0);
  Matrix chis(g.dof_count(), 2);
  chis.col(0) = interpolate(g, [](const Point<2>& y) { return -y[0]; });
  chis.col(1) = interpolate(g, [](const Point<2>& y) { return -y[1]; });
  const BoxFilter<2> box(make_filter(1), 1.5);
  const Tensor<2> flux = filtered_flux_matrix(g, field, box, chis);
  EXPECT_LT(flux.cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_NEAR(filtered_flux_average(g, field, box, chis.col(1), 1, 1), 0.0, 1e-13);
}

// ---------------------------------------------------------------------------
// Filtered functionals

TEST(FilteredBilinear, ElementaryValues) {
  const auto g = build_grid<1>(2.0, 32, Boundary::dirichlet);
  const BoxFilter<1> box(make_filter(0), 1.0);
  const Vector one = interpolate(g, [](const Point<1>&) { return 1.0; });
  const Vector y = interpolate(g, [](const Point<1>& p) { return p[0]; });
  EXPECT_NEAR(filtered_bilinear(g, box, one, one), 1.0, 1e-14);
  EXPECT_NEAR(filtered_bilinear(g, box, one, y), 0.0, 1e-15);
  EXPECT_NEAR(filtered_bilinear(g, box, y, y), 1.0 / 12.0, 1e-14);
}

TEST(FilteredBilinear, ConstantsAverageExactlyForEveryOrder) {
  const auto g = build_grid<2>(3.3, 50, Boundary::dirichlet);
  const Vector one = interpolate(g, [](const Point<2>&) { return 1.0; });
  for (int q : {0, 1, 2, 3, 5}) {
    const BoxFilter<2> box(make_filter(q), 1.65);
    EXPECT_NEAR(filtered_bilinear(g, box, one, one), 1.0, 1e-13) << "q = " << q;
    const SparseSym w = weighted_mass(g, box);
    EXPECT_NEAR(one.dot(w.apply(one)), 1.0, 1e-13);
    EXPECT_EQ(w.max_asymmetry(), 0.0);
  }
}

TEST(FilteredBilinear, WeightedMassReproducesTheBilinearForm) {
  const auto g = build_grid<2>(2.7, 30, Boundary::dirichlet);
  const BoxFilter<2> box(make_filter(3), 1.35);
  const Vector u = interpolate(g, [](const Point<2>& y) { return std::cos(y[0]) * std::sin(y[1] + 1); });
  const Vector v = interpolate(g, [](const Point<2>& y) { return y[0] * y[0] - y[1]; });
  EXPECT_NEAR(u.dot(weighted_mass(g, box).apply(v)), filtered_bilinear(g, box, u, v), 1e-13);
}

TEST(FilteredBilinear, SecondOrderUnderRefinement) {
  auto u = [](double y) { return std::cos(1.3 * y) + 0.5 * y; };
  auto v = [](double y) { return std::sin(0.7 * y + 0.2); };
  const double L = 2.0;
  const Filter base(3);
  const double exact =
      oracle::simpson([&](double y) { return u(y) * v(y) * base(y / L) / L; }, -L / 2, L / 2);
  std::vector<double> hs;
  std::vector<double> errs;
  for (int n : {10, 20, 40, 80}) {
    const auto g = build_grid<1>(3.0, n, Boundary::dirichlet);
    const BoxFilter<1> box(base, L);
    const Vector uh = interpolate(g, [&](const Point<1>& p) { return u(p[0]); });
    const Vector vh = interpolate(g, [&](const Point<1>& p) { return v(p[0]); });
    hs.push_back(g.h());
    errs.push_back(std::abs(filtered_bilinear(g, box, uh, vh) - exact));
  }
  EXPECT_GE(oracle::loglog_slope(hs, errs), 1.9);
}

TEST(FilteredBilinear, RejectsBoxLargerThanCell) {
  const auto g = build_grid<2>(2.0, 8, Boundary::dirichlet);
  const Vector z = Vector::Zero(g.dof_count());
  EXPECT_THROW(filtered_bilinear(g, BoxFilter<2>(make_filter(1), 2.5), z, z), InvalidInput);
  EXPECT_THROW(weighted_mass(g, BoxFilter<2>(make_filter(1), 2.5)), InvalidInput);
  EXPECT_THROW(filtered_bilinear(g, BoxFilter<2>(make_filter(1), 1.0), Vector(Vector::Zero(3)), z),
               InvalidInput);
}

TEST(FilteredFlux, BoxAverageOfTheBenchmarkOverOnePeriod) {
  const auto field = benchmark_tensor_2d();
  const auto g = build_grid<2>(2.0, 64, Boundary::dirichlet);
  const Tensor<2> avg = filtered_flux_matrix(g, field, BoxFilter<2>(make_filter(0), 1.0),
                                             Matrix::Zero(g.dof_count(), 2));
  const double m11 =
      oracle::simpson([&](double y) { return field(Point<2>(y, 0))(0, 0); }, -0.5, 0.5);
  const double m22 =
      oracle::simpson([&](double y) { return field(Point<2>(0, y))(1, 1); }, -0.5, 0.5);
  EXPECT_NEAR(avg(0, 0), m11, 1e-9);
  EXPECT_NEAR(avg(1, 1), m22, 1e-9);
  EXPECT_EQ(avg(0, 1), 0.0);
}

TEST(FilteredFlux, FilterMassOfAlignedUnitBox) {
  const auto g = build_grid<2>(2.0, 16, Boundary::dirichlet);
  EXPECT_NEAR(filter_mass(g, BoxFilter<2>(make_filter(0), 1.0)), 1.0, 1e-14);
  EXPECT_NEAR(filter_mass(g, BoxFilter<2>(make_filter(1), 1.0)), 1.0, 1e-2);
}

TEST(FilteredFlux, RejectsBadIndices) {
  const auto g = build_grid<2>(2.0, 8, Boundary::dirichlet);
  const Vector z = Vector::Zero(g.dof_count());
  const BoxFilter<2> box(make_filter(0), 1.0);
  EXPECT_THROW(filtered_flux_average(g, constant_field<2>(1), box, z, 2, 0), InvalidInput);
  EXPECT_THROW(filtered_flux_matrix(g, constant_field<2>(1), box, Matrix::Zero(3, 2)),
               InvalidInput);
}

TEST(EnergyMatrix, ZeroCorrectorGivesTheCellAverage) {
  const auto g = build_grid<2>(1.0, 32, Boundary::periodic);
  const Tensor<2> e = energy_matrix(g, constant_field<2>(2.5), Matrix::Zero(g.dof_count(), 2));
  EXPECT_LT((e - 2.5 * Tensor<2>::Identity()).cwiseAbs().maxCoeff(), 1e-13);
}

} // namespace
