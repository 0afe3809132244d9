#include "oracles.hpp"

#include <cellhom/homogenize.hpp>

#include <gtest/gtest.h>

#include <numbers>

using namespace cellhom;

namespace {

constexpr double pi = std::numbers::pi;

double a_sin(double y) { return 2.0 + std::sin(2 * pi * y); }

double frobenius_asymmetry(const Tensor<2>& a) { return (a - a.transpose()).norm(); }

MethodParams manual(double R, double L, double T, int q, int N = 0) {
  MethodParams p;
  p.R = R;
  p.L = L;
  p.T = T;
  p.q = q;
  p.N = N;
  return p;
}

// ---------------------------------------------------------------------------
// Periodic reference

TEST(PeriodicReference, ConstantFieldIsReproducedExactly) {
  const auto out = solve_periodic_reference(constant_field<2>(3.0), 1.0 / 8);
  EXPECT_LT((out.values - 3.0 * Tensor<2>::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(out.correctors.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PeriodicReference, BenchmarkMatchesLaminateValues) {
  const auto out = solve_periodic_reference(benchmark_tensor_2d(), 1.0 / 64);
  EXPECT_NEAR(out.values(0, 0), 0.2, 1e-3);
  EXPECT_NEAR(out.values(1, 1), 20.0 / 41.0, 1e-3);
  EXPECT_LT(std::abs(out.values(0, 1)), 1e-12);
  EXPECT_LE(frobenius_asymmetry(out.values), 1e-12 * out.values.norm());
  const auto f = benchmark_tensor_2d();
  EXPECT_GE(out.diagnostics.spectral_min, f.alpha());
  EXPECT_LE(out.diagnostics.spectral_max, f.beta());
}

TEST(PeriodicReference, TwoPhaseLaminateGivesHarmonicMean) {
  const auto out = solve_periodic_reference(checkerboard_field<1>(1.0, 4.0), 1.0 / 32);
  EXPECT_NEAR(out.values(0, 0), 1.6, 1e-12);
}

TEST(PeriodicReference, MatchesDensePeriodicOracle) {
  const auto out = solve_periodic_reference(sinusoidal_field<1>(2.0, 1.0), 1.0 / 40);
  const oracle::Dense1D ref(a_sin, 1.0, 40, true);
  EXPECT_NEAR(out.values(0, 0), ref.periodic_coefficient(a_sin), 1e-12);
  EXPECT_NEAR(out.values(0, 0), std::sqrt(3.0), 1e-3);
}

TEST(PeriodicReference, CorrectorHasZeroMean) {
  const auto out = solve_periodic_reference(benchmark_tensor_2d(), 1.0 / 16);
  const auto sys = assemble(benchmark_tensor_2d(), build_grid<2>(1.0, 16, Boundary::periodic));
  const Vector mass_one = sys.mass.apply(Vector(Vector::Ones(sys.dofs())));
  EXPECT_LT(std::abs(mass_one.dot(out.correctors.col(0))), 1e-12);
}

TEST(PeriodicReference, RejectsNonPeriodicFields) {
  auto eval = [](const Point<2>& y) { return Tensor<2>((1.0 + 0.1 * y.squaredNorm()) * Tensor<2>::Identity()); };
  const TensorField<2> f("radial", eval, 1.0, 10.0);
  EXPECT_THROW(solve_periodic_reference(f, 0.1), InvalidInput);
  EXPECT_THROW(solve_periodic_cell(benchmark_tensor_2d(), 2.5, 0.1), InvalidInput);
  const auto two = solve_periodic_cell(benchmark_tensor_2d(), 2.0, 1.0 / 16);
  const auto one = solve_periodic_reference(benchmark_tensor_2d(), 1.0 / 16);
  EXPECT_LT((two.values - one.values).cwiseAbs().maxCoeff(), 1e-10);
}

// ---------------------------------------------------------------------------
// Classical Dirichlet

TEST(Elliptic, ConstantFieldIsReproducedExactly) {
  const auto out = solve_elliptic_dirichlet(constant_field<2>(1.7), 2.5, 1.0 / 8);
  EXPECT_LT((out.values - 1.7 * Tensor<2>::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Elliptic, MatchesDenseDirichletOracle) {
  const double R = 3.3;
  const auto out = solve_elliptic_dirichlet(sinusoidal_field<1>(2.0, 1.0), R, R / 106);
  const oracle::Dense1D ref(a_sin, R, 106, false);
  Eigen::VectorXd psi;
  EXPECT_NEAR(out.values(0, 0), ref.dirichlet_coefficient(a_sin, &psi), 1e-12);
  EXPECT_LT((out.correctors.col(0) - psi).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Elliptic, OneDimensionalClosedFormAtSecondOrder) {
  // In 1D the Dirichlet value is R / int_{K_R} a^{-1}; for whole R it is the harmonic mean.
  for (double R : {3.0, 3.4}) {
    const double exact = R / oracle::simpson([](double y) { return 1.0 / a_sin(y); }, -R / 2, R / 2);
    const auto coarse = solve_elliptic_dirichlet(sinusoidal_field<1>(2.0, 1.0), R, 1.0 / 64);
    const auto fine = solve_elliptic_dirichlet(sinusoidal_field<1>(2.0, 1.0), R, 1.0 / 128);
    const double e_coarse = std::abs(coarse.values(0, 0) - exact);
    const double e_fine = std::abs(fine.values(0, 0) - exact);
    EXPECT_LT(e_fine, 1e-4) << R;
    EXPECT_NEAR(std::log2(e_coarse / e_fine), 2.0, 0.05) << R;
  }
  EXPECT_NEAR(3.0 / oracle::simpson([](double y) { return 1.0 / a_sin(y); }, -1.5, 1.5),
              std::sqrt(3.0), 1e-12);
}

TEST(Elliptic, OutputIsSymmetric) {
  const auto out = solve_elliptic_dirichlet(benchmark_tensor_2d(), 2.5, 1.0 / 16);
  EXPECT_LE(frobenius_asymmetry(out.values), 1e-12 * out.values.norm());
  EXPECT_EQ(out.method, Method::elliptic);
}

// ---------------------------------------------------------------------------
// Parabolic

TEST(Parabolic, ConstantFieldHasZeroTrajectory) {
  const auto field = constant_field<2>(2.0);
  const auto p = manual(2.5, 1.25, 0.5, 1);
  const auto traj =
      evolve_parabolic(field, 2.5, 1.0 / 8, 0.5, {BoxFilter<2>(make_filter(1), 1.25)});
  EXPECT_EQ(traj.initial.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(traj.final_state.cwiseAbs().maxCoeff(), 0.0);
  const auto out = upscale_parabolic(field, p, traj);
  EXPECT_LT((out.values - 2.0 * Tensor<2>::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Parabolic, NormsDecayAndAccumulationStaysSymmetric) {
  const auto field = benchmark_tensor_2d();
  const auto traj =
      evolve_parabolic(field, 3.5, 1.0 / 16, 0.7, {BoxFilter<2>(make_filter(1), 1.75)});
  ASSERT_GT(traj.times.size(), 3u);
  EXPECT_EQ(traj.times.front(), 0.0);
  EXPECT_EQ(traj.times.back(), 0.7);
  for (std::size_t m = 1; m < traj.l2_norms.size(); ++m)
    for (int i = 0; i < 2; ++i)
      EXPECT_LE(traj.l2_norms[m][i], traj.l2_norms[m - 1][i] * (1 + 1e-12));
  for (const auto& acc : traj.windows[0].history) EXPECT_EQ(acc(0, 1), acc(1, 0));
  EXPECT_EQ(traj.stats.energy_increases, 0);
}

TEST(Parabolic, TimeIntegralReproducesDirichletCorrector) {
  const auto field = sinusoidal_field<1>(2.0, 1.0);
  SolveOptions opts;
  opts.time.tol = 1e-7;
  const auto sys = assemble_cell(field, 3.0, 1.0 / 32, Boundary::dirichlet);
  const auto traj = evolve_parabolic(sys, field, 20.0, {}, opts);
  const auto ell = solve_elliptic_dirichlet(sys, field);
  const Vector d = traj.time_integral.col(0) - ell.correctors.col(0);
  const double rel = std::sqrt(d.dot(sys.mass.apply(d))) /
                     std::sqrt(ell.correctors.col(0).dot(sys.mass.apply(Vector(ell.correctors.col(0)))));
  EXPECT_LT(rel, 1e-4);
}

TEST(Parabolic, FullWindowInfiniteTimeMatchesElliptic) {
  const auto field = sinusoidal_field<1>(2.0, 1.0);
  SolveOptions opts;
  opts.time.tol = 1e-7;
  const double R = 2.6;
  const auto ell = solve_elliptic_dirichlet(field, R, 1.0 / 32);
  const auto par = solve_parabolic(field, manual(R, R, 20.0, 0), 1.0 / 32, opts);
  EXPECT_NEAR(par.values(0, 0), ell.values(0, 0), 1e-4 * ell.values(0, 0));
}

TEST(Parabolic, UpscaleRejectsMismatchedTrajectories) {
  const auto field = benchmark_tensor_2d();
  const auto traj =
      evolve_parabolic(field, 2.5, 1.0 / 8, 0.3, {BoxFilter<2>(make_filter(1), 1.25)});
  EXPECT_NO_THROW(upscale_parabolic(field, manual(2.5, 1.25, 0.3, 1), traj));
  EXPECT_THROW(upscale_parabolic(field, manual(2.5, 1.0, 0.3, 1), traj), InvalidInput);
  EXPECT_THROW(upscale_parabolic(field, manual(2.5, 1.25, 0.3, 3), traj), InvalidInput);
  EXPECT_THROW(upscale_parabolic(field, manual(2.5, 1.25, 0.4, 1), traj), InvalidInput);
  EXPECT_THROW(upscale_parabolic(field, manual(3.5, 1.25, 0.3, 1), traj), InvalidInput);
  EXPECT_THROW(upscale_parabolic(constant_field<2>(1.0), manual(2.5, 1.25, 0.3, 1), traj),
               InvalidInput);
  EXPECT_THROW(evolve_parabolic(field, 2.5, 1.0 / 8, -1.0, {}), InvalidInput);
}

TEST(Parabolic, OutputIsSymmetric) {
  const auto out = solve_parabolic(benchmark_tensor_2d(), manual(2.5, 1.25, 0.45, 1), 1.0 / 16);
  EXPECT_LE(frobenius_asymmetry(out.values), 1e-12 * out.values.norm());
  EXPECT_GT(out.diagnostics.time_steps, 0);
}

// ---------------------------------------------------------------------------
// Modified elliptic

TEST(ModifiedElliptic, ConstantFieldIsReproducedExactly) {
  const auto out =
      solve_modified_elliptic(constant_field<2>(1.3), manual(2.5, 1.25, 0.7, 1, 10), 1.0 / 8);
  EXPECT_LT((out.values - 1.3 * Tensor<2>::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ModifiedElliptic, LongTimeLimitRecoversClassicalMethod) {
  const auto field = benchmark_tensor_2d();
  const auto sys = assemble_cell(field, 2.5, 1.0 / 16, Boundary::dirichlet);
  const auto modes = smallest_eigpairs(sys.stiffness, sys.mass, 20);
  const auto ell = solve_elliptic_dirichlet(sys, field);
  const auto mod = solve_modified_elliptic(sys, field, manual(2.5, 2.5, 1e3, 0, 20), modes);
  EXPECT_LT((mod.correctors - ell.correctors).cwiseAbs().maxCoeff(),
            1e-10 * ell.correctors.cwiseAbs().maxCoeff());
  EXPECT_LT((mod.values - ell.values).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ModifiedElliptic, AllModesReproduceTheTimeIntegral) {
  const auto field = sinusoidal_field<1>(2.0, 1.0);
  const double T = 0.4;
  SolveOptions opts;
  opts.time.tol = 1e-9;
  const auto sys = assemble_cell(field, 2.5, 1.0 / 16, Boundary::dirichlet);
  const int n = static_cast<int>(sys.dofs());
  const auto modes = smallest_eigpairs(sys.stiffness, sys.mass, n);
  const auto mod = solve_modified_elliptic(sys, field, manual(2.5, 1.25, T, 1, n), modes);
  const auto traj = evolve_parabolic(sys, field, T, {}, opts);
  const Vector d = mod.correctors.col(0) - traj.time_integral.col(0);
  EXPECT_LT(d.cwiseAbs().maxCoeff(), 1e-6 * traj.time_integral.cwiseAbs().maxCoeff());
}

TEST(ModifiedElliptic, ReportsAsymmetryAndSymmetrizesOnRequest) {
  auto skew = [](const Point<2>& y) {
    Tensor<2> a;
    const double s = std::sin(2 * pi * y[0]) + std::cos(2 * pi * y[1]);
    a << 2.0 + 0.5 * s, 0.4 + 0.3 * s, 0.4 + 0.3 * s, 1.5;
    return a;
  };
  const TensorField<2> f("coupled", skew, 0.3, 3.5, 1.0);
  const auto p = manual(2.5, 1.25, 0.7, 1, 12);
  const auto raw = solve_modified_elliptic(f, p, 1.0 / 16);
  EXPECT_NEAR(raw.diagnostics.asymmetry, frobenius_asymmetry(raw.values), 1e-15);
  EXPECT_GT(raw.diagnostics.asymmetry, 0.0);
  SolveOptions sym;
  sym.symmetrize = true;
  const auto out = solve_modified_elliptic(f, p, 1.0 / 16, sym);
  EXPECT_EQ(out.values(0, 1), out.values(1, 0));
  EXPECT_NEAR(out.values(0, 1), 0.5 * (raw.values(0, 1) + raw.values(1, 0)), 1e-14);
  EXPECT_LT(out.diagnostics.eigen_residual, 1e-6);
}

TEST(ModifiedElliptic, RejectsMoreModesThanUnknowns) {
  const auto field = sinusoidal_field<1>(2.0, 1.0);
  EXPECT_THROW(solve_modified_elliptic(field, manual(2.5, 1.25, 0.5, 1, 1000), 1.0 / 16),
               InvalidInput);
  EXPECT_THROW(solve_modified_elliptic(field, manual(2.5, 1.25, 0.5, 1, 0), 1.0 / 16),
               InvalidInput);
}

// ---------------------------------------------------------------------------
// Parameter rules

TEST(OptimalParams, ParabolicRule) {
  const auto f = benchmark_tensor_2d();
  const auto p = optimal_params(Method::parabolic, 8.0, 1, 0.5, f.alpha(), f.beta());
  EXPECT_DOUBLE_EQ(p.L, 4.0);
  EXPECT_NEAR(p.T, 8.0 / (2 * pi * std::sqrt(4 * f.beta() * f.alpha())), 1e-14);
  EXPECT_NEAR(p.T, p.k_T * p.R, 1e-15);
  EXPECT_TRUE(p.warnings.empty());
}

TEST(OptimalParams, ModifiedEllipticRule) {
  const auto f = benchmark_tensor_2d();
  for (double R : {2.5, 7.5, 11.3}) {
    const auto p = optimal_params(Method::modified_elliptic, R, 3, 0.5, f.alpha(), f.beta());
    EXPECT_EQ(p.N, 60);
    EXPECT_NEAR(p.k_T, 0.5 / (pi * std::sqrt(2 * f.beta() * f.alpha())), 1e-15);
  }
  NRule scaled;
  scaled.c_N = 2.0;
  EXPECT_EQ(optimal_params(Method::modified_elliptic, 3.5, 1, 0.5, 1, 2, scaled, 2).N, 25);
}

TEST(OptimalParams, RejectsBadOversampling) {
  EXPECT_THROW(optimal_params(Method::parabolic, 8.0, 1, 0.0, 1, 2), InvalidInput);
  EXPECT_THROW(optimal_params(Method::parabolic, 8.0, 1, 1.0, 1, 2), InvalidInput);
  EXPECT_THROW(optimal_params(Method::parabolic, 1.0, 1, 0.5, 1, 2), InvalidInput);
}

TEST(OptimalParams, WarnsWhenTheAveragingBoxReachesFloorR) {
  const auto p = optimal_params(Method::parabolic, 2.5, 1, 0.1, 1, 2);
  EXPECT_DOUBLE_EQ(p.L, 2.25);
  EXPECT_EQ(p.warnings.size(), 1u);
}

TEST(OptimalParams, MethodNamesRoundTrip) {
  for (Method m : {Method::periodic, Method::elliptic, Method::parabolic, Method::modified_elliptic})
    EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_EQ(to_string(Method::modified_elliptic), "modified-elliptic");
  EXPECT_THROW(parse_method("wave"), ConfigError);
}

} // namespace
