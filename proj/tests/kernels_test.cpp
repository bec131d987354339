#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "gpopt/kernels.hpp"
#include "oracles.hpp"

namespace gpopt {
namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

TEST(EvalKernel, IsotropicAtZeroDistanceIsSignalVariance) {
  const auto k = KernelSpec::squared_exp_iso(1.0, 1.0);
  EXPECT_EQ(eval_kernel(k, vec({0.3}), vec({0.3})), 1.0);
  const auto k2 = KernelSpec::squared_exp_iso(2.5, 0.7);
  EXPECT_EQ(eval_kernel(k2, vec({1.0, -2.0}), vec({1.0, -2.0})), 2.5);
}

TEST(EvalKernel, IsotropicUnitDistance) {
  const auto k = KernelSpec::squared_exp_iso(1.0, 1.0);
  EXPECT_NEAR(eval_kernel(k, vec({0.0}), vec({1.0})), 0.6065306597, 1e-10);
}

TEST(EvalKernel, ArdDiagonalOffset) {
  const auto k = KernelSpec::squared_exp_ard(1.0, vec({1.0, 1.0}));
  EXPECT_NEAR(eval_kernel(k, vec({0.0, 0.0}), vec({1.0, 1.0})), 0.3678794412, 1e-10);
}

TEST(EvalKernel, MaternHalfIsUnsquaredExponential) {
  const auto k = KernelSpec::matern(MaternNu::Half, 1.0, vec({1.0}));
  EXPECT_NEAR(eval_kernel(k, vec({0.0}), vec({1.0})), std::exp(-1.0), 1e-12);
}

TEST(EvalKernel, MaternThreeHalvesMatchesBesselForm) {
  const auto k = KernelSpec::matern(MaternNu::ThreeHalves, 1.0, vec({1.0}));
  const double closed = eval_kernel(k, vec({0.0}), vec({1.0}));
  EXPECT_NEAR(closed, 0.4833577245, 1e-10);
  EXPECT_NEAR(closed, oracle::matern_bessel(1.5, 1.0, 1.0), 1e-9);
}

TEST(EvalKernel, ClosedFormsMatchBesselFormAcrossDistances) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.01, 4.0);
  for (auto [nu, value] : {std::pair{MaternNu::Half, 0.5}, {MaternNu::ThreeHalves, 1.5}, {MaternNu::FiveHalves, 2.5}}) {
    for (int i = 0; i < 50; ++i) {
      const Eigen::Vector2d ls(u(rng), u(rng));
      const auto k = KernelSpec::matern(nu, 1.7, ls);
      const Eigen::Vector2d x(u(rng), u(rng)), xp(u(rng), u(rng));
      const double r = ((x - xp).array() / ls.array()).matrix().norm();
      EXPECT_NEAR(eval_kernel(k, x, xp), oracle::matern_bessel(value, 1.7, r), 1e-9) << "nu=" << value;
    }
  }
}

TEST(EvalKernel, RejectsDimensionMismatch) {
  const auto ard = KernelSpec::squared_exp_ard(1.0, vec({1.0, 1.0}));
  EXPECT_THROW(eval_kernel(ard, vec({0.0}), vec({0.0})), InvalidArgument);
  EXPECT_THROW(eval_kernel(ard, vec({0.0, 1.0}), vec({0.0})), InvalidArgument);
  const auto iso = KernelSpec::squared_exp_iso(1.0, 1.0);
  EXPECT_THROW(eval_kernel(iso, vec({0.0, 1.0}), vec({0.0})), InvalidArgument);
}

TEST(EvalKernel, RejectsNonFiniteCoordinates) {
  const auto iso = KernelSpec::squared_exp_iso(1.0, 1.0);
  EXPECT_THROW(eval_kernel(iso, vec({std::nan("")}), vec({0.0})), InvalidArgument);
  EXPECT_THROW(eval_kernel(iso, vec({0.0}), vec({INFINITY})), InvalidArgument);
}

TEST(KernelSpec, RejectsInvalidHyperparameters) {
  EXPECT_THROW(KernelSpec::squared_exp_iso(0.0, 1.0), InvalidArgument);
  EXPECT_THROW(KernelSpec::squared_exp_iso(1.0, -1.0), InvalidArgument);
  EXPECT_THROW(KernelSpec::squared_exp_ard(1.0, Eigen::VectorXd()), InvalidArgument);
  EXPECT_THROW(matern_nu_from_value(2.0), InvalidArgument);
  EXPECT_EQ(matern_nu_from_value(1.5), MaternNu::ThreeHalves);
}

TEST(KernelSpec, LogHyperRoundTrip) {
  const auto k = KernelSpec::matern(MaternNu::ThreeHalves, 0.8, vec({0.5, 2.0, 3.0}));
  const auto back = k.with_log_hypers(k.log_hypers());
  EXPECT_EQ(back.family(), k.family());
  EXPECT_EQ(back.nu(), k.nu());
  EXPECT_NEAR(back.signal_variance(), 0.8, 1e-15);
  EXPECT_TRUE(back.length_scales().isApprox(k.length_scales(), 1e-15));
}

TEST(KernelProperties, SymmetricAndBounded) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dim(1, 5);
  for (int trial = 0; trial < 500; ++trial) {
    const Eigen::Index d = dim(rng);
    const auto k = oracle::random_kernel(rng, d);
    const Eigen::MatrixXd P = oracle::uniform_points(rng, 2, d, -3.0, 3.0);
    const Eigen::VectorXd x = P.row(0).transpose(), xp = P.row(1).transpose();
    const double a = eval_kernel(k, x, xp);
    EXPECT_EQ(a, eval_kernel(k, xp, x));
    EXPECT_GT(a, 0.0);
    EXPECT_LE(a, k.signal_variance());
    if (x != xp) {
      EXPECT_LT(a, k.signal_variance() - 1e-12 * k.signal_variance());
    }
    EXPECT_EQ(eval_kernel(k, x, x), k.signal_variance());
  }
}

TEST(KernelProperties, MaternApproachesSquaredExponentialAsSmoothnessGrows) {
  const auto se = KernelSpec::squared_exp_iso(1.0, 1.0);
  const auto m32 = KernelSpec::matern(MaternNu::ThreeHalves, 1.0, vec({1.0}));
  const auto m52 = KernelSpec::matern(MaternNu::FiveHalves, 1.0, vec({1.0}));
  double sup32 = 0.0, sup52 = 0.0;
  for (int i = 0; i <= 30; ++i) {
    const Eigen::VectorXd x = vec({0.0}), xp = vec({0.1 * i});
    const double s = eval_kernel(se, x, xp);
    sup32 = std::max(sup32, std::abs(eval_kernel(m32, x, xp) - s));
    sup52 = std::max(sup52, std::abs(eval_kernel(m52, x, xp) - s));
  }
  EXPECT_LT(sup52, sup32);
}

TEST(GramMatrix, SinglePoint) {
  const auto k = KernelSpec::squared_exp_iso(1.0, 1.0);
  const Eigen::MatrixXd K = gram_matrix(k, Eigen::MatrixXd::Zero(1, 1), 0.0);
  ASSERT_EQ(K.rows(), 1);
  EXPECT_EQ(K(0, 0), 1.0);
}

TEST(GramMatrix, DuplicatePointsRegularizedByJitter) {
  const auto k = KernelSpec::squared_exp_iso(1.0, 1.0);
  Eigen::MatrixXd X(2, 1);
  X << 0.5, 0.5;
  const Eigen::MatrixXd K = gram_matrix(k, X, 1e-10);
  EXPECT_EQ(K(0, 0), 1.0 + 1e-10);
  EXPECT_EQ(K(1, 1), 1.0 + 1e-10);
  EXPECT_EQ(K(0, 1), 1.0);
  EXPECT_EQ(K(1, 0), 1.0);
}

TEST(GramMatrix, EmptyInputIsAnError) {
  const auto k = KernelSpec::squared_exp_iso(1.0, 1.0);
  EXPECT_THROW(gram_matrix(k, Eigen::MatrixXd(0, 1)), InvalidArgument);
}

TEST(GramMatrix, MatchesPointwiseEvaluationAndIsSymmetric) {
  std::mt19937_64 rng(5);
  const auto k = oracle::random_kernel(rng, 3);
  const Eigen::MatrixXd X = oracle::uniform_points(rng, 6, 3, -1.0, 1.0);
  const Eigen::MatrixXd K = gram_matrix(k, X);
  EXPECT_TRUE(K == K.transpose());
  EXPECT_TRUE(K.isApprox(oracle::pairwise(k, X, X), 1e-15));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12);
}

TEST(GramMatrix, PositiveSemiDefiniteWithDefaultJitter) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> size(1, 20), dim(1, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = dim(rng);
    const auto k = oracle::random_kernel(rng, d, 0.1, 5.0);
    const Eigen::MatrixXd X = oracle::uniform_points(rng, size(rng), d, 0.0, 1.0);
    const Eigen::MatrixXd K = gram_matrix(k, X, 1e-10 * k.signal_variance());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K, Eigen::EigenvaluesOnly);
    EXPECT_GE(eig.eigenvalues().minCoeff(), 0.0) << "trial " << trial;
  }
}

TEST(KernelGradHyper, ZeroDistance) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const auto k = oracle::random_kernel(rng, 3);
    const Eigen::VectorXd x = oracle::uniform_points(rng, 1, 3, -1, 1).row(0).transpose();
    const Eigen::VectorXd g = kernel_grad_hyper(k, x, x);
    EXPECT_EQ(g[0], k.signal_variance());
    for (Eigen::Index i = 1; i < g.size(); ++i) EXPECT_EQ(g[i], 0.0);
  }
}

TEST(KernelGradHyper, IsotropicUnitDistance) {
  const auto k = KernelSpec::squared_exp_iso(1.0, 1.0);
  const Eigen::VectorXd g = kernel_grad_hyper(k, vec({0.0}), vec({1.0}));
  EXPECT_NEAR(g[1], 0.6065306597, 1e-10);
  EXPECT_NEAR(g[0], 0.6065306597, 1e-10);
}

TEST(KernelGradHyper, MatchesFiniteDifferences) {
  std::mt19937_64 rng(29);
  std::uniform_int_distribution<int> dim(1, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = dim(rng);
    const auto k = oracle::random_kernel(rng, d);
    const Eigen::MatrixXd P = oracle::uniform_points(rng, 2, d, -1.5, 1.5);
    const Eigen::VectorXd x = P.row(0).transpose(), xp = P.row(1).transpose();
    const auto f = [&](const Eigen::VectorXd& theta) { return eval_kernel(k.with_log_hypers(theta), x, xp); };
    const Eigen::VectorXd fd = oracle::central_difference(f, k.log_hypers(), 1e-6);
    const Eigen::VectorXd g = kernel_grad_hyper(k, x, xp);
    EXPECT_LT((g - fd).norm() / g.norm(), 1e-6) << "trial " << trial;
  }
}

TEST(GramGradHyper, AgreesWithPointwiseGradient) {
  std::mt19937_64 rng(31);
  const auto k = oracle::random_kernel(rng, 2);
  const Eigen::MatrixXd X = oracle::uniform_points(rng, 5, 2, 0.0, 1.0);
  const auto dK = gram_grad_hyper(k, X);
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = 0; j < 5; ++j) {
      const Eigen::VectorXd g = kernel_grad_hyper(k, X.row(i).transpose(), X.row(j).transpose());
      for (Eigen::Index p = 0; p < g.size(); ++p) EXPECT_NEAR(dK[static_cast<std::size_t>(p)](i, j), g[p], 1e-14);
    }
}

}  // namespace
}  // namespace gpopt
