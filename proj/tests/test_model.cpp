#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "ivrobust/invariance.hpp"
#include "ivrobust/model.hpp"
#include "test_util.hpp"

using namespace ivrobust;

TEST(BuildNullProblem, IdentityAtZeroBeta) {
  CounterStream rng(1);
  const Matrix r = testutil::random_matrix(3, 2, rng);
  const Matrix sigma = random_spd(6, rng);
  const NullProblem p = build_null_problem(r, sigma, 0.0);
  EXPECT_EQ(p.r0, r);
  EXPECT_LT((p.sigma0 - sigma).norm(), 1e-14);
}

TEST(BuildNullProblem, ScalarRowTransform) {
  Matrix r(1, 2);
  r << 1.0, 2.0;
  const NullProblem p = build_null_problem(r, Matrix::Identity(2, 2), 1.0);
  EXPECT_DOUBLE_EQ(p.r0(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(p.r0(0, 1), 2.0);
}

TEST(BuildNullProblem, SigmaTransformMatchesDirectProduct) {
  Matrix r(1, 2);
  r << 0.3, -0.2;
  const NullProblem p = build_null_problem(r, Matrix::Identity(2, 2), 1.0);
  // (B0' kron 1) I (B0 kron 1) with B0 = [[1, 0], [-1, 1]]
  Matrix b0(2, 2);
  b0 << 1.0, 0.0, -1.0, 1.0;
  const Matrix expect = b0.transpose() * b0;
  EXPECT_LT((p.sigma0 - expect).norm(), 1e-15);
  EXPECT_DOUBLE_EQ(p.sigma0(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(p.sigma0(0, 1), -1.0);
  EXPECT_DOUBLE_EQ(p.sigma0(1, 1), 1.0);
}

TEST(BuildNullProblem, MeanOfFirstColumnVanishesOnlyAtTruth) {
  const Vector mu = Vector::LinSpaced(3, 1.0, 2.0);
  const double beta = 0.8;
  // E R = mu (beta, 1)
  Matrix er(3, 2);
  er.col(0) = beta * mu;
  er.col(1) = mu;
  const Matrix sigma = Matrix::Identity(6, 6);
  EXPECT_LT(build_null_problem(er, sigma, beta).r0.col(0).norm(), 1e-15);
  EXPECT_GT(build_null_problem(er, sigma, 0.3).r0.col(0).norm(), 0.1);
}

TEST(BuildNullProblem, RejectsNonSpdWithDiagnostic) {
  Matrix sigma = Matrix::Identity(4, 4);
  sigma(3, 3) = -0.5;
  try {
    build_null_problem(Matrix::Zero(2, 2), sigma, 0.0);
    FAIL() << "expected InvalidInput";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("-0.5"), std::string::npos) << e.what();
  }
}

TEST(ComputeSt, IdentitySigmaGivesColumns) {
  CounterStream rng(2);
  const Matrix r = testutil::random_matrix(4, 2, rng);
  const STPair st = compute_st(r, Matrix::Identity(8, 8), 0.0);
  EXPECT_LT((st.s - r.col(0)).norm(), 1e-14);
  EXPECT_LT((st.t - r.col(1)).norm(), 1e-14);
}

// Direct evaluation of the defining formulas with dense symmetric roots.
TEST(ComputeSt, MatchesDefiningFormulas) {
  for (int k : {1, 2, 4}) {
    CounterStream rng(100 + k);
    const Matrix sigma = random_spd(2 * k, rng);
    const Matrix r = testutil::random_matrix(k, 2, rng);
    const double beta0 = rng.normal();
    const Matrix ik = Matrix::Identity(k, k);
    Matrix b0(2, 1), a0(2, 1);
    b0 << 1.0, -beta0;
    a0 << beta0, 1.0;
    const Matrix bk = kron(b0, ik), ak = kron(a0, ik);
    const Matrix sinv = sigma.inverse();
    const Vector vr = vec(r);
    const Vector s = testutil::eig_inv_sqrt(bk.transpose() * sigma * bk) * (bk.transpose() * vr);
    const Vector t = testutil::eig_inv_sqrt(ak.transpose() * sinv * ak) * (ak.transpose() * sinv * vr);
    const STPair st = compute_st(r, sigma, beta0);
    EXPECT_LT((st.s - s).norm(), 1e-10 * (1 + s.norm())) << "k=" << k;
    EXPECT_LT((st.t - t).norm(), 1e-10 * (1 + t.norm())) << "k=" << k;
  }
}

TEST(StToR0, RoundTrips) {
  for (int k : {1, 2, 4}) {
    for (int rep = 0; rep < 100; ++rep) {
      CounterStream rng = CounterStream::derive(5, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(rep)});
      const Matrix sigma0 = random_spd(2 * k, rng);
      const Matrix r0 = testutil::random_matrix(k, 2, rng);
      const STPair st = compute_st(r0, sigma0, 0.0);
      const Matrix back = st_to_r0(st, sigma0);
      EXPECT_LT(testutil::max_rel_err(back, r0), 1e-10);
      const STPair st2 = compute_st(back, sigma0, 0.0);
      EXPECT_LT(testutil::max_rel_err(st2.s, st.s), 1e-10);
      EXPECT_LT(testutil::max_rel_err(st2.t, st.t), 1e-10);
    }
  }
}

TEST(StToR0, IdentityAndZero) {
  STPair st{Vector::LinSpaced(3, 1, 3), Vector::LinSpaced(3, -1, 1)};
  const Matrix r0 = st_to_r0(st, Matrix::Identity(6, 6));
  EXPECT_LT((r0.col(0) - st.s).norm(), 1e-15);
  EXPECT_LT((r0.col(1) - st.t).norm(), 1e-15);
  CounterStream rng(3);
  EXPECT_EQ(st_to_r0({Vector::Zero(3), Vector::Zero(3)}, random_spd(6, rng)).norm(), 0.0);
}

TEST(StToR0, NearSingularSigmaIsRejected) {
  Matrix sigma0 = Matrix::Identity(4, 4);
  sigma0(0, 0) = 1e-30;
  EXPECT_THROW(st_to_r0({Vector::Zero(2), Vector::Zero(2)}, sigma0), InvalidInput);
}

TEST(DensityR, StandardNormalAtOrigin) {
  ModelParams p{0.0, Vector::Zero(1), Matrix::Identity(2, 2)};
  EXPECT_NEAR(density_r(Matrix::Zero(1, 2), p), 1.0 / (2.0 * std::numbers::pi), 1e-15);
}

TEST(DensityR, ModeIsAtTheMean) {
  CounterStream rng(9);
  ModelParams p{0.7, Vector::LinSpaced(2, 1, 2), random_spd(4, rng)};
  const Matrix mean = mean_r0(p);
  const double at_mean = log_density_r(mean, p);
  for (int i = 0; i < 50; ++i) EXPECT_LT(log_density_r(mean + 0.1 * testutil::random_matrix(2, 2, rng), p), at_mean);
}

TEST(DensityR, IntegratesToOneForScalarInstrument) {
  CounterStream rng(11);
  ModelParams p{0.4, Vector::Constant(1, 1.5), random_spd(2, rng)};
  const Matrix m = mean_r0(p);
  const double sd0 = std::sqrt(p.sigma0(0, 0)), sd1 = std::sqrt(p.sigma0(1, 1));
  const double v = testutil::tensor_gl2(
      [&](double x, double y) {
        Matrix r(1, 2);
        r << x, y;
        return density_r(r, p);
      },
      m(0, 0) - 8 * sd0, m(0, 0) + 8 * sd0, m(0, 1) - 8 * sd1, m(0, 1) + 8 * sd1, 40);
  EXPECT_NEAR(v, 1.0, 1e-6);
}

TEST(DensityR, MultiplierIdentity) {
  for (int i = 0; i < 100; ++i) {
    CounterStream rng = CounterStream::derive(21, {static_cast<std::uint64_t>(i)});
    const int k = 1 + i % 4;
    ModelParams p{rng.normal(), testutil::random_vector(k, rng), random_spd(2 * k, rng)};
    const GroupElement g = sample_group(k, rng);
    const Matrix r0 = draw_r0(p, rng);
    const NullProblem x = act_data(g, {r0, p.sigma0, 0.0});
    const ModelParams q = act_params(g, p);
    const double chi = multiplier(g, k).chi;
    const double lhs = log_density_r(x.r0, {q.delta, q.mu, x.sigma0}) + std::log(chi);
    EXPECT_NEAR(std::exp(lhs - log_density_r(r0, p)), 1.0, 1e-10);
  }
}

TEST(DrawR0, DegenerateCovarianceReturnsMean) {
  ModelParams p{0.5, Vector::LinSpaced(2, 1, 2), 1e-20 * Matrix::Identity(4, 4)};
  CounterStream rng(4);
  EXPECT_LT((draw_r0(p, rng) - mean_r0(p)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(DrawR0, Deterministic) {
  CounterStream a(77), b(77);
  ModelParams p{0.5, Vector::LinSpaced(2, 1, 2), Matrix::Identity(4, 4)};
  EXPECT_EQ(draw_r0(p, a), draw_r0(p, b));
}

TEST(DrawR0, SampleCovarianceMatchesSigma0) {
  CounterStream rng(31);
  ModelParams p{0.2, Vector::LinSpaced(2, -1, 1), random_spd(4, rng)};
  const R0Sampler sampler(p);
  const int m = 100000;
  const Vector mean = vec(mean_r0(p));
  Matrix acc = Matrix::Zero(4, 4);
  for (int i = 0; i < m; ++i) {
    const Vector d = vec(sampler.draw(rng)) - mean;
    acc += d * d.transpose();
  }
  acc /= m;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double se = std::sqrt((p.sigma0(i, i) * p.sigma0(j, j) + p.sigma0(i, j) * p.sigma0(i, j)) / m);
      EXPECT_NEAR(acc(i, j), p.sigma0(i, j), 4 * se) << i << "," << j;
    }
}

TEST(DrawR0, NullSIsStandardNormal) {
  CounterStream rng(41);
  ModelParams p{0.0, Vector::LinSpaced(3, 1, 3), random_spd(6, rng)};
  const R0Sampler sampler(p);
  const NullGeometry g(p.sigma0);
  const int m = 20000;
  Vector sum = Vector::Zero(3), sum2 = Vector::Zero(3);
  for (int i = 0; i < m; ++i) {
    const Vector s = g.st(sampler.draw(rng)).s;
    sum += s;
    sum2 += s.cwiseProduct(s);
  }
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(sum(j) / m, 0.0, 4.0 / std::sqrt(m));
    EXPECT_NEAR(sum2(j) / m, 1.0, 4.0 * std::sqrt(2.0 / m));
  }
}

TEST(ComputeSt, SimulatedMeanOfS) {
  CounterStream rng(51);
  const Matrix sigma = random_spd(4, rng);
  const double beta = 1.1, beta0 = 0.4;
  const Vector mu = Vector::LinSpaced(2, 1, -2);
  // mean of S is (beta - beta0) C mu
  Matrix b0(2, 1);
  b0 << 1.0, -beta0;
  const Matrix bk = kron(b0, Matrix::Identity(2, 2));
  const Matrix c = testutil::eig_inv_sqrt(bk.transpose() * sigma * bk);
  const Vector expect = (beta - beta0) * c * mu;
  const Matrix f = psd_sqrt(sigma);
  Matrix er(2, 2);
  er.col(0) = beta * mu;
  er.col(1) = mu;
  const int m = 10000;
  Vector acc = Vector::Zero(2);
  for (int i = 0; i < m; ++i) {
    Vector z(4);
    for (int j = 0; j < 4; ++j) z(j) = rng.normal();
    acc += compute_st(er + unvec(f * z, 2), sigma, beta0).s;
  }
  acc /= m;
  for (int j = 0; j < 2; ++j) EXPECT_NEAR(acc(j), expect(j), 4.0 / std::sqrt(m));
}
