#include <random>
#include <set>

#include <gtest/gtest.h>

#include "faemb/coding.h"
#include "test_util.h"

namespace faemb {
namespace {

using testutil::Gaussian;
using testutil::GaussianVector;

Matrix Row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

TEST(CodingModelTest, ValidatesAnchors) {
  EXPECT_THROW(CodingModel::Create(Matrix::Ones(3, 1), 0.1, Variant::kFaemb), Error);
  EXPECT_THROW(CodingModel::Create(Matrix::Ones(3, 2), 0.1, Variant::kFaemb), Error);
  EXPECT_THROW(CodingModel::Create(Row({0, 1}), -1, Variant::kFaemb), Error);
  EXPECT_EQ(ParseVariant("faemb"), Variant::kFaemb);
  EXPECT_THROW(ParseVariant("vlad"), Error);
}

TEST(SolverParamsTest, RejectsBadValues) {
  SolverParams p;
  EXPECT_NO_THROW(p.Validate());
  p.newton_step = 1.5;
  EXPECT_THROW(p.Validate(), Error);
  p = SolverParams{};
  p.newton_tol = 0;
  EXPECT_THROW(p.Validate(), Error);
}

TEST(KMeansTest, DistinctPointsBecomeCentroids) {
  std::mt19937_64 rng(1);
  const Matrix pts = Gaussian(3, 6, rng);
  const Matrix c = KMeansInit(pts, 6, 42);
  std::set<std::vector<double>> want, got;
  for (int j = 0; j < 6; ++j) {
    want.insert({pts(0, j), pts(1, j), pts(2, j)});
    got.insert({c(0, j), c(1, j), c(2, j)});
  }
  EXPECT_EQ(want, got);
}

TEST(KMeansTest, SeparatedBlobsAndDeterminism) {
  std::mt19937_64 rng(2);
  Matrix pts(2, 400);
  const Vector m0 = (Vector(2) << -3, 1).finished(), m1 = (Vector(2) << 4, -2).finished();
  const Matrix noise = Gaussian(2, 400, rng, 0.01);
  for (int i = 0; i < 400; ++i) pts.col(i) = (i % 2 ? m1 : m0) + noise.col(i);
  const Matrix c = KMeansInit(pts, 2, 9);
  // Sample means of the generated blobs are the oracle.
  Vector s0 = Vector::Zero(2), s1 = Vector::Zero(2);
  for (int i = 0; i < 400; ++i) (i % 2 ? s1 : s0) += pts.col(i);
  s0 /= 200;
  s1 /= 200;
  const bool order = (c.col(0) - s0).norm() < (c.col(1) - s0).norm();
  EXPECT_LT((c.col(order ? 0 : 1) - s0).norm(), 0.1);
  EXPECT_LT((c.col(order ? 1 : 0) - s1).norm(), 0.1);
  EXPECT_EQ(c, KMeansInit(pts, 2, 9));
  EXPECT_THROW(KMeansInit(pts.leftCols(1), 2, 9), Error);
}

// F-FAemb coefficients minimize 1/2 g^T (C^T C + mu a I) g - x^T C g on the
// affine plane; the null-space QP solve is an independent oracle.
Vector FfaembOracle(const Vector& x, const Matrix& c, double mu) {
  double a = 0;
  for (Eigen::Index j = 0; j < c.cols(); ++j) a += testutil::L1CubedLoop(x, c, j);
  Matrix h = c.transpose() * c;
  h.diagonal().array() += mu * a;
  return testutil::EqualityQp(h, -c.transpose() * x);
}

TEST(FfaembGammaTest, LargeMuGivesUniformCoefficients) {
  std::mt19937_64 rng(3);
  const Matrix c = Gaussian(4, 5, rng);
  const auto model = CodingModel::Create(c, 1e6, Variant::kFfaemb);
  const Vector g = FfaembGamma(GaussianVector(4, rng), model).gamma;
  EXPECT_LT((g - Vector::Constant(5, 0.2)).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(FfaembGammaTest, NearInterpolationLimit) {
  const auto model = CodingModel::Create(Row({0, 1}), 1e-8, Variant::kFfaemb);
  const Vector g = FfaembGamma(Vector::Constant(1, 0.3), model).gamma;
  EXPECT_NEAR(g[0], 0.7, 1e-4);
  EXPECT_NEAR(g[1], 0.3, 1e-4);
}

TEST(FfaembGammaTest, MatchesQpOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const double mu = std::vector<double>{0, 1e-3, 1e-2, 1}[trial % 4];
    // Without the penalty the closed form needs C^T C invertible, so n <= d.
    const int d = testutil::UniformInt(mu == 0 ? 2 : 1, 10, rng);
    const int n = testutil::UniformInt(2, mu == 0 ? std::min(d, 6) : 6, rng);
    const Matrix c = Gaussian(d, n, rng, 0.5);
    const Vector x = GaussianVector(d, rng, 0.5);
    const auto model = CodingModel::Create(c, mu, Variant::kFfaemb);
    const Vector g = FfaembGamma(x, model).gamma;
    EXPECT_LT((g - FfaembOracle(x, c, mu)).cwiseAbs().maxCoeff(), 1e-6) << "trial " << trial;
    EXPECT_NEAR(g.sum(), 1.0, 1e-10);
  }
}

TEST(FfaembGammaTest, SingularSystemAdvisesPositiveMu) {
  // Collinear anchors through the origin make C^T C singular.
  Matrix c(2, 3);
  c << 1, 2, 3, 1, 2, 3;
  const auto model = CodingModel::Create(c, 0.0, Variant::kFfaemb);
  try {
    FfaembGamma(Vector::Ones(2), model);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumerical);
    EXPECT_NE(std::string(e.what()).find("mu > 0"), std::string::npos);
  }
}

TEST(FfaembGammaTest, BeatsRandomFeasiblePerturbations) {
  std::mt19937_64 rng(5);
  const Matrix z = testutil::SumZeroBasis(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix c = Gaussian(6, 5, rng);
    const Vector x = GaussianVector(6, rng);
    const auto model = CodingModel::Create(c, 1e-2, Variant::kFfaemb);
    const Vector g = FfaembGamma(x, model).gamma;
    const double best = SampleObjective(x, g, model);
    std::uniform_real_distribution<double> radius(0.0, 0.1);
    for (int p = 0; p < 1000; ++p) {
      Vector dir = z * GaussianVector(4, rng);
      dir *= radius(rng) / dir.norm();
      EXPECT_NEAR(dir.sum(), 0.0, 1e-12);
      EXPECT_LE(best, SampleObjective(x, g + dir, model) + 1e-12);
    }
  }
}

TEST(FaembGammaTest, ZeroMuMatchesLeastSquaresOracle) {
  std::mt19937_64 rng(6);
  SolverParams p;
  p.newton_tol = 1e-18;
  p.newton_max_iters = 2000;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = testutil::UniformInt(2, 10, rng);
    const int n = testutil::UniformInt(2, std::min(d, 6), rng);
    const Matrix c = Gaussian(d, n, rng);
    const Vector x = GaussianVector(d, rng);
    const auto model = CodingModel::Create(c, 0.0, Variant::kFaemb);
    const Coefficients r = FaembGamma(x, model, p);
    const Vector oracle = testutil::EqualityQp(c.transpose() * c, -c.transpose() * x);
    EXPECT_LT((r.gamma - oracle).cwiseAbs().maxCoeff(), 1e-6) << "trial " << trial;
    EXPECT_NEAR(r.gamma.sum(), 1.0, 1e-8);
  }
}

TEST(FaembGammaTest, DominatesUniformAndOneHotCandidates) {
  std::mt19937_64 rng(7);
  SolverParams p;
  p.newton_tol = 1e-14;
  p.newton_max_iters = 5000;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = testutil::UniformInt(2, 10, rng);
    const int n = testutil::UniformInt(2, 6, rng);
    const double mu = std::vector<double>{1e-3, 1e-2, 1e-1, 1}[trial % 4];
    const Matrix c = Gaussian(d, n, rng, 1.0 / std::sqrt(d));
    const Vector x = GaussianVector(d, rng, 1.0 / std::sqrt(d));
    const auto model = CodingModel::Create(c, mu, Variant::kFaemb);
    const Coefficients r = FaembGamma(x, model, p);
    EXPECT_NEAR(r.gamma.sum(), 1.0, 1e-8);
    EXPECT_TRUE(r.info.converged);
    EXPECT_LE(r.info.stationarity, 1e-5) << "trial " << trial;
    const double q = SampleObjective(x, r.gamma, model);
    EXPECT_LE(q, SampleObjective(x, Vector::Constant(n, 1.0 / n), model) + 1e-12);
    for (int j = 0; j < n; ++j) {
      EXPECT_LE(q, SampleObjective(x, Vector::Unit(n, j), model) + 1e-12);
    }
    EXPECT_NEAR(SampleObjective(x, r.gamma, model),
                testutil::FaembObjectiveLoop(x, r.gamma, c, mu, false), 1e-12);
  }
}

TEST(FaembGammaTest, DefaultStoppingWithinIterationCap) {
  std::mt19937_64 rng(8);
  const double s = 1.0 / std::sqrt(45.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto model = CodingModel::Create(Gaussian(45, 8, rng, s), 1e-2, Variant::kFaemb);
    const Coefficients r = FaembGamma(GaussianVector(45, rng, s), model, SolverParams{});
    EXPECT_TRUE(r.info.converged);
    EXPECT_LE(r.info.decrement_sq / 2, 1e-6);
    EXPECT_LE(r.info.iterations, 200);
  }
}

TEST(FaembGammaTest, WarmStartMustBeFeasible) {
  const auto model = CodingModel::Create(Row({0, 1}), 1e-2, Variant::kFaemb);
  const Vector bad = Vector::Ones(2);
  EXPECT_THROW(FaembGamma(Vector::Constant(1, 0.2), model, SolverParams{}, &bad), Error);
}

TEST(ObjectiveTest, HandExamples) {
  const Matrix x = Matrix::Constant(1, 1, 0.5);
  const Matrix g = Matrix::Constant(2, 1, 0.5);
  EXPECT_DOUBLE_EQ(Objective(x, g, CodingModel::Create(Row({0, 1}), 1, Variant::kFaemb)), 0.0625);
  EXPECT_DOUBLE_EQ(Objective(x, g, CodingModel::Create(Row({0, 1}), 1, Variant::kFfaemb)), 0.0625);
  Matrix bad = g;
  bad(0, 0) = 0.9;
  EXPECT_THROW(Objective(x, bad, CodingModel::Create(Row({0, 1}), 1, Variant::kFaemb)), Error);
}

TEST(ObjectiveTest, PerfectReconstructionWithoutPenaltyIsZero) {
  std::mt19937_64 rng(9);
  const Matrix c = Gaussian(4, 3, rng);
  Matrix g(3, 10);
  for (int i = 0; i < 10; ++i) g.col(i) = testutil::FeasibleGamma(3, rng);
  const auto model = CodingModel::Create(c, 0.0, Variant::kFaemb);
  EXPECT_NEAR(Objective(c * g, g, model), 0.0, 1e-28);
}

TEST(GradientTest, GammaGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = testutil::UniformInt(2, 8, rng), n = testutil::UniformInt(2, 6, rng);
    const Matrix c = Gaussian(d, n, rng);
    const Vector x = GaussianVector(d, rng);
    Vector g = testutil::FeasibleGamma(n, rng);
    if (g.cwiseAbs().minCoeff() < 1e-3) continue;
    for (Variant v : {Variant::kFaemb, Variant::kFfaemb}) {
      const auto model = CodingModel::Create(c, 0.3, v);
      const Vector grad = SampleObjectiveGradient(x, g, model);
      const double h = 1e-6;
      for (int j = 0; j < n; ++j) {
        Vector gp = g, gm = g;
        gp[j] += h;
        gm[j] -= h;
        const double fd = (SampleObjective(x, gp, model) - SampleObjective(x, gm, model)) / (2 * h);
        EXPECT_NEAR(grad[j], fd, 1e-5 * std::max(1.0, std::abs(fd)));
      }
    }
    ++checked;
  }
  EXPECT_GT(checked, 40);
}

TEST(GradientTest, AnchorGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 3, n = 3, m = 7;
    const Matrix c = Gaussian(d, n, rng);
    const Matrix x = Gaussian(d, m, rng);
    Matrix g(n, m);
    for (int i = 0; i < m; ++i) g.col(i) = testutil::FeasibleGamma(n, rng);
    for (Variant v : {Variant::kFaemb, Variant::kFfaemb}) {
      const auto model = CodingModel::Create(c, 0.2, v);
      const Matrix grad = ObjectiveGradientAnchors(x, g, c, model);
      const double h = 1e-6;
      for (int j = 0; j < n; ++j) {
        for (int k = 0; k < d; ++k) {
          Matrix cp = c, cm = c;
          cp(k, j) += h;
          cm(k, j) -= h;
          const double fd = (ObjectiveWithAnchors(x, g, cp, model) -
                             ObjectiveWithAnchors(x, g, cm, model)) / (2 * h);
          EXPECT_NEAR(grad(k, j), fd, 1e-5 * std::max(1.0, std::abs(fd)));
        }
      }
    }
  }
}

TEST(UpdateAnchorsTest, ZeroMuGivesNormalEquationSolution) {
  std::mt19937_64 rng(12);
  const int d = 4, n = 3, m = 50;
  const Matrix x = Gaussian(d, m, rng);
  Matrix g(n, m);
  for (int i = 0; i < m; ++i) g.col(i) = testutil::FeasibleGamma(n, rng);
  const Matrix c0 = Gaussian(d, n, rng);
  const auto model = CodingModel::Create(c0, 0.0, Variant::kFaemb);
  const Matrix c = UpdateAnchors(x, g, c0, model);
  const Matrix oracle = x * g.transpose() * (g * g.transpose()).inverse();
  EXPECT_LT((c - oracle).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(UpdateAnchorsTest, NonIncreasingAndLocallyStationary) {
  std::mt19937_64 rng(13);
  for (Variant v : {Variant::kFaemb, Variant::kFfaemb}) {
    const int d = 3, n = 4, m = 60;
    const Matrix x = Gaussian(d, m, rng);
    const Matrix c0 = Gaussian(d, n, rng);
    const auto model = CodingModel::Create(c0, 0.05, v);
    const Matrix g = ComputeGammas(x, model, SolverParams{}, 1);
    const Matrix c = UpdateAnchors(x, g, c0, model);
    const double q0 = ObjectiveWithAnchors(x, g, c0, model);
    const double q = ObjectiveWithAnchors(x, g, c, model);
    EXPECT_LE(q, q0 + 1e-12);
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < d; ++k) {
        for (double s : {-1e-3, 1e-3}) {
          Matrix cp = c;
          cp(k, j) += s;
          EXPECT_GE(ObjectiveWithAnchors(x, g, cp, model), q - 1e-6);
        }
      }
    }
  }
}

Matrix BlobData(int d, int m, std::mt19937_64& rng) {
  const Matrix centers = Gaussian(d, 6, rng);
  Matrix x = Gaussian(d, m, rng, 0.3);
  for (int i = 0; i < m; ++i) x.col(i) += centers.col(i % 6);
  return x;
}

TEST(TrainCodingTest, TraceIsMonotoneForBothVariants) {
  std::mt19937_64 rng(14);
  const Matrix x = BlobData(5, 600, rng);
  for (Variant v : {Variant::kFaemb, Variant::kFfaemb}) {
    TrainingOptions opt;
    opt.num_anchors = 4;
    opt.variant = v;
    opt.mu = 1e-2;
    opt.solver.max_outer_iters = 10;
    const auto r = TrainCoding(x, opt);
    ASSERT_GE(r.trace.size(), 2u);
    for (std::size_t t = 1; t < r.trace.size(); ++t) {
      EXPECT_LE(r.trace[t], r.trace[t - 1] + 1e-9) << VariantName(v) << " step " << t;
    }
    for (Eigen::Index i = 0; i < r.gammas.cols(); ++i) {
      EXPECT_NEAR(r.gammas.col(i).sum(), 1.0, 1e-8);
    }
  }
}

TEST(TrainCodingTest, ZeroIterationsKeepsKMeansAnchors) {
  std::mt19937_64 rng(15);
  const Matrix x = BlobData(3, 100, rng);
  TrainingOptions opt;
  opt.num_anchors = 5;
  opt.seed = 77;
  opt.solver.max_outer_iters = 0;
  const auto r = TrainCoding(x, opt);
  EXPECT_EQ(r.model.anchors(), KMeansInit(x, 5, 77));
  EXPECT_EQ(r.trace.size(), 1u);
  const auto model = CodingModel::Create(KMeansInit(x, 5, 77), opt.mu, opt.variant);
  EXPECT_EQ(r.gammas, ComputeGammas(x, model, opt.solver, 1));
}

TEST(TrainCodingTest, DeterministicAcrossThreadCounts) {
  std::mt19937_64 rng(16);
  const Matrix x = BlobData(4, 300, rng);
  TrainingOptions opt;
  opt.num_anchors = 3;
  opt.variant = Variant::kFaemb;
  opt.solver.max_outer_iters = 3;
  const auto a = TrainCoding(x, opt);
  opt.threads = 3;
  const auto b = TrainCoding(x, opt);
  EXPECT_EQ(a.model.anchors(), b.model.anchors());
  EXPECT_EQ(a.trace, b.trace);
}

TEST(TrainCodingTest, RejectsTooFewPoints) {
  TrainingOptions opt;
  opt.num_anchors = 8;
  EXPECT_THROW(TrainCoding(Matrix::Ones(2, 5), opt), Error);
}

}  // namespace
}  // namespace faemb
