#include <gtest/gtest.h>

#include <random>

#include <Eigen/Eigenvalues>

#include "qksdp/certify.hpp"
#include "qksdp/escape.hpp"
#include "qksdp/oracle.hpp"
#include "support/support.hpp"

using namespace qksdp;
namespace support = qksdp::testing;

namespace {

struct Sample {
  QkpInstance inst; // scaled
  FactorPoint P;
};

Sample random_sample(std::mt19937_64 &rng, Index n, Index r, bool mixed) {
  Sample s{scale(support::random_small_instance(rng, n, mixed)), {}};
  const Variety var(s.inst, VarietyKind::Knapsack);
  s.P = support::random_feasible_point(var, r, rng());
  return s;
}

// Least-squares duals of the first-order system, assembled column by column.
DualVariables dense_dual_least_squares(const Matrix &R, const Matrix &C, const Vector &a,
                                       double tau) {
  const Index n = R.rows(), r = R.cols();
  Matrix J(n * r, n + 1);
  for (Index i = 0; i < n; ++i) {
    Matrix E = Matrix::Zero(n, r);
    E.row(i) = -2.0 * R.row(i);
    E(i, 0) += 1.0;
    J.col(i) = E.reshaped();
  }
  Matrix E = -2.0 * a * (a.transpose() * R);
  E.col(0) += tau * a;
  J.col(n) = E.reshaped();
  const Vector rhs = (2.0 * C * R).reshaped();
  const Vector sol = J.colPivHouseholderQr().solve(rhs);
  return {sol.head(n), sol(n)};
}

} // namespace

TEST(DualSlack, ZeroDualsLeaveAGap) {
  std::mt19937_64 rng(1);
  const Sample s = random_sample(rng, 8, 4, false);
  const DualVariables zero{Vector::Zero(8), 0.0};
  const KktCertificate c = kkt_residues(s.P.R, zero, s.inst);
  EXPECT_EQ(c.y, 0.0);
  EXPECT_GT(c.pdgap, 0.0);
  EXPECT_LE(c.Rp, 1e-12);
}

TEST(DualSlack, ValueOfYMatchesDefinition) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Sample s = random_sample(rng, 7, 3, trial % 2);
    const DualVariables dual{support::gaussian_matrix(rng, 7, 1), 0.3 * trial - 2.0};
    const KktCertificate c = kkt_residues(s.P.R, dual, s.inst);
    const Vector b = 0.5 * (dual.mu + dual.lambda * s.inst.capacity * s.inst.weights);
    EXPECT_NEAR(c.y, b.dot(s.P.R.col(0)), 1e-13 * (1.0 + std::abs(c.y)));
    const Matrix S = dual_slack_dense(s.P.R, dual, s.inst.profit, s.inst.weights,
                                      s.inst.capacity);
    EXPECT_NEAR(S(0, 0), -c.y, 1e-15);
  }
}

TEST(DualSlack, OperatorAndNormMatchDense) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 3 + trial % 10;
    const Sample s = random_sample(rng, n, 3, trial % 2);
    const DualVariables dual{support::gaussian_matrix(rng, n, 1), trial % 3 ? -1.7 : 0.0};
    const Matrix S = dual_slack_dense(s.P.R, dual, s.inst.profit, s.inst.weights,
                                      s.inst.capacity);
    auto C = std::make_shared<const SparseMatrix>(s.inst.profit);
    const Matrix Sop =
        dual_slack_operator(s.P.R, dual, C, s.inst.weights, s.inst.capacity).to_dense();
    EXPECT_LT((Sop - S).norm(), 1e-12 * S.norm());
    EXPECT_NEAR(dual_slack_norm(s.P.R, dual, s.inst.profit, s.inst.weights, s.inst.capacity),
                S.norm(), 1e-10 * S.norm());
  }
}

TEST(DualRecovery, RegularMatchesDenseLeastSquares) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 4 + trial % 8;
    const Sample s = random_sample(rng, n, 4, trial % 2);
    const Variety var(s.inst, VarietyKind::Knapsack);
    const DualVariables d = recover_dual_regular(var, s.P, s.inst.profit);
    const DualVariables ref = dense_dual_least_squares(s.P.R, Matrix(s.inst.profit),
                                                       s.inst.weights, s.inst.capacity);
    const double scale_ = 1.0 + ref.mu.norm() + std::abs(ref.lambda);
    EXPECT_LT((d.mu - ref.mu).norm(), 1e-10 * scale_) << "trial " << trial;
    EXPECT_NEAR(d.lambda, ref.lambda, 1e-10 * scale_);
  }
}

TEST(DualRecovery, PerturbationIncreasesResidual) {
  std::mt19937_64 rng(5);
  const Sample s = random_sample(rng, 9, 4, true);
  const Variety var(s.inst, VarietyKind::Knapsack);
  const DualVariables d = recover_dual_regular(var, s.P, s.inst.profit);
  const auto res = [&](const DualVariables &x) {
    return first_order_residual(s.P.R, x, s.inst.profit, s.inst.weights, s.inst.capacity);
  };
  const double base = res(d);
  for (int k = 0; k < 50; ++k) {
    DualVariables p = d;
    p.mu += 1e-3 * support::gaussian_matrix(rng, 9, 1);
    p.lambda += 1e-3 * (static_cast<double>(rng() % 200) / 100.0 - 1.0);
    EXPECT_GE(res(p), base - 1e-12);
  }
}

TEST(DualRecovery, ComplementarityMatchesFirstOrderResidual) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Sample s = random_sample(rng, 6 + trial % 5, 3, trial % 2);
    const Index n = s.inst.size();
    const DualVariables dual{support::gaussian_matrix(rng, n, 1), -0.5 + 0.1 * trial};
    auto C = std::make_shared<const SparseMatrix>(s.inst.profit);
    const double comp =
        complementarity_residual(s.P.R, dual, C, s.inst.weights, s.inst.capacity);
    const double fo =
        first_order_residual(s.P.R, dual, s.inst.profit, s.inst.weights, s.inst.capacity);
    // Top row of S [e1 R']' is (0, b'R_2, ..., b'R_r); the rest is half the first-order system.
    const Matrix S = dual_slack_dense(s.P.R, dual, s.inst.profit, s.inst.weights,
                                      s.inst.capacity);
    Matrix Z(n + 1, s.P.R.cols());
    Z.setZero();
    Z(0, 0) = 1.0;
    Z.bottomRows(n) = s.P.R;
    EXPECT_NEAR(comp, (S * Z).norm(), 1e-12 * (1.0 + comp));
    const Vector b = 0.5 * (dual.mu + dual.lambda * s.inst.capacity * s.inst.weights);
    const double top = (b.transpose() * s.P.R.rightCols(s.P.R.cols() - 1)).squaredNorm();
    EXPECT_NEAR(comp, std::sqrt(0.25 * fo * fo + top), 1e-12 * (1.0 + comp));
  }
}

TEST(DualRecovery, NonRegularFormula) {
  std::mt19937_64 rng(7);
  const QkpInstance s = scale(support::random_small_instance(rng, 6, true));
  const BinaryVector v{1, 0, 1, 1, 0, 0};
  const double alpha = 0.75;
  const DualVariables d = recover_dual_nonregular(v, alpha, s.profit, s.weights, s.capacity);
  const Matrix C(s.profit);
  for (Index i = 0; i < 6; ++i) {
    double Cv = 0.0;
    for (Index j = 0; j < 6; ++j)
      Cv += C(i, j) * v[static_cast<std::size_t>(j)];
    const double di = v[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
    EXPECT_NEAR(d.mu(i), -2.0 * Cv * di - alpha * s.capacity * s.weights(i) * di, 1e-12);
  }
  EXPECT_EQ(d.lambda, alpha);
  // At v = 0 the sign flips with sigma = -1.
  const DualVariables z =
      recover_dual_nonregular(BinaryVector(6, 0), alpha, s.profit, s.weights, s.capacity);
  EXPECT_LT((z.mu + alpha * s.capacity * s.weights).norm(), 1e-14);
  EXPECT_LT(first_order_residual(Matrix::Zero(6, 3), z, s.profit, s.weights, s.capacity), 1e-14);
}

TEST(Residues, MatchDenseLiftedOracle) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 3 + trial % 12;
    const Sample s = random_sample(rng, n, 4, trial % 2);
    const Variety var(s.inst, VarietyKind::Knapsack);
    DualVariables dual = recover_dual_regular(var, s.P, s.inst.profit);
    if (trial % 3 == 0)
      dual.mu += 0.1 * support::gaussian_matrix(rng, n, 1);
    CertifyOptions opts;
    opts.rd_mode = RdMode::FullEig;
    const KktCertificate c = kkt_residues(s.P.R, dual, s.inst, opts);
    const DenseKkt ref = dense_kkt(s.P.R, dual.mu, dual.lambda, Matrix(s.inst.profit),
                                   s.inst.weights, s.inst.capacity);
    EXPECT_NEAR(c.Rp, ref.Rp, 1e-12);
    EXPECT_NEAR(c.Rd, ref.Rd, 1e-10);
    EXPECT_NEAR(c.pdgap, ref.pdgap, 1e-12);
    EXPECT_NEAR(c.obj, ref.obj, 1e-10 * (1.0 + std::abs(ref.obj)));
    EXPECT_NEAR(c.slack_min_eig, ref.min_eig, 1e-9 * (1.0 + c.slack_norm));
  }
}

TEST(Residues, RpMatchesGeometryResidual) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const QkpInstance s = scale(support::random_small_instance(rng, 7, false));
    const Variety var(s, VarietyKind::Knapsack);
    const FactorPoint P = var.make_point(support::gaussian_matrix(rng, 7, 3));
    const ConstraintResidual res = var.residual(P);
    const DualVariables dual{Vector::Zero(7), 0.0};
    const double expect =
        0.5 * std::sqrt(res.diag.squaredNorm() + res.knapsack * res.knapsack);
    EXPECT_NEAR(kkt_residues(P.R, dual, s).Rp, expect, 1e-13 * (1.0 + expect));
    CertifyOptions drop;
    drop.knapsack = KnapsackTerm::Dropped;
    EXPECT_NEAR(kkt_residues(P.R, dual, s, drop).Rp, 0.5 * res.diag.norm(),
                1e-13 * (1.0 + expect));
    CertifyOptions ineq;
    ineq.knapsack = KnapsackTerm::Inequality;
    const double h = std::max(0.0, res.knapsack);
    EXPECT_NEAR(kkt_residues(P.R, dual, s, ineq).Rp,
                0.5 * std::sqrt(res.diag.squaredNorm() + h * h), 1e-13 * (1.0 + expect));
  }
}

TEST(Residues, LambdaMinBracketsFullEig) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 5 + trial;
    const Sample s = random_sample(rng, n, 4, trial % 2);
    const Variety var(s.inst, VarietyKind::Knapsack);
    const DualVariables dual = recover_dual_regular(var, s.P, s.inst.profit);
    CertifyOptions full, lmin;
    full.rd_mode = RdMode::FullEig;
    lmin.rd_mode = RdMode::LambdaMin;
    lmin.eig.dense_threshold = trial % 2 ? 0 : 400;
    const KktCertificate a = kkt_residues(s.P.R, dual, s.inst, full);
    const KktCertificate b = kkt_residues(s.P.R, dual, s.inst, lmin);
    EXPECT_EQ(b.rd_mode, RdMode::LambdaMin);
    EXPECT_TRUE(b.rd_converged);
    EXPECT_NEAR(a.slack_norm, b.slack_norm, 1e-10 * a.slack_norm);
    const double tol = 1e-8;
    EXPECT_LE(b.Rd, a.Rd + tol);
    EXPECT_LE(a.Rd, std::sqrt(static_cast<double>(n + 1)) * b.Rd + tol);
    EXPECT_NEAR(a.slack_min_eig, b.slack_min_eig, tol * (1.0 + a.slack_norm));
  }
}

TEST(Residues, AutoModeSwitchesOnSize) {
  std::mt19937_64 rng(11);
  const Sample s = random_sample(rng, 10, 3, false);
  const DualVariables dual{Vector::Zero(10), 0.0};
  CertifyOptions opts;
  opts.full_eig_limit = 11;
  EXPECT_EQ(kkt_residues(s.P.R, dual, s.inst, opts).rd_mode, RdMode::FullEig);
  opts.full_eig_limit = 10;
  EXPECT_EQ(kkt_residues(s.P.R, dual, s.inst, opts).rd_mode, RdMode::LambdaMin);
}

TEST(Residues, SkipsEigenWorkWhenPrimalFails) {
  std::mt19937_64 rng(12);
  const QkpInstance s = scale(support::random_small_instance(rng, 6, false));
  const DualVariables dual{Vector::Zero(6), 0.0};
  CertifyOptions opts;
  opts.skip_rd_above = 1e-6;
  const KktCertificate c = kkt_residues(Matrix::Constant(6, 3, 0.9), dual, s, opts);
  EXPECT_FALSE(c.rd_computed);
  EXPECT_GT(c.Rp, 1e-6);
}

TEST(Residues, ConstructionOptimumCertifies) {
  GeneratorSpec spec;
  spec.family = InstanceFamily::NonregularConstruction;
  spec.n = 20;
  spec.seed = 4;
  const QkpInstance s = scale(generate(spec));
  const BinaryVector v2 = support::odd_indicator(20);
  const EscapeOutcome out = solve_escape_sdp(EscapeProblem(s, v2, 3));
  ASSERT_EQ(out.kind, EscapeKind::StationaryCertificate);
  const DualVariables dual =
      recover_dual_nonregular(v2, out.dual_alpha, s.profit, s.weights, s.capacity);
  const Matrix R = NonRegularPoint::from(v2).factor(3);
  CertifyOptions opts;
  opts.rd_mode = RdMode::FullEig;
  const KktCertificate c = kkt_residues(R, dual, s, opts);
  EXPECT_LE(c.Rp, 1e-12);
  EXPECT_LE(c.pdgap, 1e-12);
  EXPECT_LE(c.Rd, 1e-7);
  EXPECT_NEAR(-c.obj, qkp_value(s, v2), 1e-9 * qkp_value(s, v2));
}

TEST(RdModeNames, RoundTrip) {
  for (RdMode m : {RdMode::Auto, RdMode::FullEig, RdMode::LambdaMin})
    EXPECT_EQ(parse_rd_mode(to_string(m)), m);
  EXPECT_FALSE(parse_rd_mode("bogus").has_value());
}
