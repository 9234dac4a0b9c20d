#include "qksdp/certify.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

namespace qksdp {

std::string_view to_string(RdMode mode) {
  switch (mode) {
  case RdMode::Auto:
    return "auto";
  case RdMode::FullEig:
    return "full-eig";
  case RdMode::LambdaMin:
    return "lambda-min";
  }
  return "unknown";
}

std::optional<RdMode> parse_rd_mode(std::string_view name) {
  if (name == "auto")
    return RdMode::Auto;
  if (name == "full-eig")
    return RdMode::FullEig;
  if (name == "lambda-min")
    return RdMode::LambdaMin;
  return std::nullopt;
}

DualVariables recover_dual_regular(const Variety &var, const FactorPoint &P,
                                   const SparseMatrix &C) {
  try {
    const TangentMultipliers m = var.multipliers(P, euclidean_gradient(C, P.R));
    return {m.mu, m.lambda};
  } catch (const SingularProjection &e) {
    throw SingularNormalEquations(e.what());
  }
}

DualVariables recover_dual_nonregular(const BinaryVector &v, double alpha,
                                      const SparseMatrix &C, const Vector &weights,
                                      double capacity) {
  const NonRegularPoint p = NonRegularPoint::from(v);
  const Vector Cv = C * to_vector(v);
  DualVariables dual;
  dual.mu = -2.0 * Cv.cwiseProduct(p.d) -
            alpha * p.sigma * capacity * weights.cwiseProduct(p.d);
  dual.lambda = alpha;
  return dual;
}

double first_order_residual(const Matrix &R, const DualVariables &dual,
                            const SparseMatrix &C, const Vector &weights,
                            double capacity) {
  Matrix E = -2.0 * (C * R) - 2.0 * dual.mu.asDiagonal() * R;
  E.col(0) += dual.mu + dual.lambda * capacity * weights;
  const RowVector aR = weights.transpose() * R;
  E.noalias() -= (2.0 * dual.lambda) * weights * aR;
  return E.norm();
}

namespace {

double dual_y(const Matrix &R, const DualVariables &dual, const Vector &weights,
              double capacity) {
  return 0.5 * (dual.mu + dual.lambda * capacity * weights).dot(R.col(0));
}

} // namespace

Matrix dual_slack_dense(const Matrix &R, const DualVariables &dual,
                        const SparseMatrix &C, const Vector &weights,
                        double capacity) {
  const Index n = R.rows();
  Matrix S(n + 1, n + 1);
  const Vector b = 0.5 * (dual.mu + dual.lambda * capacity * weights);
  S(0, 0) = -dual_y(R, dual, weights, capacity);
  S.block(1, 0, n, 1) = b;
  S.block(0, 1, 1, n) = b.transpose();
  Matrix K = -Matrix(C);
  K.diagonal() -= dual.mu;
  K.noalias() -= dual.lambda * weights * weights.transpose();
  S.bottomRightCorner(n, n) = K;
  return S;
}

StructuredOperator dual_slack_operator(const Matrix &R, const DualVariables &dual,
                                       std::shared_ptr<const SparseMatrix> C,
                                       const Vector &weights, double capacity) {
  const Index n = R.rows();
  StructuredOperator op(n + 1);
  op.set_sparse(std::move(C), -1.0, 1);
  Vector D(n + 1);
  D(0) = -dual_y(R, dual, weights, capacity);
  D.tail(n) = -dual.mu;
  op.set_diagonal(std::move(D));
  Vector ahat = Vector::Zero(n + 1);
  ahat.tail(n) = weights;
  if (dual.lambda != 0.0)
    op.add_low_rank(-dual.lambda, ahat);
  Vector e0 = Vector::Zero(n + 1);
  e0(0) = 1.0;
  Vector bhat = Vector::Zero(n + 1);
  bhat.tail(n) = 0.5 * (dual.mu + dual.lambda * capacity * weights);
  op.add_low_rank(2.0, std::move(e0), std::move(bhat));
  return op;
}

double dual_slack_norm(const Matrix &R, const DualVariables &dual,
                       const SparseMatrix &C, const Vector &weights,
                       double capacity) {
  const double y = dual_y(R, dual, weights, capacity);
  const Vector b = 0.5 * (dual.mu + dual.lambda * capacity * weights);
  const double lam = dual.lambda;
  const double a2 = weights.squaredNorm();
  const Vector Cdiag = C.diagonal();
  const double aCa = weights.dot(C * weights);
  double K2 = C.squaredNorm() + dual.mu.squaredNorm() + lam * lam * a2 * a2 +
              2.0 * Cdiag.dot(dual.mu) + 2.0 * lam * aCa +
              2.0 * lam * dual.mu.dot(weights.cwiseAbs2());
  K2 = std::max(K2, 0.0);
  return std::sqrt(y * y + 2.0 * b.squaredNorm() + K2);
}

double complementarity_residual(const Matrix &R, const DualVariables &dual,
                                std::shared_ptr<const SparseMatrix> C,
                                const Vector &weights, double capacity) {
  const StructuredOperator op =
      dual_slack_operator(R, dual, std::move(C), weights, capacity);
  const Index n = R.rows();
  double sq = 0.0;
  Vector z(n + 1), Sz;
  for (Index j = 0; j < R.cols(); ++j) {
    z(0) = j == 0 ? 1.0 : 0.0;
    z.tail(n) = R.col(j);
    op.apply(z, Sz);
    sq += Sz.squaredNorm();
  }
  return std::sqrt(sq);
}

KktCertificate kkt_residues(const Matrix &R, const DualVariables &dual,
                            std::shared_ptr<const SparseMatrix> C,
                            const Vector &weights, double capacity,
                            const CertifyOptions &opts) {
  const Index n = R.rows();
  KktCertificate cert;
  cert.mu = dual.mu;
  cert.lambda = dual.lambda;
  cert.obj = objective(*C, R);
  cert.y = dual_y(R, dual, weights, capacity);

  const Vector diag_res = R.rowwise().squaredNorm() - R.col(0);
  const RowVector aR = weights.transpose() * R;
  double h = aR.squaredNorm() - capacity * aR(0);
  if (opts.knapsack == KnapsackTerm::Inequality)
    h = std::max(0.0, h);
  else if (opts.knapsack == KnapsackTerm::Dropped)
    h = 0.0;
  cert.Rp = 0.5 * std::sqrt(diag_res.squaredNorm() + h * h);

  cert.pdgap =
      std::abs(cert.obj - cert.y) / (1.0 + std::abs(cert.obj) + std::abs(cert.y));

  RdMode mode = opts.rd_mode;
  if (mode == RdMode::Auto)
    mode = n + 1 <= opts.full_eig_limit ? RdMode::FullEig : RdMode::LambdaMin;
  cert.rd_mode = mode;
  if (std::max(cert.Rp, cert.pdgap) >= opts.skip_rd_above) {
    cert.rd_computed = false;
    return cert;
  }
  if (mode == RdMode::FullEig) {
    const Matrix S = dual_slack_dense(R, dual, *C, weights, capacity);
    Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
    const Vector &ev = es.eigenvalues();
    double neg = 0.0;
    for (Index i = 0; i < ev.size(); ++i)
      if (ev(i) < 0.0)
        neg += ev(i) * ev(i);
    cert.slack_norm = S.norm();
    cert.slack_min_eig = ev(0);
    cert.Rd = std::sqrt(neg) / (1.0 + cert.slack_norm);
    cert.rd_converged = es.info() == Eigen::Success;
  } else {
    cert.slack_norm = dual_slack_norm(R, dual, *C, weights, capacity);
    StructuredOperator op = dual_slack_operator(R, dual, C, weights, capacity);
    const double s = 1.0 / (1.0 + cert.slack_norm);
    op.set_scale(s);
    const EigenResult res = smallest_eigenpair(op, opts.eig);
    const double lmin = res.pairs.front().value;
    cert.slack_min_eig = lmin / s;
    cert.Rd = std::max(0.0, -lmin);
    cert.rd_converged = res.converged;
  }
  return cert;
}

KktCertificate kkt_residues(const Matrix &R, const DualVariables &dual,
                            const QkpInstance &inst, const CertifyOptions &opts) {
  return kkt_residues(R, dual, std::make_shared<const SparseMatrix>(inst.profit),
                      inst.weights, inst.capacity, opts);
}

} // namespace qksdp
