#include "qksdp/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace qksdp {

ExhaustiveResult exhaustive_qkp(const QkpInstance &inst) {
  const Index n = inst.size();
  if (n > kOracleMaxItems)
    throw TooLarge("exhaustive oracle limited to n <= " +
                   std::to_string(kOracleMaxItems) + ", got " + std::to_string(n));
  const Matrix C = Matrix(inst.profit);
  const Vector &a = inst.weights;
  ExhaustiveResult best;
  best.x.assign(static_cast<std::size_t>(n), 0);
  best.value = 0.0;
  best.feasible = 1;

  // Gray-code walk: one item flips per step, value and weight are updated
  // incrementally through Cx.
  BinaryVector x(static_cast<std::size_t>(n), 0);
  Vector Cx = Vector::Zero(n);
  double value = 0.0, weight = 0.0;
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t k = 1; k < total; ++k) {
    const Index i = static_cast<Index>(__builtin_ctzll(k));
    const auto si = static_cast<std::size_t>(i);
    if (x[si]) {
      x[si] = 0;
      value -= 2.0 * Cx(i) - C(i, i);
      weight -= a(i);
      Cx -= C.col(i);
    } else {
      value += 2.0 * Cx(i) + C(i, i);
      weight += a(i);
      Cx += C.col(i);
      x[si] = 1;
    }
    if (weight <= inst.capacity) {
      ++best.feasible;
      if (value > best.value) {
        best.value = value;
        best.x = x;
      }
    }
  }
  // The incremental value is exact on integer data; recompute otherwise.
  best.value = qkp_value(inst, best.x);
  return best;
}

std::pair<Matrix, Matrix> dense_escape_matrices(const Matrix &C, const Vector &a,
                                                double tau, const BinaryVector &v) {
  const Index n = a.size();
  bool nonzero = false;
  Vector vv(n), d(n);
  for (Index i = 0; i < n; ++i) {
    vv(i) = v[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    d(i) = 2.0 * vv(i) - 1.0;
    nonzero = nonzero || vv(i) != 0.0;
  }
  const double sigma = nonzero ? 1.0 : -1.0;
  Matrix M = -C;
  Matrix A(n, n);
  for (Index i = 0; i < n; ++i) {
    double cvi = 0.0;
    for (Index j = 0; j < n; ++j)
      cvi += C(i, j) * vv(j);
    M(i, i) += 2.0 * cvi * d(i);
    for (Index j = 0; j < n; ++j)
      A(i, j) = a(i) * a(j);
    A(i, i) -= sigma * tau * a(i) * d(i);
  }
  return {M, A};
}

namespace {

double lambda_min(const Matrix &M, const Matrix &A, double alpha) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(M - alpha * A, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

} // namespace

GridOracleResult escape_grid_oracle(const Matrix &M, const Matrix &A, double span,
                                    int points) {
  GridOracleResult out;
  out.grid_value = -std::numeric_limits<double>::infinity();
  const double h = 2.0 * span / (points - 1);
  int best = 0;
  for (int k = 0; k < points; ++k) {
    const double alpha = -span + h * k;
    const double val = lambda_min(M, A, alpha);
    if (val > out.grid_value) {
      out.grid_value = val;
      best = k;
    }
  }
  double lo = -span + h * std::max(0, best - 1);
  double hi = -span + h * std::min(points - 1, best + 1);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = lambda_min(M, A, x1), f2 = lambda_min(M, A, x2);
  for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(lo)); ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = lambda_min(M, A, x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = lambda_min(M, A, x1);
    }
  }
  out.alpha = f1 > f2 ? x1 : x2;
  out.value = std::max({f1, f2, out.grid_value});
  if (out.value == out.grid_value)
    out.alpha = -span + h * best;
  return out;
}

DenseKkt dense_kkt(const Matrix &R, const Vector &mu, double lambda, const Matrix &C,
                   const Vector &a, double tau) {
  const Index n = R.rows();
  const Index r = R.cols();
  Matrix Z = Matrix::Zero(n + 1, r);
  Z(0, 0) = 1.0;
  Z.bottomRows(n) = R;
  const Matrix Y = Z * Z.transpose();
  const Matrix X = Y.bottomRightCorner(n, n);
  const Vector x = Y.block(1, 0, n, 1);
  const double knap = a.dot(X * a) - tau * a.dot(x);
  DenseKkt out;
  out.Rp = 0.5 * std::sqrt((X.diagonal() - x).squaredNorm() +
                           (Y(0, 0) - 1.0) * (Y(0, 0) - 1.0) + knap * knap);
  out.obj = -(C.cwiseProduct(X)).sum();
  const Vector b = 0.5 * (mu + lambda * tau * a);
  const double y = b.dot(x);
  Matrix S(n + 1, n + 1);
  S(0, 0) = -y;
  for (Index i = 0; i < n; ++i) {
    S(0, i + 1) = S(i + 1, 0) = b(i);
    for (Index j = 0; j < n; ++j)
      S(i + 1, j + 1) = -C(i, j) - lambda * a(i) * a(j) - (i == j ? mu(i) : 0.0);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  const Vector ev = es.eigenvalues();
  const Matrix &U = es.eigenvectors();
  Matrix neg = Matrix::Zero(n + 1, n + 1);
  for (Index i = 0; i < ev.size(); ++i)
    if (ev(i) < 0.0)
      neg += ev(i) * U.col(i) * U.col(i).transpose();
  out.Rd = neg.norm() / (1.0 + S.norm());
  out.min_eig = ev(0);
  out.pdgap = std::abs(out.obj - y) / (1.0 + std::abs(out.obj) + std::abs(y));
  return out;
}

} // namespace qksdp
