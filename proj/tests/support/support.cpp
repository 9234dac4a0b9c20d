#include "support.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/QR>

#include "qksdp/solver.hpp"

namespace qksdp::testing {

QkpInstance make_instance(const Matrix &C, const Vector &a, double tau) {
  QkpInstance inst;
  inst.profit = C.sparseView();
  inst.profit.makeCompressed();
  inst.weights = a;
  inst.capacity = tau;
  bool integral = true;
  for (Index i = 0; i < C.size(); ++i)
    integral = integral && C.data()[i] == std::round(C.data()[i]);
  for (Index i = 0; i < a.size(); ++i)
    integral = integral && a(i) == std::round(a(i));
  inst.integral = integral;
  inst.meta.source = "test";
  return inst;
}

QkpInstance random_small_instance(std::mt19937_64 &rng, Index n, bool mixed,
                                  double density) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> val(1, 100);
  std::uniform_int_distribution<int> wt(1, 50);
  Matrix C = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j)
      if (u01(rng) < density) {
        double c = val(rng);
        if (mixed && u01(rng) < 1.0 / 3.0)
          c = -c;
        C(i, j) = C(j, i) = c;
      }
  Vector a(n);
  for (Index i = 0; i < n; ++i)
    a(i) = wt(rng);
  // Validation needs max a < tau < sum a.
  while (a.sum() - a.maxCoeff() < 2.0) {
    Index lightest = 0;
    a.minCoeff(&lightest);
    a(lightest) += 1.0;
  }
  std::uniform_real_distribution<double> beta(0.2, 0.8);
  double tau = std::floor(beta(rng) * a.sum());
  tau = std::clamp(tau, a.maxCoeff() + 1.0, a.sum() - 1.0);
  return make_instance(C, a, tau);
}

FactorPoint random_feasible_point(const Variety &var, Index r, std::uint64_t seed) {
  return random_initial_point(var, r, seed, 0.2);
}

Matrix gaussian_matrix(std::mt19937_64 &rng, Index rows, Index cols) {
  std::normal_distribution<double> g;
  Matrix M(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i)
      M(i, j) = g(rng);
  return M;
}

Matrix dense_constraint_jacobian(const Matrix &R, const Vector &a, double tau,
                                 bool knapsack) {
  const Index n = R.rows(), r = R.cols();
  const Index m = knapsack ? n + 1 : n;
  Matrix J = Matrix::Zero(m, n * r);
  auto at = [r](Index i, Index k) { return i * r + k; };
  // d/dR of R_i R_i' - R_i1.
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < r; ++k)
      J(i, at(i, k)) = 2.0 * R(i, k) - (k == 0 ? 1.0 : 0.0);
  if (knapsack) {
    // d/dR of ||a'R||^2 - tau a'R e1.
    const RowVector aR = a.transpose() * R;
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < r; ++k)
        J(n, at(i, k)) = 2.0 * a(i) * aR(k) - (k == 0 ? tau * a(i) : 0.0);
  }
  return J;
}

Matrix dense_tangent_projection(const Matrix &R, const Vector &a, double tau,
                                bool knapsack, const Matrix &G) {
  const Index n = R.rows(), r = R.cols();
  const Matrix J = dense_constraint_jacobian(R, a, tau, knapsack);
  Vector g(n * r);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < r; ++k)
      g(i * r + k) = G(i, k);
  const Vector coef = J.transpose().colPivHouseholderQr().solve(g);
  const Vector p = g - J.transpose() * coef;
  Matrix P(n, r);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < r; ++k)
      P(i, k) = p(i * r + k);
  return P;
}

BinaryVector even_indicator(Index n) {
  BinaryVector v(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; i += 2)
    v[static_cast<std::size_t>(i)] = 1;
  return v;
}

BinaryVector odd_indicator(Index n) {
  BinaryVector v(static_cast<std::size_t>(n), 0);
  for (Index i = 1; i < n; i += 2)
    v[static_cast<std::size_t>(i)] = 1;
  return v;
}

} // namespace qksdp::testing
