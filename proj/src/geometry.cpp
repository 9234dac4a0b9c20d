#include "qksdp/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace qksdp {

namespace {

// Pieces of the constraint-gradient Gram matrix at a point:
//   grad g_i = e_i q_i'  with q_i = 2R_i - e1,
//   grad h   = a w'      with w = 2R'a - tau e1.
// The Gram matrix is the arrow [diag(D) b; b' s] with D_i = ||q_i||^2,
// b_i = a_i <q_i, w>, s = ||a||^2 ||w||^2.
struct Arrow {
  Matrix Q;
  Vector D;
  RowVector w;
  Vector qw;
  Vector coef; // <q_i, w> / D_i
  double s = 0.0;
  double piv = 0.0; // s - b' D^{-1} b, accumulated without cancellation
};

Arrow build_arrow(const FactorPoint &P, const Vector &a, double tau, bool knapsack,
                  double a_sq) {
  Arrow ar;
  ar.Q = 2.0 * P.R;
  ar.Q.col(0).array() -= 1.0;
  ar.D = ar.Q.rowwise().squaredNorm();
  if (ar.D.size() > 0 && ar.D.minCoeff() <= 1e-30)
    throw SingularProjection("a row of the factor sits at the centre of its sphere");
  if (!knapsack)
    return ar;
  ar.w = 2.0 * P.aR;
  ar.w(0) -= tau;
  ar.qw = ar.Q * ar.w.transpose();
  ar.coef = ar.qw.cwiseQuotient(ar.D);
  ar.s = a_sq * ar.w.squaredNorm();
  double piv = 0.0;
  const Index n = P.n();
  for (Index i = 0; i < n; ++i) {
    if (a(i) == 0.0)
      continue;
    const double z = (ar.w - ar.coef(i) * ar.Q.row(i)).squaredNorm();
    piv += a(i) * a(i) * z;
  }
  ar.piv = piv;
  return ar;
}

} // namespace

Variety::Variety(Vector weights, double capacity, VarietyKind kind,
                 GeometryOptions opts)
    : a_(std::move(weights)), tau_(capacity), a_sq_(a_.squaredNorm()),
      kind_(kind), opts_(opts) {}

FactorPoint Variety::make_point(Matrix R) const {
  if (R.rows() != a_.size())
    throw DimensionMismatch("factor has " + std::to_string(R.rows()) +
                            " rows, instance has " + std::to_string(a_.size()));
  FactorPoint P;
  P.aR = a_.transpose() * R;
  P.row_sq = R.rowwise().squaredNorm();
  P.R = std::move(R);
  return P;
}

ConstraintResidual Variety::residual(const FactorPoint &P) const {
  ConstraintResidual res;
  res.diag = P.row_sq - P.R.col(0);
  if (kind_ == VarietyKind::Knapsack)
    res.knapsack = P.aR.squaredNorm() - tau_ * P.aR(0);
  return res;
}

double Variety::feasibility_error(const FactorPoint &P) const {
  const ConstraintResidual res = residual(P);
  const double d = res.diag.size() ? res.diag.cwiseAbs().maxCoeff() : 0.0;
  return std::max(d, std::abs(res.knapsack));
}

double Variety::feas_tol(const FactorPoint &P) const {
  return opts_.feas_rel * std::max(1.0, P.row_sq.sum());
}

double Variety::residual_norm(const FactorPoint &P) const {
  const ConstraintResidual res = residual(P);
  return std::sqrt(res.diag.squaredNorm() + res.knapsack * res.knapsack);
}

TangentMultipliers Variety::multipliers(const FactorPoint &P,
                                        const Matrix &G) const {
  const bool knap = kind_ == VarietyKind::Knapsack;
  const Arrow ar = build_arrow(P, a_, tau_, knap, a_sq_);
  const Vector c = G.cwiseProduct(ar.Q).rowwise().sum();
  TangentMultipliers m;
  if (!knap) {
    m.mu = c.cwiseQuotient(ar.D);
    return m;
  }
  if (!(ar.piv > opts_.pivot_rel * ar.s) || ar.s == 0.0)
    throw SingularProjection("Schur pivot " + std::to_string(ar.piv) +
                             " below tolerance (scale " + std::to_string(ar.s) +
                             ")");
  // Numerator of the border unknown: sum_i a_i <G_i, w - coef_i q_i>.
  const Vector Gw = G * ar.w.transpose();
  const Vector Gq = c;
  double num = 0.0;
  for (Index i = 0; i < P.n(); ++i)
    num += a_(i) * (Gw(i) - ar.coef(i) * Gq(i));
  m.lambda = num / ar.piv;
  m.mu = (c - m.lambda * a_.cwiseProduct(ar.qw)).cwiseQuotient(ar.D);
  return m;
}

Matrix Variety::apply_multipliers(const FactorPoint &P, const Matrix &G,
                                  const TangentMultipliers &m) const {
  Matrix out = G - m.mu.asDiagonal() * (2.0 * P.R);
  out.col(0) += m.mu;
  if (kind_ == VarietyKind::Knapsack && m.lambda != 0.0) {
    RowVector w = 2.0 * P.aR;
    w(0) -= tau_;
    out.noalias() -= m.lambda * a_ * w;
  }
  return out;
}

Matrix Variety::project_tangent(const FactorPoint &P, const Matrix &G) const {
  return apply_multipliers(P, G, multipliers(P, G));
}

double Variety::tangent_violation(const FactorPoint &P, const Matrix &H) const {
  const double scale = std::max(H.norm(), 1e-300);
  Vector lin = 2.0 * P.R.cwiseProduct(H).rowwise().sum() - H.col(0);
  double err = lin.size() ? lin.cwiseAbs().maxCoeff() : 0.0;
  if (kind_ == VarietyKind::Knapsack) {
    const RowVector aH = a_.transpose() * H;
    err = std::max(err, std::abs(2.0 * P.aR.dot(aH) - tau_ * aH(0)));
  }
  return err / scale;
}

FactorPoint Variety::gauss_newton(Matrix R, int max_iter) const {
  const bool knap = kind_ == VarietyKind::Knapsack;
  FactorPoint P = make_point(std::move(R));
  double merit = residual_norm(P);
  for (int it = 0; it < max_iter; ++it) {
    if (feasibility_error(P) <= 1e-2 * feas_tol(P))
      break;
    Arrow ar;
    try {
      ar = build_arrow(P, a_, tau_, knap, a_sq_);
    } catch (const SingularProjection &) {
      break;
    }
    const ConstraintResidual F = residual(P);
    // Minimum-norm Gauss-Newton step: J'(JJ')^{-1} F, JJ' the arrow matrix.
    Vector mu;
    double lambda = 0.0;
    if (!knap) {
      mu = F.diag.cwiseQuotient(ar.D);
    } else {
      double num = F.knapsack;
      for (Index i = 0; i < P.n(); ++i)
        num -= a_(i) * ar.coef(i) * F.diag(i);
      // Clamping the pivot damps the border direction near non-regular points.
      const double piv = std::max(ar.piv, opts_.pivot_rel * ar.s);
      lambda = piv > 0.0 ? num / piv : 0.0;
      mu = (F.diag - lambda * a_.cwiseProduct(ar.qw)).cwiseQuotient(ar.D);
    }
    Matrix step = -(mu.asDiagonal() * ar.Q);
    if (knap && lambda != 0.0)
      step.noalias() -= lambda * a_ * ar.w;

    double t = 1.0;
    bool improved = false;
    for (int h = 0; h < opts_.max_halvings; ++h, t *= 0.5) {
      FactorPoint trial = make_point(P.R + t * step);
      const double m = residual_norm(trial);
      if (std::isfinite(m) && m < merit) {
        P = std::move(trial);
        merit = m;
        improved = true;
        break;
      }
    }
    if (!improved)
      break;
  }
  if (!(feasibility_error(P) <= feas_tol(P)))
    throw RetractionDiverged("Gauss-Newton stopped at residual " +
                             std::to_string(feasibility_error(P)) +
                             " above tolerance " + std::to_string(feas_tol(P)));
  return P;
}

FactorPoint Variety::retract(const FactorPoint &P, const Matrix &H,
                             double t) const {
  if (t == 0.0)
    return P;
  return gauss_newton(P.R + t * H, opts_.max_gauss_newton);
}

FactorPoint Variety::restore(Matrix R) const {
  // Rows sitting exactly at the sphere centre have no Gauss-Newton direction.
  for (Index i = 0; i < R.rows(); ++i) {
    RowVector q = 2.0 * R.row(i);
    q(0) -= 1.0;
    if (q.squaredNorm() <= 1e-24)
      R(i, 0) += 1e-6;
  }
  return gauss_newton(std::move(R), opts_.max_restore);
}

double objective(const SparseMatrix &C, const Matrix &R) {
  const Matrix CR = C * R;
  return -CR.cwiseProduct(R).sum();
}

Matrix euclidean_gradient(const SparseMatrix &C, const Matrix &R) {
  return -2.0 * (C * R);
}

RiemannianGradient riemannian_gradient(const Variety &var, const FactorPoint &P,
                                       const SparseMatrix &C) {
  RiemannianGradient g;
  const Matrix E = euclidean_gradient(C, P.R);
  g.multipliers = var.multipliers(P, E);
  g.G = var.apply_multipliers(P, E, g.multipliers);
  g.norm = g.G.norm();
  g.normalized_norm = g.norm / std::max(1.0, std::sqrt(P.row_sq.sum()));
  return g;
}

RoundedPoint round_point(const Matrix &R) {
  RoundedPoint out;
  const Index n = R.rows();
  out.v.assign(static_cast<std::size_t>(n), 0);
  double dist_sq = 0.0;
  for (Index i = 0; i < n; ++i) {
    const bool one = R(i, 0) >= 0.5;
    out.v[static_cast<std::size_t>(i)] = one ? 1 : 0;
    const double e = R(i, 0) - (one ? 1.0 : 0.0);
    dist_sq += e * e;
  }
  if (R.cols() > 1)
    dist_sq += R.rightCols(R.cols() - 1).squaredNorm();
  out.distance = std::sqrt(dist_sq);
  return out;
}

bool in_delta_neighborhood(const Matrix &R, double delta) {
  return round_point(R).distance < delta;
}

bool is_nonregular(const BinaryVector &v, const QkpInstance &inst) {
  double w = 0.0;
  bool any = false;
  for (Index i = 0; i < inst.size(); ++i) {
    if (v[static_cast<std::size_t>(i)]) {
      any = true;
      w += inst.weights(i);
    }
  }
  if (!any)
    return true;
  if (inst.integral)
    return w == inst.capacity;
  return std::abs(w - inst.capacity) <= 1e-9 * inst.capacity;
}

NonRegularPoint NonRegularPoint::from(const BinaryVector &v) {
  NonRegularPoint p;
  p.v = v;
  p.d = 2.0 * to_vector(v).array() - 1.0;
  p.sigma = std::any_of(v.begin(), v.end(), [](auto b) { return b != 0; })
                ? 1.0
                : -1.0;
  return p;
}

Matrix NonRegularPoint::factor(Index r) const {
  Matrix R = Matrix::Zero(static_cast<Index>(v.size()), r);
  R.col(0) = to_vector(v);
  return R;
}

Vector to_vector(const BinaryVector &v) {
  Vector out(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out(static_cast<Index>(i)) = v[i] ? 1.0 : 0.0;
  return out;
}

} // namespace qksdp
