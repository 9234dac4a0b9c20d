#include "qksdp/escape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qksdp {

EscapeProblem::EscapeProblem(std::shared_ptr<const SparseMatrix> C, Vector weights,
                             double capacity, const BinaryVector &v, Index rank)
    : C_(std::move(C)), a_(std::move(weights)), tau_(capacity),
      point_(NonRegularPoint::from(v)), rank_(rank) {
  if (static_cast<Index>(v.size()) != a_.size() || C_->rows() != a_.size())
    throw DimensionMismatch("escape problem: v, a and C sizes differ");
  if (rank_ < 3)
    throw Error("escape problem needs factor rank r >= 3");
  Cv_ = *C_ * to_vector(v);
}

EscapeProblem::EscapeProblem(const QkpInstance &inst, const BinaryVector &v,
                             Index rank)
    : EscapeProblem(std::make_shared<const SparseMatrix>(inst.profit),
                    inst.weights, inst.capacity, v, rank) {}

Vector EscapeProblem::m_diagonal() const {
  return 2.0 * Cv_.cwiseProduct(point_.d);
}

Vector EscapeProblem::a_diagonal() const {
  return -point_.sigma * tau_ * a_.cwiseProduct(point_.d);
}

StructuredOperator EscapeProblem::pencil(double alpha) const {
  StructuredOperator op(dim());
  op.set_sparse(C_, -1.0);
  op.set_diagonal(m_diagonal() - alpha * a_diagonal());
  op.add_low_rank(-alpha, a_);
  return op;
}

double EscapeProblem::m_form(const Matrix &H) const {
  const Vector rs = H.rowwise().squaredNorm();
  const Matrix CH = *C_ * H;
  return m_diagonal().dot(rs) - CH.cwiseProduct(H).sum();
}

double EscapeProblem::a_form(const Matrix &H) const {
  const Vector rs = H.rowwise().squaredNorm();
  const RowVector aH = a_.transpose() * H;
  return aH.squaredNorm() + a_diagonal().dot(rs);
}

DualEvaluation dual_value(const EscapeProblem &prob, double alpha,
                          const EigenOptions &eig) {
  const StructuredOperator op = prob.pencil(alpha);
  const EigenResult res = smallest_eigenpair(op, eig);
  DualEvaluation out;
  out.value = res.pairs.front().value;
  out.vector = res.pairs.front().vector;
  out.supergradient = -prob.a_form(out.vector);
  out.converged = res.converged;
  return out;
}

std::string_view to_string(EscapeKind kind) {
  switch (kind) {
  case EscapeKind::StationaryCertificate:
    return "StationaryCertificate";
  case EscapeKind::EscapingDirection:
    return "EscapingDirection";
  case EscapeKind::Inconclusive:
    return "Inconclusive";
  }
  return "Unknown";
}

namespace {

struct Candidate {
  Matrix H; // n x k with <A, HH'> = 0 and ||H||_F = 1
  double m = std::numeric_limits<double>::infinity();
};

// Best rank-<=2 feasible combination drawn from pairs of the given vectors.
Candidate combine_pairs(const EscapeProblem &prob, const std::vector<Vector> &us,
                        double a_tol) {
  Candidate best;
  const Index n = prob.dim();
  auto consider = [&](Matrix H) {
    const double nrm = H.norm();
    if (!(nrm > 0.0))
      return;
    H /= nrm;
    if (std::abs(prob.a_form(H)) > a_tol)
      return;
    const double m = prob.m_form(H);
    if (m < best.m) {
      best.m = m;
      best.H = std::move(H);
    }
  };
  const std::size_t k = us.size();
  for (std::size_t i = 0; i < k; ++i) {
    Matrix single(n, 1);
    single.col(0) = us[i];
    const double ai = prob.a_form(single);
    for (std::size_t j = i + 1; j < k; ++j) {
      Matrix pair(n, 2);
      pair.col(0) = us[i];
      pair.col(1) = us[j];
      Matrix sj(n, 1);
      sj.col(0) = us[j];
      const double aj = prob.a_form(sj);
      // Convex mix of the two rank-one terms.
      if (ai * aj <= 0.0 && ai != aj) {
        const double theta = aj / (aj - ai);
        Matrix H(n, 2);
        H.col(0) = std::sqrt(theta) * us[i];
        H.col(1) = std::sqrt(1.0 - theta) * us[j];
        consider(H);
      }
      // Rotation within the pair: <A, xx'> = c0 + c1 cos 2p + c2 sin 2p.
      const RowVector aP = prob.weights().transpose() * pair;
      const Vector dA = prob.a_diagonal();
      const double Aij = aP(0) * aP(1) + (dA.cwiseProduct(us[i])).dot(us[j]);
      const double c0 = 0.5 * (ai + aj);
      const double c1 = 0.5 * (ai - aj);
      const double c2 = Aij;
      const double rho = std::hypot(c1, c2);
      if (rho > 0.0 && std::abs(c0) <= rho) {
        const double psi = std::atan2(c2, c1);
        const double acos_val = std::acos(std::clamp(-c0 / rho, -1.0, 1.0));
        for (double phi : {psi + acos_val, psi - acos_val}) {
          const double p = 0.5 * phi;
          Matrix H(n, 1);
          H.col(0) = std::cos(p) * us[i] + std::sin(p) * us[j];
          consider(H);
        }
      }
    }
  }
  return best;
}

} // namespace

EscapeOutcome solve_escape_sdp(const EscapeProblem &prob, const EscapeOptions &opts) {
  EscapeOutcome out;
  out.cert_tol = opts.cert_tol >= 0.0
                     ? opts.cert_tol
                     : 1e-8 * (1.0 + prob.profit().norm());
  const double a_scale =
      prob.weights().squaredNorm() + prob.capacity() * prob.weights().cwiseAbs().maxCoeff();
  const double a_tol = 1e-10 * std::max(1.0, a_scale);

  EigenOptions eig = opts.eig;
  auto eval = [&](double alpha) {
    DualEvaluation e = dual_value(prob, alpha, eig);
    ++out.eigen_solves;
    eig.start = e.vector;
    return e;
  };

  double lo = -1.0, hi = 1.0;
  DualEvaluation elo = eval(lo);
  DualEvaluation ehi = eval(hi);
  int doublings = 0;
  while (elo.supergradient < 0.0 && doublings < opts.max_doubling) {
    hi = lo;
    ehi = elo;
    lo *= 2.0;
    elo = eval(lo);
    ++doublings;
  }
  while (ehi.supergradient > 0.0 && doublings < opts.max_doubling) {
    lo = hi;
    elo = ehi;
    hi *= 2.0;
    ehi = eval(hi);
    ++doublings;
  }
  if (elo.supergradient < 0.0 || ehi.supergradient > 0.0) {
    out.kind = EscapeKind::Inconclusive;
    out.diagnostic = "could not bracket the dual maximizer";
    out.bracket_lo = lo;
    out.bracket_hi = hi;
    return out;
  }

  for (int it = 0; it < opts.max_bisection; ++it) {
    if (opts.stop_when_certified && std::max(elo.value, ehi.value) >= -out.cert_tol)
      break;
    const double width = hi - lo;
    if (width <= opts.width_rel * std::max({1.0, std::abs(lo), std::abs(hi)}))
      break;
    const double mid = 0.5 * (lo + hi);
    DualEvaluation e = eval(mid);
    if (e.supergradient > 0.0) {
      lo = mid;
      elo = std::move(e);
    } else if (e.supergradient < 0.0) {
      hi = mid;
      ehi = std::move(e);
    } else {
      lo = hi = mid;
      elo = e;
      ehi = std::move(e);
      break;
    }
  }
  out.bracket_lo = lo;
  out.bracket_hi = hi;
  const bool lo_better = elo.value >= ehi.value;
  out.dual_alpha = lo_better ? lo : hi;
  out.dual_value = lo_better ? elo.value : ehi.value;

  if (out.dual_value >= -out.cert_tol) {
    out.kind = EscapeKind::StationaryCertificate;
    return out;
  }

  // Primal recovery: the bracket endpoints carry bottom eigenvectors whose
  // A-values straddle zero; their convex mix is feasible.
  Candidate cand;
  {
    const double glo = elo.supergradient, ghi = ehi.supergradient;
    Matrix H(prob.dim(), 2);
    if (glo - ghi > 0.0) {
      const double theta = std::clamp(-ghi / (glo - ghi), 0.0, 1.0);
      H.col(0) = std::sqrt(theta) * elo.vector;
      H.col(1) = std::sqrt(1.0 - theta) * ehi.vector;
    } else {
      H.col(0) = elo.vector;
      H.col(1).setZero();
    }
    H /= H.norm();
    if (std::abs(prob.a_form(H)) <= a_tol) {
      cand.m = prob.m_form(H);
      cand.H = H;
    }
  }
  if (!(cand.m <= -out.cert_tol)) {
    EigenOptions many = opts.eig;
    many.start = elo.vector;
    const EigenResult bottom =
        smallest_eigenpairs(prob.pencil(out.dual_alpha), opts.fallback_vectors, many);
    ++out.eigen_solves;
    std::vector<Vector> us;
    for (const auto &p : bottom.pairs)
      us.push_back(p.vector);
    us.push_back(elo.vector);
    us.push_back(ehi.vector);
    Candidate alt = combine_pairs(prob, us, a_tol);
    if (alt.m < cand.m)
      cand = std::move(alt);
  }
  if (!(cand.m <= -out.cert_tol)) {
    out.kind = EscapeKind::Inconclusive;
    out.diagnostic = "dual value " + std::to_string(out.dual_value) +
                     " is negative but no feasible negative direction was found";
    return out;
  }
  const Index width = prob.rank() - 1;
  Matrix H = Matrix::Zero(prob.dim(), width);
  H.leftCols(std::min<Index>(width, cand.H.cols())) =
      cand.H.leftCols(std::min<Index>(width, cand.H.cols()));
  out.kind = EscapeKind::EscapingDirection;
  out.predicted_decrease = prob.m_form(H);
  out.direction = std::move(H);
  return out;
}

Matrix escape_curve(const EscapeProblem &prob, const Matrix &H, double t) {
  const NonRegularPoint &p = prob.point();
  const Index n = prob.dim();
  Matrix R(n, H.cols() + 1);
  R.col(0) = to_vector(p.v) - (t * t) * H.rowwise().squaredNorm().cwiseProduct(p.d);
  R.rightCols(H.cols()) = t * H;
  return R;
}

EscapeStepResult escape_step(const Variety &var, const EscapeProblem &prob,
                             const Matrix &H, const EscapeStepOptions &opts) {
  EscapeStepResult res;
  const Matrix base = prob.point().factor(H.cols() + 1);
  res.f_before = objective(prob.profit(), base);
  const double q = std::abs(prob.m_form(H));
  std::string last;
  for (double t = opts.t0; t >= opts.t_min; t *= 0.5) {
    if (t <= 0.0)
      break;
    FactorPoint P;
    try {
      P = var.restore(escape_curve(prob, H, t));
    } catch (const RetractionDiverged &e) {
      last = e.what();
      continue;
    }
    const double f = objective(prob.profit(), P.R);
    const double need = opts.decrease_c * t * t * q;
    if (f < res.f_before - need) {
      res.point = std::move(P);
      res.t = t;
      res.f_after = f;
      res.required_decrease = need;
      return res;
    }
    last = "insufficient decrease at t = " + std::to_string(t);
  }
  throw StepFailed("escape step underflowed below t = " +
                   std::to_string(opts.t_min) + " (" + last + ")");
}

} // namespace qksdp
