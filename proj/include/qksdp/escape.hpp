#pragma once

#include <memory>
#include <optional>
#include <string>

#include "qksdp/geometry.hpp"
#include "qksdp/instance.hpp"
#include "qksdp/spectral.hpp"

namespace qksdp {

/// Second-order test at a non-regular point v e1':
///   min <M, X>  s.t.  <A, X> = 0, tr X = 1, X psd,
/// with M = 2 diag((Cv).d) - C and A = aa' - sigma tau diag(a.d).
class EscapeProblem {
public:
  EscapeProblem(std::shared_ptr<const SparseMatrix> C, Vector weights,
                double capacity, const BinaryVector &v, Index rank);
  EscapeProblem(const QkpInstance &inst, const BinaryVector &v, Index rank);

  const NonRegularPoint &point() const { return point_; }
  Index dim() const { return a_.size(); }
  Index rank() const { return rank_; }
  const Vector &weights() const { return a_; }
  double capacity() const { return tau_; }
  const SparseMatrix &profit() const { return *C_; }
  const Vector &profit_times_v() const { return Cv_; }
  /// Diagonal of M without the -C part: 2 (Cv).d.
  Vector m_diagonal() const;
  /// Diagonal part of A: -sigma tau a.d.
  Vector a_diagonal() const;

  /// M - alpha A as a structured operator.
  StructuredOperator pencil(double alpha) const;
  /// <M, HH'> and <A, HH'> for an n x k matrix H.
  double m_form(const Matrix &H) const;
  double a_form(const Matrix &H) const;

private:
  std::shared_ptr<const SparseMatrix> C_;
  Vector a_;
  double tau_;
  NonRegularPoint point_;
  Vector Cv_;
  Index rank_;
};

struct DualEvaluation {
  double value = 0.0;         // phi(alpha) = lambda_min(M - alpha A)
  Vector vector;              // unit bottom eigenvector
  double supergradient = 0.0; // -u'Au
  bool converged = false;
};

DualEvaluation dual_value(const EscapeProblem &prob, double alpha,
                          const EigenOptions &eig = {});

enum class EscapeKind { StationaryCertificate, EscapingDirection, Inconclusive };

std::string_view to_string(EscapeKind kind);

struct EscapeOptions {
  double cert_tol = -1.0; // negative: 1e-8 (1 + ||C||_F)
  int max_bisection = 200;
  int max_doubling = 80;
  double width_rel = 1e-12;
  int fallback_vectors = 4;
  double cluster_rel = 1e-7;
  /// Stop bisecting once the dual value reaches -cert_tol; false maximizes fully.
  bool stop_when_certified = true;
  EigenOptions eig;
};

struct EscapeOutcome {
  EscapeKind kind = EscapeKind::Inconclusive;
  double dual_alpha = 0.0;
  double dual_value = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  double cert_tol = 0.0;
  std::optional<Matrix> direction; // n x (r-1), unit Frobenius norm
  double predicted_decrease = 0.0; // <MH, H>
  int eigen_solves = 0;
  std::string diagnostic;
};

/// Maximizes phi by supergradient bisection and either certifies
/// stationarity or builds a rank-<=2 escaping direction. Requires r >= 3.
EscapeOutcome solve_escape_sdp(const EscapeProblem &prob,
                               const EscapeOptions &opts = {});

struct EscapeStepOptions {
  double t0 = 1.0;
  double decrease_c = 0.25;
  double t_min = 1e-8;
};

struct EscapeStepResult {
  FactorPoint point;
  double t = 0.0;
  double f_before = 0.0;
  double f_after = 0.0;
  double required_decrease = 0.0;
};

/// Moves along [v - t^2 diag(HH').d, tH], restores feasibility and backtracks
/// until f drops by c t^2 |<MH,H>|. Throws StepFailed.
EscapeStepResult escape_step(const Variety &var, const EscapeProblem &prob,
                             const Matrix &H, const EscapeStepOptions &opts = {});

/// The curve point before restoring feasibility.
Matrix escape_curve(const EscapeProblem &prob, const Matrix &H, double t);

} // namespace qksdp
