#pragma once

#include "qksdp/instance.hpp"
#include "qksdp/types.hpp"

namespace qksdp {

enum class VarietyKind {
  Knapsack, // diag(RR') = Re1 and ||a'R||^2 = tau a'Re1
  Oblique,  // diag(RR') = Re1 only
};

/// A point R of the variety with the products every operation needs.
/// The first column of R is x = diag(X) of the lifted SDP variable.
struct FactorPoint {
  Matrix R;
  RowVector aR;  // a'R
  Vector row_sq; // diag(RR')

  Index n() const { return R.rows(); }
  Index rank() const { return R.cols(); }
  auto first_column() const { return R.col(0); }
};

struct ConstraintResidual {
  Vector diag;         // diag(RR') - Re1
  double knapsack = 0; // ||a'R||^2 - tau a'Re1 (0 on the oblique variety)
};

/// Multipliers of the orthogonal projection G -> G - sum_i mu_i e_i q_i' - lambda a w'
/// with q_i = 2R_i - e1 and w = 2R'a - tau e1.
struct TangentMultipliers {
  Vector mu;
  double lambda = 0.0;
};

struct GeometryOptions {
  double feas_rel = 1e-12;   // feas_tol = feas_rel * max(1, ||R||^2)
  double pivot_rel = 1e-14;  // Schur pivot threshold relative to ||a||^2 ||w||^2
  int max_gauss_newton = 20; // per retraction
  int max_restore = 200;     // restoring an arbitrary starting matrix
  int max_halvings = 40;
};

/// Constraint geometry of K_{n,r} (or its oblique variant) for fixed (a, tau).
class Variety {
public:
  Variety(Vector weights, double capacity, VarietyKind kind,
          GeometryOptions opts = {});
  Variety(const QkpInstance &inst, VarietyKind kind, GeometryOptions opts = {})
      : Variety(inst.weights, inst.capacity, kind, opts) {}

  VarietyKind kind() const { return kind_; }
  Index dim() const { return a_.size(); }
  const Vector &weights() const { return a_; }
  double capacity() const { return tau_; }
  const GeometryOptions &options() const { return opts_; }

  /// Caches products; does not check feasibility.
  FactorPoint make_point(Matrix R) const;

  ConstraintResidual residual(const FactorPoint &P) const;
  /// max(||diag residual||_inf, |knapsack residual|).
  double feasibility_error(const FactorPoint &P) const;
  double feas_tol(const FactorPoint &P) const;
  bool is_feasible(const FactorPoint &P) const {
    return feasibility_error(P) <= feas_tol(P);
  }

  /// Least-squares multipliers of G against the constraint gradients.
  /// Throws SingularProjection when the Schur pivot is below tolerance.
  TangentMultipliers multipliers(const FactorPoint &P, const Matrix &G) const;
  Matrix project_tangent(const FactorPoint &P, const Matrix &G) const;
  /// G minus the normal component given by the multipliers.
  Matrix apply_multipliers(const FactorPoint &P, const Matrix &G,
                           const TangentMultipliers &m) const;
  /// Max violation of the linearized constraints by H, relative to ||H||.
  double tangent_violation(const FactorPoint &P, const Matrix &H) const;

  /// Newton retraction: Gauss-Newton from R + tH back onto the variety.
  /// Throws RetractionDiverged.
  FactorPoint retract(const FactorPoint &P, const Matrix &H, double t) const;
  /// Gauss-Newton from an arbitrary matrix, with a larger iteration budget.
  FactorPoint restore(Matrix R) const;

private:
  FactorPoint gauss_newton(Matrix R, int max_iter) const;
  double residual_norm(const FactorPoint &P) const;

  Vector a_;
  double tau_;
  double a_sq_;
  VarietyKind kind_;
  GeometryOptions opts_;
};

/// f(R) = <-C, RR'>.
double objective(const SparseMatrix &C, const Matrix &R);
/// Euclidean gradient of f: -2CR.
Matrix euclidean_gradient(const SparseMatrix &C, const Matrix &R);

struct RiemannianGradient {
  Matrix G;
  double norm = 0.0;
  double normalized_norm = 0.0; // ||G|| / max(1, ||R||)
  TangentMultipliers multipliers;
};

RiemannianGradient riemannian_gradient(const Variety &var, const FactorPoint &P,
                                       const SparseMatrix &C);

struct RoundedPoint {
  BinaryVector v;
  double distance = 0.0; // ||R - v e1'||_F
};

/// v_i = 1 iff (Re1)_i >= 0.5.
RoundedPoint round_point(const Matrix &R);
bool in_delta_neighborhood(const Matrix &R, double delta);

/// v = 0 or a'v = tau. Exact on integral data, 1e-9 tau tolerance otherwise.
bool is_nonregular(const BinaryVector &v, const QkpInstance &inst);

struct NonRegularPoint {
  BinaryVector v;
  Vector d;          // 2v - e
  double sigma = 1;  // +1 if v != 0, else -1

  static NonRegularPoint from(const BinaryVector &v);
  Matrix factor(Index r) const; // v e1'
};

Vector to_vector(const BinaryVector &v);

} // namespace qksdp
