#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <string_view>

#include "qksdp/geometry.hpp"
#include "qksdp/instance.hpp"
#include "qksdp/spectral.hpp"

namespace qksdp {

enum class RdMode { Auto, FullEig, LambdaMin };

std::string_view to_string(RdMode mode);
std::optional<RdMode> parse_rd_mode(std::string_view name);

/// How the knapsack row of the SDP enters the residues.
enum class KnapsackTerm {
  Equality,   // a'Xa - tau a'x = 0
  Inequality, // a'Xa - tau a'x <= 0, only the positive part counts
  Dropped,    // SQKS: no knapsack row
};

struct DualVariables {
  Vector mu;
  double lambda = 0.0;
};

struct KktCertificate {
  Vector mu;
  double lambda = 0.0;
  double y = 0.0;
  double Rp = 0.0;
  double Rd = 0.0;
  double pdgap = 0.0;
  double obj = 0.0; // <-C, RR'>
  RdMode rd_mode = RdMode::FullEig;
  bool rd_converged = true;
  bool rd_computed = true;    // false when skipped because Rp or pdgap failed
  double slack_min_eig = 0.0; // lambda_min(S) (unscaled)
  double slack_norm = 0.0;    // ||S||_F

  double max_residue() const { return std::max({Rp, Rd, pdgap}); }
};

/// Least-squares duals of the first-order system
///   -2CR - 2 diag(mu) R + mu e1' - 2 lambda aa'R + lambda tau a e1' = 0.
/// Throws SingularNormalEquations near non-regular points.
DualVariables recover_dual_regular(const Variety &var, const FactorPoint &P,
                                   const SparseMatrix &C);

/// mu = -2 (Cv).d - alpha sigma tau a.d, lambda = alpha.
DualVariables recover_dual_nonregular(const BinaryVector &v, double alpha,
                                      const SparseMatrix &C, const Vector &weights,
                                      double capacity);

/// Frobenius norm of the residual of the first-order system.
double first_order_residual(const Matrix &R, const DualVariables &dual,
                            const SparseMatrix &C, const Vector &weights,
                            double capacity);

/// Dual slack S of size n+1:
///   [ -y    b' ]
///   [  b   -C - diag(mu) - lambda aa' ],  b = (mu + lambda tau a)/2.
Matrix dual_slack_dense(const Matrix &R, const DualVariables &dual,
                        const SparseMatrix &C, const Vector &weights,
                        double capacity);
StructuredOperator dual_slack_operator(const Matrix &R, const DualVariables &dual,
                                       std::shared_ptr<const SparseMatrix> C,
                                       const Vector &weights, double capacity);
/// ||S||_F without assembling S.
double dual_slack_norm(const Matrix &R, const DualVariables &dual,
                       const SparseMatrix &C, const Vector &weights,
                       double capacity);
/// ||S [e1 | R']'||_F (zero when the first-order system holds).
double complementarity_residual(const Matrix &R, const DualVariables &dual,
                                std::shared_ptr<const SparseMatrix> C,
                                const Vector &weights, double capacity);

struct CertifyOptions {
  RdMode rd_mode = RdMode::Auto;
  Index full_eig_limit = 2000; // Auto uses full-eig while n+1 <= this
  KnapsackTerm knapsack = KnapsackTerm::Equality;
  /// Skip the eigenvalue work when max(Rp, pdgap) already reaches this.
  double skip_rd_above = std::numeric_limits<double>::infinity();
  EigenOptions eig;
};

/// Residues of the lifted point Y = [e1 R']'[e1 R'] with the given duals.
KktCertificate kkt_residues(const Matrix &R, const DualVariables &dual,
                            std::shared_ptr<const SparseMatrix> C,
                            const Vector &weights, double capacity,
                            const CertifyOptions &opts = {});
KktCertificate kkt_residues(const Matrix &R, const DualVariables &dual,
                            const QkpInstance &inst,
                            const CertifyOptions &opts = {});

} // namespace qksdp
