#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "qksdp/types.hpp"

namespace qksdp {

/// scale * (S0 embedded at [offset, offset+m) + diag(D) + sum_k w_k (u_k z_k' + z_k u_k')/2).
/// S0 is shared and never copied, so many operators can reference one C.
class StructuredOperator {
public:
  explicit StructuredOperator(Index n = 0);

  Index dim() const { return n_; }

  void set_sparse(std::shared_ptr<const SparseMatrix> S0, double weight = 1.0,
                  Index offset = 0);
  void set_diagonal(Vector D);
  void add_low_rank(double w, Vector u, Vector z);
  void add_low_rank(double w, const Vector &u) { add_low_rank(w, u, u); }
  void set_scale(double s) { scale_ = s; }
  double scale() const { return scale_; }

  /// y = A x. Throws DimensionMismatch.
  void apply(const Vector &x, Vector &y) const;
  Vector apply(const Vector &x) const;
  /// Dense assembly; meant for small n.
  Matrix to_dense() const;

private:
  struct LowRank {
    double w;
    Vector u;
    Vector z;
  };
  Index n_;
  std::shared_ptr<const SparseMatrix> sparse_;
  double sparse_weight_ = 1.0;
  Index offset_ = 0;
  Vector diag_;
  std::vector<LowRank> terms_;
  double scale_ = 1.0;
};

struct EigenOptions {
  double tol = 1e-9;       // residual <= tol * max(1, |lambda|)
  int max_matvecs = 20000;
  int restart_dim = 30;
  Index dense_threshold = 400;
  std::uint64_t seed = 1;
  std::optional<Vector> start;
};

struct EigenPair {
  double value = 0.0;
  Vector vector;
  double residual = 0.0; // ||A u - value u||
};

struct EigenResult {
  std::vector<EigenPair> pairs; // ascending
  bool converged = false;
  int matvecs = 0;
};

/// k smallest eigenpairs, mutually orthonormal. On failure to converge the best
/// estimates are returned with converged = false.
EigenResult smallest_eigenpairs(const StructuredOperator &op, int k,
                                const EigenOptions &opts = {});
EigenResult smallest_eigenpair(const StructuredOperator &op,
                               const EigenOptions &opts = {});

} // namespace qksdp
