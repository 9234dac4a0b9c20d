#include "qksdp/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "qksdp/errors.hpp"

namespace qksdp {

StructuredOperator::StructuredOperator(Index n) : n_(n), diag_(Vector::Zero(n)) {}

void StructuredOperator::set_sparse(std::shared_ptr<const SparseMatrix> S0,
                                    double weight, Index offset) {
  if (S0 && (S0->rows() != S0->cols() || offset < 0 || offset + S0->rows() > n_))
    throw DimensionMismatch("sparse block does not fit the operator");
  sparse_ = std::move(S0);
  sparse_weight_ = weight;
  offset_ = offset;
}

void StructuredOperator::set_diagonal(Vector D) {
  if (D.size() != n_)
    throw DimensionMismatch("diagonal length differs from operator dimension");
  diag_ = std::move(D);
}

void StructuredOperator::add_low_rank(double w, Vector u, Vector z) {
  if (u.size() != n_ || z.size() != n_)
    throw DimensionMismatch("low-rank term length differs from operator dimension");
  terms_.push_back({w, std::move(u), std::move(z)});
}

void StructuredOperator::apply(const Vector &x, Vector &y) const {
  if (x.size() != n_)
    throw DimensionMismatch("matvec: vector length " + std::to_string(x.size()) +
                            " vs operator dimension " + std::to_string(n_));
  y = diag_.cwiseProduct(x);
  if (sparse_) {
    const Index m = sparse_->rows();
    y.segment(offset_, m).noalias() +=
        sparse_weight_ * (*sparse_ * x.segment(offset_, m));
  }
  for (const auto &t : terms_) {
    const double zx = t.z.dot(x);
    const double ux = t.u.dot(x);
    y += (0.5 * t.w * zx) * t.u + (0.5 * t.w * ux) * t.z;
  }
  if (scale_ != 1.0)
    y *= scale_;
}

Vector StructuredOperator::apply(const Vector &x) const {
  Vector y;
  apply(x, y);
  return y;
}

Matrix StructuredOperator::to_dense() const {
  Matrix A = Matrix(diag_.asDiagonal());
  if (sparse_) {
    const Index m = sparse_->rows();
    A.block(offset_, offset_, m, m) += sparse_weight_ * Matrix(*sparse_);
  }
  for (const auto &t : terms_)
    A += 0.5 * t.w * (t.u * t.z.transpose() + t.z * t.u.transpose());
  return scale_ * A;
}

namespace {

double residual_of(const StructuredOperator &op, const Vector &u, double value,
                   int &matvecs) {
  Vector Au;
  op.apply(u, Au);
  ++matvecs;
  return (Au - value * u).norm();
}

bool acceptable(double residual, double value, double tol) {
  return residual <= tol * std::max(1.0, std::abs(value));
}

EigenResult dense_eigenpairs(const StructuredOperator &op, int k) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(op.to_dense());
  EigenResult out;
  out.converged = es.info() == Eigen::Success;
  for (int i = 0; i < k; ++i) {
    EigenPair p;
    p.value = es.eigenvalues()(i);
    p.vector = es.eigenvectors().col(i);
    p.residual = residual_of(op, p.vector, p.value, out.matvecs);
    out.pairs.push_back(std::move(p));
  }
  return out;
}

Vector random_unit(Index n, std::mt19937_64 &rng) {
  std::normal_distribution<double> g;
  Vector v(n);
  for (Index i = 0; i < n; ++i)
    v(i) = g(rng);
  return v / v.norm();
}

// Thick-restart Lanczos with full reorthogonalization. The projected matrix is
// kept as a dense m x m block: after a restart it is diagonal plus one
// coupling row, and the fresh columns are filled with the Gram-Schmidt
// coefficients.
EigenResult lanczos(const StructuredOperator &op, int k, const EigenOptions &opts,
                    std::mt19937_64 &rng) {
  const Index n = op.dim();
  const Index m = std::min<Index>(n, std::max<Index>(opts.restart_dim, 2 * k + 10));
  Matrix V(n, m + 1);
  Matrix H = Matrix::Zero(m, m);
  EigenResult out;

  Vector v0 = opts.start && opts.start->size() == n && opts.start->norm() > 0
                  ? Vector(*opts.start / opts.start->norm())
                  : random_unit(n, rng);
  V.col(0) = v0;
  Index j0 = 0;
  double beta_last = 0.0;
  Vector w(n);

  Eigen::SelfAdjointEigenSolver<Matrix> es;
  while (true) {
    for (Index j = j0; j < m; ++j) {
      op.apply(V.col(j), w);
      ++out.matvecs;
      Vector h = V.leftCols(j + 1).transpose() * w;
      w.noalias() -= V.leftCols(j + 1) * h;
      const Vector h2 = V.leftCols(j + 1).transpose() * w;
      w.noalias() -= V.leftCols(j + 1) * h2;
      h += h2;
      H.block(0, j, j + 1, 1) = h;
      H.block(j, 0, 1, j + 1) = h.transpose();
      double beta = w.norm();
      const double hscale = std::max(1.0, h.cwiseAbs().maxCoeff());
      if (beta <= 1e-12 * hscale) {
        beta = 0.0;
        if (j + 1 < n) {
          // Invariant subspace: continue with a fresh orthogonal direction.
          Vector r = random_unit(n, rng);
          for (int pass = 0; pass < 2; ++pass)
            r.noalias() -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * r);
          V.col(j + 1) = r / r.norm();
        } else {
          V.col(j + 1).setZero();
        }
      } else {
        V.col(j + 1) = w / beta;
      }
      // Off-diagonal couplings inside the block come from the next column's
      // coefficients; only the trailing one matters for residual estimates.
      if (j + 1 == m)
        beta_last = beta;
    }

    es.compute(H);
    const Vector &theta = es.eigenvalues();
    const Matrix &Y = es.eigenvectors();
    bool all = true;
    for (int i = 0; i < k; ++i)
      if (!acceptable(std::abs(beta_last * Y(m - 1, i)), theta(i), opts.tol))
        all = false;

    if (all || out.matvecs >= opts.max_matvecs) {
      out.pairs.clear();
      bool verified = true;
      for (int i = 0; i < k; ++i) {
        EigenPair p;
        p.vector = V.leftCols(m) * Y.col(i);
        p.vector.normalize();
        p.value = theta(i);
        p.residual = residual_of(op, p.vector, p.value, out.matvecs);
        verified = verified && acceptable(p.residual, p.value, opts.tol);
        out.pairs.push_back(std::move(p));
      }
      if (verified) {
        out.converged = true;
        return out;
      }
      if (out.matvecs >= opts.max_matvecs)
        return out;
    }

    const Index p = std::min<Index>(m - 1, k + (m - k) / 2);
    Matrix kept = V.leftCols(m) * Y.leftCols(p);
    V.leftCols(p) = kept;
    V.col(p) = V.col(m);
    H.setZero();
    for (Index i = 0; i < p; ++i) {
      H(i, i) = theta(i);
      H(p, i) = H(i, p) = beta_last * Y(m - 1, i);
    }
    j0 = p;
  }
}

} // namespace

EigenResult smallest_eigenpairs(const StructuredOperator &op, int k,
                                const EigenOptions &opts) {
  const Index n = op.dim();
  if (n < 1)
    throw DimensionMismatch("eigenproblem of dimension zero");
  k = static_cast<int>(std::min<Index>(std::max(k, 1), n));
  if (n <= opts.dense_threshold || n <= 2 * k + 2)
    return dense_eigenpairs(op, k);

  std::mt19937_64 rng(opts.seed);
  EigenResult res = lanczos(op, k, opts, rng);
  if (k < 2 || !res.converged)
    return res;

  // A single Krylov sequence can miss copies of a repeated eigenvalue. Shift
  // the found vectors out of the way and look for anything still below them.
  for (int round = 0; round < k; ++round) {
    const double lo = res.pairs.front().value;
    const double hi = res.pairs.back().value;
    const double shift = (hi - lo) + std::max(1.0, std::abs(hi));
    StructuredOperator deflated = op;
    for (const auto &p : res.pairs)
      deflated.add_low_rank(shift / op.scale(), p.vector);
    EigenOptions sub = opts;
    sub.start.reset();
    sub.seed = opts.seed + 7919u * static_cast<unsigned>(round + 1);
    EigenResult extra = lanczos(deflated, 1, sub, rng);
    res.matvecs += extra.matvecs;
    if (!extra.converged) {
      res.converged = false;
      return res;
    }
    EigenPair cand = extra.pairs.front();
    if (!(cand.value < hi - 10.0 * opts.tol * std::max(1.0, std::abs(hi))))
      break;
    for (const auto &p : res.pairs)
      cand.vector -= p.vector.dot(cand.vector) * p.vector;
    cand.vector.normalize();
    cand.value = cand.vector.dot(op.apply(cand.vector));
    cand.residual = residual_of(op, cand.vector, cand.value, res.matvecs);
    res.pairs.pop_back();
    res.pairs.push_back(std::move(cand));
    std::sort(res.pairs.begin(), res.pairs.end(),
              [](const EigenPair &x, const EigenPair &y) { return x.value < y.value; });
  }
  return res;
}

EigenResult smallest_eigenpair(const StructuredOperator &op,
                               const EigenOptions &opts) {
  return smallest_eigenpairs(op, 1, opts);
}

} // namespace qksdp
