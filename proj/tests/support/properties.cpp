#include "properties.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "qksdp/certify.hpp"
#include "qksdp/escape.hpp"
#include "qksdp/oracle.hpp"
#include "qksdp/solver.hpp"
#include "qksdp/spectral.hpp"
#include "support.hpp"

namespace qksdp::testing {

namespace {

void fail(PropertyResult &res, int trial, const std::string &what) {
  if (res.failures++ == 0) {
    std::ostringstream os;
    os << "trial " << trial << ": " << what;
    res.first_failure = os.str();
  }
}

struct GeometryCase {
  QkpInstance scaled;
  Variety var;
  FactorPoint P;
};

GeometryCase geometry_case(std::mt19937_64 &rng, int trial, std::uint64_t seed) {
  std::uniform_int_distribution<Index> nd(3, 30), rd(2, 6);
  const Index n = nd(rng);
  const Index r = rd(rng);
  QkpInstance scaled = scale(random_small_instance(rng, n, false));
  const VarietyKind kind = trial % 2 ? VarietyKind::Oblique : VarietyKind::Knapsack;
  Variety var(scaled, kind);
  FactorPoint P = random_feasible_point(var, r, seed + static_cast<std::uint64_t>(trial));
  return {std::move(scaled), std::move(var), std::move(P)};
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

} // namespace

PropertyResult prop_projection_idempotent(int trials, std::uint64_t seed) {
  PropertyResult res{"projection idempotence", trials, 0, ""};
  std::mt19937_64 rng(seed);
  for (int t = 0; t < trials; ++t) {
    try {
      GeometryCase c = geometry_case(rng, t, seed);
      const Matrix G = gaussian_matrix(rng, c.P.n(), c.P.rank());
      const Matrix P1 = c.var.project_tangent(c.P, G);
      const Matrix P2 = c.var.project_tangent(c.P, P1);
      const double err = (P2 - P1).norm();
      if (err > 1e-12 * std::max(1.0, G.norm()))
        fail(res, t, "||P(P(G)) - P(G)|| = " + num(err));
    } catch (const std::exception &e) {
      fail(res, t, e.what());
    }
  }
  return res;
}

PropertyResult prop_projection_self_adjoint(int trials, std::uint64_t seed) {
  PropertyResult res{"projection self-adjointness", trials, 0, ""};
  std::mt19937_64 rng(seed);
  for (int t = 0; t < trials; ++t) {
    try {
      GeometryCase c = geometry_case(rng, t, seed);
      const Matrix G1 = gaussian_matrix(rng, c.P.n(), c.P.rank());
      const Matrix G2 = gaussian_matrix(rng, c.P.n(), c.P.rank());
      const double lhs = c.var.project_tangent(c.P, G1).cwiseProduct(G2).sum();
      const double rhs = G1.cwiseProduct(c.var.project_tangent(c.P, G2)).sum();
      const double err = std::abs(lhs - rhs);
      if (err > 1e-12 * G1.norm() * G2.norm())
        fail(res, t, "|<PG1,G2> - <G1,PG2>| = " + num(err));
    } catch (const std::exception &e) {
      fail(res, t, e.what());
    }
  }
  return res;
}

PropertyResult prop_retraction_second_order(int trials, std::uint64_t seed) {
  PropertyResult res{"retraction second-order ratio", trials, 0, ""};
  std::mt19937_64 rng(seed);
  for (int t = 0; t < trials; ++t) {
    try {
      GeometryCase c = geometry_case(rng, t, seed);
      Matrix H = c.var.project_tangent(c.P, gaussian_matrix(rng, c.P.n(), c.P.rank()));
      H /= H.norm();
      const double t0 = 1e-2;
      double q[3];
      double step = t0;
      bool feasible = true;
      for (double &qk : q) {
        const FactorPoint Q = c.var.retract(c.P, H, step);
        feasible = feasible && c.var.is_feasible(Q);
        qk = (Q.R - (c.P.R + step * H)).norm() / (step * step);
        step /= 2.0;
      }
      if (!feasible)
        fail(res, t, "retracted point infeasible");
      else if (q[1] > 2.0 * q[0] + 1e-4 || q[2] > 2.0 * q[0] + 1e-4)
        fail(res, t, "ratios " + num(q[0]) + ", " + num(q[1]) + ", " + num(q[2]));
    } catch (const std::exception &e) {
      fail(res, t, e.what());
    }
  }
  return res;
}

PropertyResult prop_iterate_feasibility(int trials, std::uint64_t seed) {
  PropertyResult res{"feasibility of accepted iterates", trials, 0, ""};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> nd(4, 16);
  for (int t = 0; t < trials; ++t) {
    const QkpInstance inst = random_small_instance(rng, nd(rng), t % 3 == 0);
    const QkpInstance sc = scale(inst);
    const bool knapsack = t % 2 == 0;
    SolverConfig cfg;
    cfg.seed = seed + static_cast<std::uint64_t>(t);
    cfg.max_time_s = 30.0;
    long bad = 0, seen = 0;
    double worst = 0.0;
    cfg.on_iterate = [&](const IterateEvent &ev) {
      const Matrix &R = ev.point->R;
      // Recompute the constraint residual from R alone.
      double err = (R.rowwise().squaredNorm() - R.col(0)).cwiseAbs().maxCoeff();
      if (knapsack) {
        const RowVector aR = sc.weights.transpose() * R;
        err = std::max(err, std::abs(aR.squaredNorm() - sc.capacity * aR(0)));
      }
      const double tol = 1e-12 * std::max(1.0, R.squaredNorm());
      ++seen;
      if (err > tol) {
        ++bad;
        worst = std::max(worst, err / tol);
      }
    };
    try {
      if (knapsack)
        solve_sqkelr(inst, cfg);
      else
        solve_sqks(inst, cfg);
      if (bad > 0)
        fail(res, t, std::to_string(bad) + " of " + std::to_string(seen) +
                         " iterates infeasible (worst " + num(worst) + " x tol)");
    } catch (const std::exception &e) {
      fail(res, t, e.what());
    }
  }
  return res;
}

PropertyResult prop_dual_concavity(int trials, std::uint64_t seed) {
  PropertyResult res{"escape dual concavity", trials, 0, ""};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> nd(4, 40);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int t = 0; t < trials; ++t) {
    try {
      const Index n = nd(rng);
      QkpInstance inst = random_small_instance(rng, n, t % 2 == 1);
      BinaryVector v(static_cast<std::size_t>(n), 0);
      if (t % 3 != 0) {
        // Non-regular by construction: tau = a'v for a proper subset.
        do {
          for (auto &vi : v)
            vi = u01(rng) < 0.5;
        } while (std::count(v.begin(), v.end(), 1) < 2 ||
                 std::count(v.begin(), v.end(), 1) == n);
        inst.capacity = qkp_weight(inst, v);
        if (inst.capacity <= inst.weights.maxCoeff()) {
          std::fill(v.begin(), v.end(), 0);
          inst.capacity = std::floor(0.5 * inst.weights.sum());
        }
      }
      const QkpInstance sc = scale(inst);
      const EscapeProblem prob(sc, v, 3);
      const auto [M, A] = dense_escape_matrices(Matrix(sc.profit), sc.weights,
                                                sc.capacity, v);
      const double L = 3.0 * M.norm() / std::max(A.norm(), 1e-300);
      EigenOptions eig;
      if (t % 2)
        eig.dense_threshold = 0;
      double al[3];
      for (double &x : al)
        x = L * (2.0 * u01(rng) - 1.0);
      std::sort(al, al + 3);
      DualEvaluation ev[3];
      for (int k = 0; k < 3; ++k)
        ev[k] = dual_value(prob, al[k], eig);
      const double w = (al[2] - al[0]);
      const double chord = ((al[2] - al[1]) * ev[0].value + (al[1] - al[0]) * ev[2].value) / w;
      const double scale_v = 1.0 + std::abs(ev[0].value) + std::abs(ev[1].value) +
                             std::abs(ev[2].value);
      if (ev[1].value < chord - 1e-8 * scale_v)
        fail(res, t, "phi(mid) " + num(ev[1].value) + " below chord " + num(chord));
      // Supergradient inequality at every sample.
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          const double bound = ev[i].value + ev[i].supergradient * (al[j] - al[i]);
          if (ev[j].value > bound + 1e-8 * scale_v) {
            fail(res, t, "supergradient inequality violated");
            i = j = 3;
          }
        }
    } catch (const std::exception &e) {
      fail(res, t, e.what());
    }
  }
  return res;
}

PropertyResult prop_eigen_residuals(int trials, std::uint64_t seed) {
  PropertyResult res{"eigenpair residuals and dense agreement", trials, 0, ""};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> nd(10, 200);
  std::uniform_int_distribution<int> kd(1, 4);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> g;
  for (int t = 0; t < trials; ++t) {
    try {
      const Index n = nd(rng);
      const int k = kd(rng);
      const Index offset = t % 2;
      const Index m = n - offset;
      // Ingredients assembled densely by hand alongside the operator.
      Matrix Sd = Matrix::Zero(m, m);
      for (Index i = 0; i < m; ++i)
        for (Index j = i; j < m; ++j)
          if (u01(rng) < 0.15)
            Sd(i, j) = Sd(j, i) = g(rng);
      const double weight = 1.0 + u01(rng);
      Vector D(n);
      for (Index i = 0; i < n; ++i)
        D(i) = g(rng);
      const double s = 0.5 + 1.5 * u01(rng);
      StructuredOperator op(n);
      auto sp = std::make_shared<SparseMatrix>(Sd.sparseView());
      op.set_sparse(sp, weight, offset);
      op.set_diagonal(D);
      Matrix dense = Matrix::Zero(n, n);
      dense.block(offset, offset, m, m) = weight * Sd;
      dense.diagonal() += D;
      const int terms = t % 3;
      for (int q = 0; q < terms; ++q) {
        const Vector u = gaussian_matrix(rng, n, 1);
        const Vector z = gaussian_matrix(rng, n, 1);
        const double w = g(rng);
        op.add_low_rank(w, u, z);
        dense += 0.5 * w * (u * z.transpose() + z * u.transpose());
      }
      op.set_scale(s);
      dense *= s;

      EigenOptions opts;
      opts.seed = seed + static_cast<std::uint64_t>(t);
      if (t % 2)
        opts.dense_threshold = 0;
      const EigenResult er = smallest_eigenpairs(op, k, opts);
      Eigen::SelfAdjointEigenSolver<Matrix> es(dense);
      if (static_cast<int>(er.pairs.size()) != k) {
        fail(res, t, "wrong number of pairs");
        continue;
      }
      Matrix V(n, k);
      for (int i = 0; i < k; ++i) {
        const EigenPair &p = er.pairs[static_cast<std::size_t>(i)];
        V.col(i) = p.vector;
        const double resid = (dense * p.vector - p.value * p.vector).norm();
        if (resid > opts.tol * std::max(1.0, std::abs(p.value)) * 1.01) {
          fail(res, t, "pair " + std::to_string(i) + " residual " + num(resid));
          break;
        }
        const double ref = es.eigenvalues()(i);
        if (std::abs(p.value - ref) > 1e-8 * std::max(1.0, std::abs(ref))) {
          fail(res, t, "eigenvalue " + std::to_string(i) + " = " + num(p.value) +
                           ", dense " + num(ref));
          break;
        }
      }
      const double orth = (V.transpose() * V - Matrix::Identity(k, k)).norm();
      if (orth > 1e-8)
        fail(res, t, "orthonormality defect " + num(orth));
    } catch (const std::exception &e) {
      fail(res, t, e.what());
    }
  }
  return res;
}

PropertyResult prop_complementarity(int trials, std::uint64_t seed) {
  PropertyResult res{"dual slack complementarity at convergence", trials, 0, ""};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> nd(4, 16);
  for (int t = 0; t < trials; ++t) {
    try {
      const QkpInstance inst = random_small_instance(rng, nd(rng), t % 2 == 1);
      SolverConfig cfg;
      cfg.seed = seed + static_cast<std::uint64_t>(t);
      cfg.max_time_s = 30.0;
      // Only the gradient test: the identity concerns first-order points.
      cfg.kkt_check_every = 0;
      const SolveReport rep = solve_pipeline(inst, cfg);
      if (rep.status != SolveStatus::Converged &&
          rep.status != SolveStatus::NonRegularOptimal) {
        fail(res, t, "status " + std::string(to_string(rep.status)));
        continue;
      }
      const QkpInstance sc = scale(inst);
      const DualVariables dual{rep.certificate.mu, rep.certificate.lambda};
      const Matrix S = dual_slack_dense(rep.R, dual, sc.profit, sc.weights, sc.capacity);
      const Index n = rep.R.rows();
      Matrix Z = Matrix::Zero(n + 1, rep.R.cols());
      Z(0, 0) = 1.0;
      Z.bottomRows(n) = rep.R;
      const double err = (S * Z).norm();
      if (err > 1e-8 * (1.0 + S.norm()))
        fail(res, t, "||S [e1 | R']'|| = " + num(err) + ", ||S|| = " + num(S.norm()));
    } catch (const std::exception &e) {
      fail(res, t, e.what());
    }
  }
  return res;
}

std::vector<PropertyResult> run_property_suites(int trials, std::uint64_t seed) {
  return {prop_projection_idempotent(trials, seed),
          prop_projection_self_adjoint(trials, seed + 1),
          prop_retraction_second_order(trials, seed + 2),
          prop_iterate_feasibility(trials, seed + 3),
          prop_dual_concavity(trials, seed + 4),
          prop_eigen_residuals(trials, seed + 5),
          prop_complementarity(trials, seed + 6)};
}

} // namespace qksdp::testing
