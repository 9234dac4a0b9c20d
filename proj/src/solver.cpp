#include "qksdp/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <ostream>
#include <random>

namespace qksdp {

Index select_rank(const QkpInstance &inst, RankMode mode) {
  const Index n = inst.size();
  const Index generic =
      static_cast<Index>(std::ceil(std::sqrt(2.0 * static_cast<double>(n + 1)))) + 2;
  Index r = std::min(inst.bandwidth() + 3, generic);
  if (mode == RankMode::Capped)
    r = std::min<Index>(r, 20);
  return std::max<Index>(r, 3);
}

std::string_view to_string(SolveStatus status) {
  switch (status) {
  case SolveStatus::Converged:
    return "Converged";
  case SolveStatus::NonRegularOptimal:
    return "NonRegularOptimal";
  case SolveStatus::TimeLimit:
    return "TimeLimit";
  case SolveStatus::Inconclusive:
    return "Inconclusive";
  }
  return "Unknown";
}

FactorPoint random_initial_point(const Variety &var, Index r, std::uint64_t seed,
                                 double perturbation) {
  if (r < 2)
    throw Error("factor rank must be at least 2");
  const Index n = var.dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  const Vector &a = var.weights();
  const double S = a.sum();
  std::string last = "no attempt";
  for (int attempt = 0; attempt < 10; ++attempt) {
    Matrix U(n, r - 1);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < r - 1; ++j)
        U(i, j) = gauss(rng);
      U.row(i).normalize();
    }
    double x = 0.5;
    if (var.kind() == VarietyKind::Knapsack) {
      const double q = (a.transpose() * U).squaredNorm();
      x = (var.capacity() * S - q) / (S * S - q);
      if (!(x > 0.0 && x < 1.0)) {
        last = "no admissible first column";
        continue;
      }
    }
    Matrix R(n, r);
    R.col(0).setConstant(x);
    R.rightCols(r - 1) = std::sqrt(x - x * x) * U;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < r; ++j)
        R(i, j) += perturbation * gauss(rng) / std::sqrt(static_cast<double>(r));
    try {
      return var.restore(std::move(R));
    } catch (const RetractionDiverged &e) {
      last = e.what();
    }
  }
  throw RetractionDiverged("random initialization failed: " + last);
}

namespace {

using Clock = std::chrono::steady_clock;

enum class InnerExit { Converged, EnteredDelta, TimeLimit, Stalled, IterationCap };

struct InnerResult {
  InnerExit exit;
  FactorPoint point;
  std::optional<KktCertificate> cert;
  std::string why;
};

class Run {
public:
  Run(const QkpInstance &inst, const SolverConfig &cfg, VarietyKind kind)
      : original_(inst), scaled_(scale(inst)),
        C_(std::make_shared<const SparseMatrix>(inst.profit)),
        var_(scaled_, kind, cfg.geometry), cfg_(cfg), start_(Clock::now()) {
    r_ = cfg.r > 0 ? cfg.r : select_rank(inst, cfg.rank_mode);
    cert_opts_.rd_mode = cfg.rd_mode;
    cert_opts_.knapsack =
        kind == VarietyKind::Knapsack ? KnapsackTerm::Equality : KnapsackTerm::Dropped;
    cert_opts_.eig.seed = cfg.seed + 17;
    rep_.variety = kind;
    rep_.rank = r_;
    rep_.branch = kind == VarietyKind::Knapsack ? "sqke" : "sqks";
  }

  SolveReport run(const Matrix *R0);

private:
  bool knapsack() const { return var_.kind() == VarietyKind::Knapsack; }
  double elapsed() const {
    return std::chrono::duration<double>(Clock::now() - start_).count();
  }
  bool timed_out() const { return elapsed() > cfg_.max_time_s; }

  void log(const char *fmt, ...) const;

  KktCertificate certify(const FactorPoint &P, const TangentMultipliers &m,
                         bool cheap_first) {
    ++rep_.kkt_checks;
    CertifyOptions opts = cert_opts_;
    if (cheap_first)
      opts.skip_rd_above = cfg_.tol_kkt;
    return kkt_residues(P.R, DualVariables{m.mu, m.lambda}, C_, scaled_.weights,
                        scaled_.capacity, opts);
  }

  // Final certificate for whatever point the run stops at.
  KktCertificate certify_final(const FactorPoint &P) {
    try {
      const DualVariables d = recover_dual_regular(var_, P, *C_);
      return kkt_residues(P.R, d, C_, scaled_.weights, scaled_.capacity, cert_opts_);
    } catch (const SingularNormalEquations &) {
      // Residues with zero duals still report feasibility and the objective.
      DualVariables d{Vector::Zero(P.n()), 0.0};
      return kkt_residues(P.R, d, C_, scaled_.weights, scaled_.capacity, cert_opts_);
    }
  }

  InnerResult inner(FactorPoint P, double f_k, int outer);

  const QkpInstance &original_;
  QkpInstance scaled_;
  std::shared_ptr<const SparseMatrix> C_;
  Variety var_;
  SolverConfig cfg_;
  Clock::time_point start_;
  Index r_ = 3;
  CertifyOptions cert_opts_;
  SolveReport rep_;
  double delta_ = 0.1;
  double tolg_ = 1e-6;
  long check_interval_ = 0;
  long next_periodic_check_ = 0;
  std::map<BinaryVector, Matrix> escape_memo_;
};

void Run::log(const char *fmt, ...) const {
  if (!cfg_.log)
    return;
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, args);
  va_end(args);
  *cfg_.log << buf << '\n';
}

InnerResult Run::inner(FactorPoint P, double f_k, int outer) {
  Matrix CR = *C_ * P.R;
  double f = -CR.cwiseProduct(P.R).sum();
  // f_k evaluated the same way as the trial points, so rounding cannot put
  // the start above its own cap.
  const double f_cap = f;
  std::deque<double> hist{f};
  Matrix R_prev, G_prev;
  bool have_prev = false;
  bool use_bb1 = true;
  double alpha_prev = 0.0;

  while (true) {
    if (timed_out())
      return {InnerExit::TimeLimit, std::move(P), std::nullopt, "time limit"};
    if (rep_.iterations >= cfg_.max_inner)
      return {InnerExit::IterationCap, std::move(P), std::nullopt,
              "inner iteration cap reached"};
    if (knapsack() && in_delta_neighborhood(P.R, delta_))
      return {InnerExit::EnteredDelta, std::move(P), std::nullopt, ""};

    RiemannianGradient g;
    {
      const Matrix E = -2.0 * CR;
      try {
        g.multipliers = var_.multipliers(P, E);
      } catch (const SingularProjection &) {
        // Numerically non-regular outside K(delta): handle as inside.
        return {InnerExit::EnteredDelta, std::move(P), std::nullopt,
                "singular projection"};
      }
      g.G = var_.apply_multipliers(P, E, g.multipliers);
      g.norm = g.G.norm();
      g.normalized_norm = g.norm / std::max(1.0, std::sqrt(P.row_sq.sum()));
    }

    const bool grad_small = g.normalized_norm < tolg_;
    const bool periodic =
        cfg_.kkt_check_every > 0 && rep_.iterations >= next_periodic_check_;
    if (grad_small || periodic) {
      KktCertificate cert = certify(P, g.multipliers, true);
      log("kkt check: Rp %.3e Rd %.3e pdgap %.3e (tolg %.1e)", cert.Rp,
          cert.rd_computed ? cert.Rd : -1.0, cert.pdgap, tolg_);
      if (cert.rd_computed && cert.max_residue() < cfg_.tol_kkt)
        return {InnerExit::Converged, std::move(P), std::move(cert), ""};
      if (grad_small)
        tolg_ /= 10.0;
      if (periodic) {
        if (cert.rd_computed)
          check_interval_ *= 2;
        next_periodic_check_ = rep_.iterations + check_interval_;
      }
    }

    const double Rnorm = std::sqrt(P.row_sq.sum());
    double alpha;
    if (!have_prev) {
      alpha = g.norm > 0.0 ? 0.1 * std::max(1.0, Rnorm) / g.norm : 1.0;
    } else {
      Matrix s, y;
      try {
        s = var_.project_tangent(P, P.R - R_prev);
        y = g.G - var_.project_tangent(P, G_prev);
      } catch (const SingularProjection &) {
        return {InnerExit::EnteredDelta, std::move(P), std::nullopt,
                "singular projection"};
      }
      const double sy = s.cwiseProduct(y).sum();
      if (sy > 0.0) {
        alpha = use_bb1 ? s.squaredNorm() / sy : sy / y.squaredNorm();
        use_bb1 = !use_bb1;
      } else {
        alpha = cfg_.bb.max_step;
      }
    }
    alpha = std::clamp(alpha, cfg_.bb.min_step, cfg_.bb.max_step);
    if (g.norm > 0.0)
      alpha = std::min(alpha, std::max(1.0, Rnorm) / g.norm);

    const double f_ref =
        std::min(*std::max_element(hist.begin(), hist.end()), f_cap);
    const double g2 = g.norm * g.norm;
    // Near stationarity the change of f caused by the retraction's feasibility
    // correction exceeds the Armijo decrease; compare values with the
    // multiplier term removed, which cancels it to first order.
    const auto constraint_term = [&](const FactorPoint &Q) {
      const ConstraintResidual c = var_.residual(Q);
      return g.multipliers.mu.dot(c.diag) + g.multipliers.lambda * c.knapsack;
    };
    const double term_P = constraint_term(P);
    bool accepted = false;
    int backtracks = 0;
    FactorPoint next;
    Matrix CR_next;
    double f_next = f;
    if (g.norm > 0.0) {
      for (; backtracks <= cfg_.ls.max_backtracks; ++backtracks, alpha *= cfg_.ls.rho) {
        try {
          next = var_.retract(P, g.G, -alpha);
        } catch (const RetractionDiverged &) {
          continue;
        }
        CR_next = *C_ * next.R;
        f_next = -CR_next.cwiseProduct(next.R).sum();
        if (f_next - constraint_term(next) <=
            f_ref - term_P - cfg_.ls.armijo_c * alpha * g2) {
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) {
      KktCertificate cert = certify(P, g.multipliers, false);
      log("line search failed at f %.10e; Rp %.3e Rd %.3e pdgap %.3e", f, cert.Rp,
          cert.Rd, cert.pdgap);
      if (cert.max_residue() < cfg_.tol_kkt)
        return {InnerExit::Converged, std::move(P), std::move(cert), ""};
      return {InnerExit::Stalled, std::move(P), std::move(cert),
              "line search failed without meeting the KKT tolerance"};
    }

    R_prev = P.R;
    G_prev = std::move(g.G);
    have_prev = true;
    alpha_prev = alpha;
    P = std::move(next);
    CR = std::move(CR_next);
    f = f_next;
    hist.push_back(f);
    while (static_cast<int>(hist.size()) > cfg_.ls.memory)
      hist.pop_front();
    ++rep_.iterations;

    if (cfg_.on_iterate) {
      IterateEvent ev;
      ev.outer = outer;
      ev.iteration = rep_.iterations;
      ev.point = &P;
      ev.f = f;
      ev.f_outer = f_k;
      ev.grad_norm = g.normalized_norm;
      ev.step = alpha_prev;
      ev.backtracks = backtracks;
      ev.delta = delta_;
      ev.tolg = tolg_;
      ev.feas_error = var_.feasibility_error(P);
      ev.feas_tol = var_.feas_tol(P);
      cfg_.on_iterate(ev);
    }
    if (cfg_.log_every > 0 && rep_.iterations % cfg_.log_every == 0)
      log("iter %6ld  f %.10e  grad %.3e  delta %.3e  tolg %.1e  escapes %d",
          rep_.iterations, f, g.normalized_norm, delta_, tolg_, rep_.escapes);
  }
}

SolveReport Run::run(const Matrix *R0) {
  delta_ = cfg_.delta0;
  tolg_ = cfg_.tolg0;
  check_interval_ = std::max(1L, cfg_.kkt_check_every);
  next_periodic_check_ = check_interval_;
  if (knapsack() && r_ < 3)
    throw Error("non-regular handling needs factor rank r >= 3");

  FactorPoint P = R0 ? var_.restore(*R0)
                     : random_initial_point(var_, r_, cfg_.seed, cfg_.init_perturbation);
  if (P.rank() != r_)
    throw DimensionMismatch("initial factor has the wrong number of columns");
  log("start: n %ld r %ld variety %s f %.10e", static_cast<long>(P.n()),
      static_cast<long>(r_), knapsack() ? "knapsack" : "oblique",
      objective(*C_, P.R));

  auto finish = [&](SolveStatus status, FactorPoint point,
                    std::optional<KktCertificate> cert, std::string msg) {
    rep_.status = status;
    rep_.certificate = cert ? std::move(*cert) : certify_final(point);
    rep_.R = std::move(point.R);
    rep_.message = std::move(msg);
    rep_.wall_time_s = elapsed();
    log("finish: %s obj %.10e Rp %.3e Rd %.3e pdgap %.3e time %.2fs",
        std::string(to_string(status)).c_str(), rep_.certificate.obj,
        rep_.certificate.Rp, rep_.certificate.Rd, rep_.certificate.pdgap,
        rep_.wall_time_s);
    return rep_;
  };

  for (int k = 0; k < cfg_.max_outer; ++k) {
    rep_.outer_iterations = k + 1;
    const double f_k = objective(*C_, P.R);
    rep_.outer_objectives.push_back(f_k);
    InnerResult ir = inner(std::move(P), f_k, k);
    switch (ir.exit) {
    case InnerExit::Converged:
      return finish(SolveStatus::Converged, std::move(ir.point), std::move(ir.cert), "");
    case InnerExit::TimeLimit:
      return finish(SolveStatus::TimeLimit, std::move(ir.point), std::nullopt,
                    ir.why);
    case InnerExit::Stalled:
    case InnerExit::IterationCap:
      return finish(SolveStatus::Inconclusive, std::move(ir.point), std::move(ir.cert),
                    ir.why);
    case InnerExit::EnteredDelta:
      break;
    }

    FactorPoint Rhat = std::move(ir.point);
    const double f_hat = objective(*C_, Rhat.R);
    const RoundedPoint rp = round_point(Rhat.R);
    if (!is_nonregular(rp.v, original_)) {
      ++rep_.case1;
      log("outer %d: rounded point is regular (distance %.3e), delta -> %.3e", k,
          rp.distance, delta_ / 2);
      P = std::move(Rhat);
      delta_ /= 2.0;
      continue;
    }

    const EscapeProblem prob(C_, scaled_.weights, scaled_.capacity, rp.v, r_);
    Matrix H;
    auto memo = escape_memo_.find(rp.v);
    if (memo != escape_memo_.end()) {
      H = memo->second;
      ++rep_.escape_reuses;
    } else {
      EscapeOptions eopts = cfg_.escape;
      eopts.eig.seed = cfg_.seed + 31 * static_cast<std::uint64_t>(k + 1);
      const EscapeOutcome out = solve_escape_sdp(prob, eopts);
      log("outer %d: escape problem at |v| = %ld: %s, dual %.3e (alpha %.6e)", k,
          static_cast<long>(std::count(rp.v.begin(), rp.v.end(), 1)),
          std::string(to_string(out.kind)).c_str(), out.dual_value, out.dual_alpha);
      if (out.kind == EscapeKind::StationaryCertificate) {
        const DualVariables dual = recover_dual_nonregular(
            rp.v, out.dual_alpha, *C_, scaled_.weights, scaled_.capacity);
        FactorPoint V = var_.make_point(prob.point().factor(r_));
        KktCertificate cert =
            kkt_residues(V.R, dual, C_, scaled_.weights, scaled_.capacity, cert_opts_);
        ++rep_.kkt_checks;
        return finish(SolveStatus::NonRegularOptimal, std::move(V), std::move(cert),
                      "");
      }
      if (out.kind == EscapeKind::Inconclusive) {
        return finish(SolveStatus::Inconclusive, std::move(Rhat), std::nullopt,
                      "escape: " + out.diagnostic);
      }
      H = *out.direction;
      escape_memo_.emplace(rp.v, H);
      ++rep_.escapes;
      rep_.escaped_points.push_back(rp.v);
    }
    if (timed_out())
      return finish(SolveStatus::TimeLimit, std::move(Rhat), std::nullopt, "time limit");

    try {
      EscapeStepResult step = escape_step(var_, prob, H, cfg_.escape_step);
      log("outer %d: escape step t %.3e, f %.10e -> %.10e", k, step.t, step.f_before,
          step.f_after);
      P = step.f_after < f_hat ? std::move(step.point) : std::move(Rhat);
    } catch (const StepFailed &e) {
      log("outer %d: %s", k, e.what());
      P = std::move(Rhat);
    }
    delta_ /= 2.0;
  }
  return finish(SolveStatus::Inconclusive, std::move(P), std::nullopt,
                "outer iteration cap reached");
}

void attach_rounding(SolveReport &rep, const QkpInstance &inst) {
  RoundedSolution rs = round_solution(rep.R, inst);
  rs.relgap = relgap(-rep.certificate.obj, rs.value);
  rep.rounded = std::move(rs);
}

SolveReport solve_with(const QkpInstance &inst, const SolverConfig &config,
                       const Matrix *R0, VarietyKind kind) {
  if (auto d = validate(inst))
    throw ValidationError(*d);
  Run run(inst, config, kind);
  SolveReport rep = run.run(R0);
  if (config.round)
    attach_rounding(rep, inst);
  return rep;
}

} // namespace

SolveReport solve_sqkelr(const QkpInstance &inst, const SolverConfig &config,
                         const Matrix *R0) {
  return solve_with(inst, config, R0, VarietyKind::Knapsack);
}

SolveReport solve_sqks(const QkpInstance &inst, const SolverConfig &config,
                       const Matrix *R0) {
  return solve_with(inst, config, R0, VarietyKind::Oblique);
}

SolveReport solve_pipeline(const QkpInstance &inst, const SolverConfig &config) {
  if (inst.profit_nonnegative()) {
    SolveReport rep = solve_sqkelr(inst, config);
    rep.branch = "sqke";
    return rep;
  }
  const auto start = Clock::now();
  SolveReport relaxed = solve_sqks(inst, config);
  const QkpInstance scaled = scale(inst);
  const RowVector aR = scaled.weights.transpose() * relaxed.R;
  const double slack = aR.squaredNorm() - scaled.capacity * aR(0);
  if (slack <= 0.0) {
    // The knapsack row holds as an inequality: this is the SQK solution.
    CertifyOptions opts;
    opts.rd_mode = config.rd_mode;
    opts.knapsack = KnapsackTerm::Inequality;
    opts.eig.seed = config.seed + 17;
    relaxed.certificate =
        kkt_residues(relaxed.R, DualVariables{relaxed.certificate.mu, 0.0}, scaled, opts);
    relaxed.branch = "sqks";
    if (relaxed.rounded)
      relaxed.rounded->relgap = relgap(-relaxed.certificate.obj, relaxed.rounded->value);
    return relaxed;
  }
  SolverConfig rest = config;
  rest.max_time_s = std::max(
      0.0, config.max_time_s -
               std::chrono::duration<double>(Clock::now() - start).count());
  SolveReport rep = solve_sqkelr(inst, rest);
  rep.branch = "sqks->sqke";
  rep.wall_time_s += relaxed.wall_time_s;
  rep.iterations += relaxed.iterations;
  return rep;
}

} // namespace qksdp
