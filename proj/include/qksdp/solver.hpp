#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qksdp/certify.hpp"
#include "qksdp/escape.hpp"
#include "qksdp/geometry.hpp"
#include "qksdp/instance.hpp"
#include "qksdp/rounding.hpp"

namespace qksdp {

enum class RankMode {
  Generic, // ceil(sqrt(2(n+1))) + 2
  Capped,  // min(20, generic)
};

/// Diagonal C -> 3, bandwidth k -> min(k + 3, generic), otherwise the mode's
/// bound. Never below 3.
Index select_rank(const QkpInstance &inst, RankMode mode = RankMode::Generic);

enum class SolveStatus { Converged, NonRegularOptimal, TimeLimit, Inconclusive };

std::string_view to_string(SolveStatus status);

struct LineSearchParams {
  double armijo_c = 1e-4;
  double rho = 0.5;
  int memory = 10;
  int max_backtracks = 30;
};

struct BbParams {
  double min_step = 1e-10;
  double max_step = 1e10;
};

/// Passed to SolverConfig::on_iterate after every accepted inner step.
struct IterateEvent {
  int outer = 0;
  long iteration = 0;
  const FactorPoint *point = nullptr;
  double f = 0.0;
  double f_outer = 0.0; // f_k of the current outer iteration
  double grad_norm = 0.0;
  double step = 0.0;
  int backtracks = 0;
  double delta = 0.0;
  double tolg = 0.0;
  double feas_error = 0.0;
  double feas_tol = 0.0;
};

struct SolverConfig {
  Index r = 0; // 0: select_rank
  RankMode rank_mode = RankMode::Generic;
  double tol_kkt = 1e-6;
  double tolg0 = 1e-6;
  double delta0 = 0.1;
  /// Also certify every this many accepted steps (interval doubles after each
  /// failed full check); 0 keeps only the gradient trigger.
  long kkt_check_every = 200;
  double max_time_s = 3600.0;
  int max_outer = 200;
  long max_inner = 1000000; // accepted inner steps over the whole run
  LineSearchParams ls;
  BbParams bb;
  std::uint64_t seed = 1;
  double init_perturbation = 0.05;
  RdMode rd_mode = RdMode::Auto;
  EscapeOptions escape;
  EscapeStepOptions escape_step;
  GeometryOptions geometry;
  bool round = true;
  std::ostream *log = nullptr;
  long log_every = 100;
  std::function<void(const IterateEvent &)> on_iterate;
};

struct SolveReport {
  KktCertificate certificate;
  Matrix R;
  SolveStatus status = SolveStatus::Inconclusive;
  VarietyKind variety = VarietyKind::Knapsack;
  std::string branch; // which relaxation produced the result
  Index rank = 0;
  long iterations = 0;
  int outer_iterations = 0;
  int escapes = 0;       // distinct non-regular points escaped from
  int escape_reuses = 0; // repeated visits that reused a cached direction
  int case1 = 0;         // rounded point not non-regular
  int kkt_checks = 0;
  double wall_time_s = 0.0;
  std::vector<double> outer_objectives;
  std::vector<BinaryVector> escaped_points;
  std::optional<RoundedSolution> rounded;
  std::string message;
};

/// Feasible starting point: rows x e1' + sqrt(x - x^2) u_i with u_i random
/// unit vectors orthogonal to e1 and x chosen to satisfy the knapsack row,
/// perturbed and restored onto the variety.
FactorPoint random_initial_point(const Variety &var, Index r, std::uint64_t seed,
                                 double perturbation = 0.05);

/// Outer/inner descent on K_{n,r}. `inst` may be unscaled; the solver works on the
/// scaled copy and keeps the original for exact non-regularity tests. The
/// certificate duals refer to the scaled instance.
SolveReport solve_sqkelr(const QkpInstance &inst, const SolverConfig &config,
                         const Matrix *R0 = nullptr);

/// Same machinery on the oblique variety (knapsack row dropped).
SolveReport solve_sqks(const QkpInstance &inst, const SolverConfig &config,
                       const Matrix *R0 = nullptr);

/// C >= 0: SQKE directly. Otherwise SQKS first, returned when its solution
/// satisfies a'Xa <= tau a'x, else SQKE.
SolveReport solve_pipeline(const QkpInstance &inst, const SolverConfig &config);

} // namespace qksdp
