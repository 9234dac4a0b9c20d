#pragma once

#include "qksdp/instance.hpp"
#include "qksdp/types.hpp"

namespace qksdp {

struct RoundedSolution {
  BinaryVector x;
  double value = 0.0;  // x'Cx
  double weight = 0.0; // a'x
  double relgap = 0.0;
  bool feasible = false;
};

/// Sort Re1 descending (ties: smaller index first) and take the longest
/// prefix that fits the capacity. relgap is left at 0; see relgap().
RoundedSolution round_solution(const Matrix &R, const QkpInstance &inst);

/// |bound - value| / (1 + |value|), bound = <C, X> = -obj.
double relgap(double sdp_bound, double value);

} // namespace qksdp
