#include "qksdp/rounding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace qksdp {

RoundedSolution round_solution(const Matrix &R, const QkpInstance &inst) {
  const Index n = inst.size();
  if (R.rows() != n)
    throw DimensionMismatch("rounding: factor rows differ from instance size");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index i, Index j) { return R(i, 0) > R(j, 0); });
  RoundedSolution out;
  out.x.assign(static_cast<std::size_t>(n), 0);
  double used = 0.0;
  for (Index i : order) {
    if (used + inst.weights(i) > inst.capacity)
      break;
    used += inst.weights(i);
    out.x[static_cast<std::size_t>(i)] = 1;
  }
  out.weight = qkp_weight(inst, out.x);
  out.value = qkp_value(inst, out.x);
  out.feasible = out.weight <= inst.capacity;
  return out;
}

double relgap(double sdp_bound, double value) {
  return std::abs(sdp_bound - value) / (1.0 + std::abs(value));
}

} // namespace qksdp
