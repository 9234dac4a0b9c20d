#pragma once

#include <cstdint>
#include <utility>

#include "qksdp/instance.hpp"
#include "qksdp/types.hpp"

namespace qksdp {

/// Brute-force references for small instances. Everything here is assembled
/// densely and independently of the structured code paths it is used to check.

constexpr Index kOracleMaxItems = 20;

struct ExhaustiveResult {
  BinaryVector x;
  double value = 0.0;
  std::uint64_t feasible = 0; // number of feasible binaries
};

/// max x'Cx over binary x with a'x <= tau. Throws TooLarge for n > 20.
ExhaustiveResult exhaustive_qkp(const QkpInstance &inst);

/// (M, A) of the escape problem at v, built entry by entry.
std::pair<Matrix, Matrix> dense_escape_matrices(const Matrix &C, const Vector &a,
                                                double tau, const BinaryVector &v);

struct GridOracleResult {
  double alpha = 0.0;
  double value = 0.0; // max over the grid, refined by golden section
  double grid_value = 0.0;
};

/// max_alpha lambda_min(M - alpha A) on a uniform grid over [-span, span]
/// followed by golden-section refinement around the best grid point.
GridOracleResult escape_grid_oracle(const Matrix &M, const Matrix &A, double span,
                                    int points = 10000);

struct DenseKkt {
  double Rp = 0.0;
  double Rd = 0.0;
  double pdgap = 0.0;
  double min_eig = 0.0;
  double obj = 0.0;
};

/// Residues from the explicitly lifted Y = [e1 R']'[e1 R'] and the
/// explicitly assembled dual slack.
DenseKkt dense_kkt(const Matrix &R, const Vector &mu, double lambda, const Matrix &C,
                   const Vector &a, double tau);

} // namespace qksdp
