#pragma once

#include <cstdint>
#include <random>

#include "qksdp/geometry.hpp"
#include "qksdp/instance.hpp"
#include "qksdp/types.hpp"

namespace qksdp::testing {

/// Small random instance with integer data. `mixed` flips the sign of about
/// a third of the profit entries (symmetrically).
QkpInstance random_small_instance(std::mt19937_64 &rng, Index n, bool mixed,
                                  double density = 0.6);

/// Instance with the given dense profit matrix.
QkpInstance make_instance(const Matrix &C, const Vector &a, double tau);

/// Random point on the (scaled) variety of `inst`.
FactorPoint random_feasible_point(const Variety &var, Index r, std::uint64_t seed);

Matrix gaussian_matrix(std::mt19937_64 &rng, Index rows, Index cols);

/// Row-major vec of the (n + 1) constraint gradients of the variety at R.
Matrix dense_constraint_jacobian(const Matrix &R, const Vector &a, double tau,
                                 bool knapsack);

/// Projection onto the null space of the Jacobian by dense least squares.
Matrix dense_tangent_projection(const Matrix &R, const Vector &a, double tau,
                                bool knapsack, const Matrix &G);

/// First 0-based even / odd indicator vectors.
BinaryVector even_indicator(Index n);
BinaryVector odd_indicator(Index n);

} // namespace qksdp::testing
