#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "qksdp/errors.hpp"
#include "qksdp/types.hpp"

namespace qksdp {

enum class InstanceFamily {
  UncorrelatedLinear,
  WeaklyCorrelatedLinear,
  StronglyCorrelatedLinear,
  RandomQkp,
  SparseQkp,
  NonregularConstruction,
};

std::string_view to_string(InstanceFamily family);
std::optional<InstanceFamily> parse_family(std::string_view name);

struct InstanceMeta {
  std::string source = "generated"; // "generated" or "file:<path>"
  std::optional<InstanceFamily> family;
  std::uint64_t seed = 0;
  double density = 0.0;
  double beta = 0.0;
};

/// Binary quadratic knapsack data: maximize x'Cx subject to a'x <= tau.
///
/// The profit matrix is stored with both triangles present. When `integral`
/// is set every entry of C and a holds an exact integer (exactly
/// representable in a double), so subset sums are exact and can be compared
/// to tau (which may be fractional) without tolerance.
struct QkpInstance {
  SparseMatrix profit;
  Vector weights;
  double capacity = 0.0;
  bool integral = false;
  InstanceMeta meta;

  Index size() const { return weights.size(); }
  bool profit_nonnegative() const;
  bool profit_diagonal() const;
  /// max |i - j| over stored nonzeros.
  Index bandwidth() const;
  double profit_frobenius_norm() const;
};

enum class ValidationIssue {
  NonSymmetricC,
  WeightOutOfRange,
  CapacityTooLarge,
  DegenerateSize,
};

std::string_view to_string(ValidationIssue issue);

struct Diagnostic {
  ValidationIssue issue;
  std::string message;
};

class ValidationError : public Error {
public:
  explicit ValidationError(Diagnostic d)
      : Error(d.message), diagnostic_(std::move(d)) {}
  const Diagnostic &diagnostic() const { return diagnostic_; }

private:
  Diagnostic diagnostic_;
};

/// Empty on success, otherwise the first violated condition.
std::optional<Diagnostic> validate(const QkpInstance &inst);

/// a <- a / tau, tau <- 1. C is left untouched.
QkpInstance scale(const QkpInstance &inst);

struct GeneratorSpec {
  InstanceFamily family = InstanceFamily::RandomQkp;
  Index n = 0;
  double density = 0.25;
  double beta = 0.5;
  std::uint64_t seed = 0;
  /// Round tau up to an integer (rounding-comparison experiments).
  bool integer_capacity = false;
  /// Coefficient range R of the linear families (items drawn from [1, R]).
  int linear_range = 1000;
};

/// Deterministic given the spec. Throws GeneratorError on an invalid spec.
QkpInstance generate(const GeneratorSpec &spec);

enum class InstanceFormat { KnapLinear, QkpText };

std::optional<InstanceFormat> parse_format(std::string_view name);

QkpInstance read_instance(std::istream &in, InstanceFormat format);
QkpInstance read_instance(const std::string &path, InstanceFormat format);
void write_instance(std::ostream &out, const QkpInstance &inst,
                    InstanceFormat format);

/// x'Cx for a binary x.
double qkp_value(const QkpInstance &inst, const BinaryVector &x);
/// a'x for a binary x.
double qkp_weight(const QkpInstance &inst, const BinaryVector &x);

} // namespace qksdp
