#include "qksdp/instance.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <random>
#include <sstream>

namespace qksdp {

namespace {

bool is_integer_valued(double x) { return std::isfinite(x) && x == std::floor(x); }

std::string format_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

} // namespace

std::string_view to_string(InstanceFamily family) {
  switch (family) {
  case InstanceFamily::UncorrelatedLinear:
    return "uncorrelated-linear";
  case InstanceFamily::WeaklyCorrelatedLinear:
    return "weakly-correlated-linear";
  case InstanceFamily::StronglyCorrelatedLinear:
    return "strongly-correlated-linear";
  case InstanceFamily::RandomQkp:
    return "random-qkp";
  case InstanceFamily::SparseQkp:
    return "sparse-qkp";
  case InstanceFamily::NonregularConstruction:
    return "nonregular-construction";
  }
  return "unknown";
}

std::optional<InstanceFamily> parse_family(std::string_view name) {
  for (auto f : {InstanceFamily::UncorrelatedLinear,
                 InstanceFamily::WeaklyCorrelatedLinear,
                 InstanceFamily::StronglyCorrelatedLinear,
                 InstanceFamily::RandomQkp, InstanceFamily::SparseQkp,
                 InstanceFamily::NonregularConstruction}) {
    if (to_string(f) == name)
      return f;
  }
  return std::nullopt;
}

std::string_view to_string(ValidationIssue issue) {
  switch (issue) {
  case ValidationIssue::NonSymmetricC:
    return "NonSymmetricC";
  case ValidationIssue::WeightOutOfRange:
    return "WeightOutOfRange";
  case ValidationIssue::CapacityTooLarge:
    return "CapacityTooLarge";
  case ValidationIssue::DegenerateSize:
    return "DegenerateSize";
  }
  return "Unknown";
}

std::optional<InstanceFormat> parse_format(std::string_view name) {
  if (name == "knap-linear")
    return InstanceFormat::KnapLinear;
  if (name == "qkp-text")
    return InstanceFormat::QkpText;
  return std::nullopt;
}

bool QkpInstance::profit_nonnegative() const {
  for (Index k = 0; k < profit.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(profit, k); it; ++it)
      if (it.value() < 0.0)
        return false;
  return true;
}

bool QkpInstance::profit_diagonal() const { return bandwidth() == 0; }

Index QkpInstance::bandwidth() const {
  Index bw = 0;
  for (Index k = 0; k < profit.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(profit, k); it; ++it)
      if (it.value() != 0.0)
        bw = std::max<Index>(bw, std::abs(it.row() - it.col()));
  return bw;
}

double QkpInstance::profit_frobenius_norm() const { return profit.norm(); }

std::optional<Diagnostic> validate(const QkpInstance &inst) {
  const Index n = inst.size();
  if (n <= 1)
    return Diagnostic{ValidationIssue::DegenerateSize,
                      "instance needs at least two items, got n = " +
                          std::to_string(n)};
  if (inst.profit.rows() != n || inst.profit.cols() != n)
    return Diagnostic{ValidationIssue::NonSymmetricC,
                      "profit matrix is not n x n"};
  SparseMatrix transposed = inst.profit.transpose();
  SparseMatrix diff = inst.profit - transposed;
  for (Index k = 0; k < diff.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(diff, k); it; ++it)
      if (it.value() != 0.0)
        return Diagnostic{ValidationIssue::NonSymmetricC,
                          "profit matrix differs from its transpose at (" +
                              std::to_string(it.row() + 1) + ", " +
                              std::to_string(it.col() + 1) + ")"};
  const double tau = inst.capacity;
  for (Index i = 0; i < n; ++i) {
    const double ai = inst.weights(i);
    if (!(ai > 0.0) || !(ai < tau))
      return Diagnostic{ValidationIssue::WeightOutOfRange,
                        "weight a_" + std::to_string(i + 1) + " = " +
                            format_number(ai) +
                            " is not strictly inside (0, tau = " +
                            format_number(tau) + ")"};
  }
  if (!(inst.weights.sum() > tau))
    return Diagnostic{ValidationIssue::CapacityTooLarge,
                      "sum of weights " + format_number(inst.weights.sum()) +
                          " does not exceed tau = " + format_number(tau)};
  return std::nullopt;
}

QkpInstance scale(const QkpInstance &inst) {
  if (inst.capacity == 1.0)
    return inst;
  QkpInstance out = inst;
  out.weights = inst.weights / inst.capacity;
  out.capacity = 1.0;
  out.integral = false;
  return out;
}

namespace {

// Draws the upper triangle (diagonal included) of a random sparse profit
// matrix: each entry is nonzero with probability p, values uniform in
// [1, 100]. Skips are geometric so the cost is O(nnz), not O(n^2).
SparseMatrix random_profit(Index n, double p, std::mt19937_64 &rng) {
  std::vector<Triplet> triplets;
  const double expected = p * static_cast<double>(n) * (n + 1) / 2.0;
  triplets.reserve(static_cast<std::size_t>(2.2 * expected) + 16);
  std::uniform_int_distribution<int> value(1, 100);
  const std::uint64_t total =
      static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n + 1) / 2;
  std::geometric_distribution<std::uint64_t> skip(p);
  std::uint64_t pos = skip(rng);
  Index row = 0;
  std::uint64_t row_start = 0;
  while (pos < total) {
    while (pos >= row_start + static_cast<std::uint64_t>(n - row)) {
      row_start += static_cast<std::uint64_t>(n - row);
      ++row;
    }
    const Index col = row + static_cast<Index>(pos - row_start);
    const double v = value(rng);
    triplets.emplace_back(row, col, v);
    if (col != row)
      triplets.emplace_back(col, row, v);
    pos += 1 + skip(rng);
  }
  SparseMatrix C(n, n);
  C.setFromTriplets(triplets.begin(), triplets.end());
  C.makeCompressed();
  return C;
}

// Integer weights drawn from [1, hi], redrawn until some capacity strictly
// between max(a) and sum(a) exists on the integer grid.
Vector random_weights(Index n, int hi, std::mt19937_64 &rng) {
  std::uniform_int_distribution<int> w(1, hi);
  Vector a(n);
  for (int attempt = 0;; ++attempt) {
    for (Index i = 0; i < n; ++i)
      a(i) = w(rng);
    if (a.sum() - a.maxCoeff() >= 2.0 || attempt > 1000)
      return a;
  }
}

double capacity_from_beta(const Vector &a, double beta, bool integer) {
  const double total = a.sum();
  double tau = beta * total;
  if (integer)
    tau = std::ceil(tau);
  const double lo = a.maxCoeff() + 1.0;
  const double hi = total - 1.0;
  return std::clamp(tau, lo, hi);
}

QkpInstance linear_instance(const GeneratorSpec &spec, std::mt19937_64 &rng) {
  const Index n = spec.n;
  const int R = spec.linear_range;
  Vector a = random_weights(n, R, rng);
  Vector p(n);
  std::uniform_int_distribution<int> uni(1, R);
  for (Index i = 0; i < n; ++i) {
    switch (spec.family) {
    case InstanceFamily::UncorrelatedLinear:
      p(i) = uni(rng);
      break;
    case InstanceFamily::WeaklyCorrelatedLinear: {
      const int lo = std::max(1, static_cast<int>(a(i)) - R / 10);
      const int hi = static_cast<int>(a(i)) + R / 10;
      p(i) = std::uniform_int_distribution<int>(lo, hi)(rng);
      break;
    }
    default: // strongly correlated
      p(i) = a(i) + R / 10;
      break;
    }
  }
  QkpInstance inst;
  std::vector<Triplet> diag;
  diag.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    diag.emplace_back(i, i, p(i));
  inst.profit.resize(n, n);
  inst.profit.setFromTriplets(diag.begin(), diag.end());
  inst.profit.makeCompressed();
  inst.weights = std::move(a);
  inst.capacity = capacity_from_beta(inst.weights, spec.beta, true);
  inst.integral = true;
  return inst;
}

QkpInstance qkp_instance(Index n, double p, double beta, bool integer_tau,
                         std::mt19937_64 &rng) {
  QkpInstance inst;
  inst.weights = random_weights(n, 50, rng);
  inst.profit = random_profit(n, p, rng);
  inst.capacity = capacity_from_beta(inst.weights, beta, integer_tau);
  inst.integral = true;
  return inst;
}

} // namespace

QkpInstance generate(const GeneratorSpec &spec) {
  if (spec.n < 2)
    throw GeneratorError("generator needs n >= 2");
  if (!(spec.beta > 0.0 && spec.beta < 1.0))
    throw GeneratorError("beta must lie in (0, 1)");
  const bool needs_density = spec.family == InstanceFamily::RandomQkp ||
                             spec.family == InstanceFamily::NonregularConstruction;
  if (needs_density && !(spec.density > 0.0 && spec.density <= 1.0))
    throw GeneratorError("density p must lie in (0, 1]");
  if (spec.family == InstanceFamily::NonregularConstruction) {
    if (spec.n % 2 != 0)
      throw GeneratorError("OddNForConstruction: n must be even");
    if (spec.n < 4)
      throw GeneratorError("OddNForConstruction: n must be at least 4");
  }

  std::mt19937_64 rng(spec.seed);
  QkpInstance inst;
  double density = spec.density;
  switch (spec.family) {
  case InstanceFamily::UncorrelatedLinear:
  case InstanceFamily::WeaklyCorrelatedLinear:
  case InstanceFamily::StronglyCorrelatedLinear:
    inst = linear_instance(spec, rng);
    density = 1.0 / static_cast<double>(spec.n);
    break;
  case InstanceFamily::RandomQkp:
    inst = qkp_instance(spec.n, density, spec.beta, spec.integer_capacity, rng);
    break;
  case InstanceFamily::SparseQkp:
    density = std::min(1.0, std::log(static_cast<double>(spec.n)) /
                                static_cast<double>(spec.n));
    inst = qkp_instance(spec.n, density, spec.beta, spec.integer_capacity, rng);
    break;
  case InstanceFamily::NonregularConstruction: {
    QkpInstance base = qkp_instance(spec.n, density, spec.beta, false, rng);
    const Index n = spec.n;
    // 1-based "even" indices are the odd 0-based ones.
    Vector a(n);
    for (Index i = 0; i < n; ++i)
      a(i) = base.weights(2 * (i / 2) + 1);
    std::vector<Triplet> kept;
    for (Index k = 0; k < base.profit.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(base.profit, k); it; ++it)
        if (it.row() % 2 == 1 && it.col() % 2 == 1)
          kept.emplace_back(it.row(), it.col(), it.value());
    inst.profit.resize(n, n);
    inst.profit.setFromTriplets(kept.begin(), kept.end());
    inst.profit.makeCompressed();
    inst.weights = std::move(a);
    inst.capacity = inst.weights.sum() / 2.0;
    inst.integral = true;
    break;
  }
  }
  inst.meta.source = "generated";
  inst.meta.family = spec.family;
  inst.meta.seed = spec.seed;
  inst.meta.density = density;
  inst.meta.beta = spec.beta;
  return inst;
}

namespace {

class Tokenizer {
public:
  explicit Tokenizer(std::string text) : text_(std::move(text)) {}

  bool at_end() {
    skip_space();
    return pos_ >= text_.size();
  }

  double number(const char *what) {
    skip_space();
    if (pos_ >= text_.size())
      throw ParseError(std::string("unexpected end of input, expected ") + what,
                       line_, col_);
    const std::size_t start = pos_;
    const int line = line_, col = col_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
      ++col_;
    }
    double v = 0.0;
    const char *first = text_.data() + start;
    const char *last = text_.data() + pos_;
    if (*first == '+')
      ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
      throw ParseError(std::string("malformed number for ") + what + ": '" +
                           text_.substr(start, pos_ - start) + "'",
                       line, col);
    return v;
  }

  Index integer(const char *what) {
    const int line = line_, col = col_;
    const double v = number(what);
    if (!is_integer_valued(v))
      throw ParseError(std::string(what) + " must be an integer", line, col + 1);
    return static_cast<Index>(v);
  }

  int line() const { return line_; }
  int column() const { return col_; }

private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      if (text_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
  }

  std::string text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

} // namespace

QkpInstance read_instance(std::istream &in, InstanceFormat format) {
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  Tokenizer tok(std::move(text));
  const Index n = tok.integer("item count n");
  if (n < 0)
    throw ParseError("item count must be nonnegative", 1, 1);
  const double tau = tok.number("capacity tau");

  QkpInstance inst;
  inst.capacity = tau;
  inst.weights.resize(n);
  std::vector<Triplet> triplets;
  bool integral = true;

  if (format == InstanceFormat::KnapLinear) {
    for (Index i = 0; i < n; ++i) {
      const double p = tok.number("profit");
      const double w = tok.number("weight");
      integral = integral && is_integer_valued(p) && is_integer_valued(w);
      inst.weights(i) = w;
      if (p != 0.0)
        triplets.emplace_back(i, i, p);
    }
    // Anything after the n item lines (e.g. a solution line) is ignored.
  } else {
    for (Index i = 0; i < n; ++i) {
      inst.weights(i) = tok.number("weight");
      integral = integral && is_integer_valued(inst.weights(i));
    }
    std::vector<std::pair<Index, Index>> seen;
    while (!tok.at_end()) {
      const int line = tok.line();
      const Index i = tok.integer("row index i");
      const Index j = tok.integer("column index j");
      const double v = tok.number("value v");
      if (i < 1 || i > n || j < 1 || j > n)
        throw ParseError("index out of range 1.." + std::to_string(n), line, 1);
      if (i > j)
        throw ParseError("triplets must lie in the upper triangle (i <= j)",
                         line, 1);
      seen.emplace_back(i, j);
      integral = integral && is_integer_valued(v);
      if (v == 0.0)
        continue;
      triplets.emplace_back(i - 1, j - 1, v);
      if (i != j)
        triplets.emplace_back(j - 1, i - 1, v);
    }
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
      throw ParseError("duplicate triplet entry", tok.line(), 1);
  }
  inst.profit.resize(n, n);
  inst.profit.setFromTriplets(triplets.begin(), triplets.end());
  inst.profit.makeCompressed();
  inst.integral = integral;
  inst.meta.source = "stream";
  if (auto d = validate(inst))
    throw ValidationError(*d);
  return inst;
}

QkpInstance read_instance(const std::string &path, InstanceFormat format) {
  std::ifstream in(path);
  if (!in)
    throw ParseError("cannot open instance file '" + path + "'", 0, 0);
  QkpInstance inst = read_instance(in, format);
  inst.meta.source = "file:" + path;
  return inst;
}

void write_instance(std::ostream &out, const QkpInstance &inst,
                    InstanceFormat format) {
  const Index n = inst.size();
  out << n << ' ' << format_number(inst.capacity) << '\n';
  if (format == InstanceFormat::KnapLinear) {
    if (!inst.profit_diagonal())
      throw Error("knap-linear format needs a diagonal profit matrix");
    for (Index i = 0; i < n; ++i)
      out << format_number(inst.profit.coeff(i, i)) << ' '
          << format_number(inst.weights(i)) << '\n';
    return;
  }
  for (Index i = 0; i < n; ++i)
    out << (i ? " " : "") << format_number(inst.weights(i));
  out << '\n';
  for (Index k = 0; k < inst.profit.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(inst.profit, k); it; ++it)
      if (it.col() >= it.row() && it.value() != 0.0)
        out << it.row() + 1 << ' ' << it.col() + 1 << ' '
            << format_number(it.value()) << '\n';
}

double qkp_value(const QkpInstance &inst, const BinaryVector &x) {
  double value = 0.0;
  for (Index k = 0; k < inst.profit.outerSize(); ++k) {
    if (!x[static_cast<std::size_t>(k)])
      continue;
    for (SparseMatrix::InnerIterator it(inst.profit, k); it; ++it)
      if (x[static_cast<std::size_t>(it.col())])
        value += it.value();
  }
  return value;
}

double qkp_weight(const QkpInstance &inst, const BinaryVector &x) {
  double w = 0.0;
  for (Index i = 0; i < inst.size(); ++i)
    if (x[static_cast<std::size_t>(i)])
      w += inst.weights(i);
  return w;
}

} // namespace qksdp
