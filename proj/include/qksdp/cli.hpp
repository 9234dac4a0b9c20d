#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qksdp/instance.hpp"
#include "qksdp/solver.hpp"

namespace qksdp {

/// One CSV row per solve.
struct RunRecord {
  std::string instance;
  Index n = 0;
  double p = 0.0;
  double beta = 0.0;
  Index r = 0;
  double obj = 0.0;
  double Rp = 0.0;
  double Rd = 0.0;
  double pdgap = 0.0;
  double time_s = 0.0;
  std::string status;
  int escapes = 0;
  std::optional<double> relgap;
  std::optional<double> rounded_value;
};

std::string csv_header();
std::string csv_row(const RunRecord &rec);
RunRecord make_record(const std::string &id, const QkpInstance &inst,
                      const SolveReport &rep);

/// Machine-readable report: residues, duals and the full factor so the
/// certificate can be recomputed elsewhere.
std::string report_json(const std::string &id, const QkpInstance &inst,
                        const SolveReport &rep);

/// Exit codes: 0 success, 1 solve finished without a certificate,
/// 2 usage/parse/validation error, 3 oracle mismatch, 4 too large.
int run_cli(const std::vector<std::string> &args, std::ostream &out,
            std::ostream &err);
int run_cli(int argc, char **argv, std::ostream &out, std::ostream &err);

} // namespace qksdp
