#include "qksdp/cli.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "qksdp/certify.hpp"
#include "qksdp/escape.hpp"
#include "qksdp/oracle.hpp"

namespace qksdp {

using nlohmann::json;

namespace {

std::string fmt(const char *spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string_view knapsack_term_name(const SolveReport &rep) {
  if (rep.variety == VarietyKind::Oblique)
    return rep.branch == "sqks" ? "inequality" : "dropped";
  return "equality";
}

KnapsackTerm parse_knapsack_term(const std::string &s) {
  if (s == "inequality")
    return KnapsackTerm::Inequality;
  if (s == "dropped")
    return KnapsackTerm::Dropped;
  return KnapsackTerm::Equality;
}

} // namespace

std::string csv_header() {
  return "instance,n,p,beta,r,obj,Rp,Rd,pdgap,time_s,status,escapes,relgap,rounded_value";
}

std::string csv_row(const RunRecord &rec) {
  std::ostringstream os;
  os << rec.instance << ',' << rec.n << ',' << fmt("%.6g", rec.p) << ','
     << fmt("%.6g", rec.beta) << ',' << rec.r << ',' << fmt("%.10e", rec.obj) << ','
     << fmt("%.3e", rec.Rp) << ',' << fmt("%.3e", rec.Rd) << ','
     << fmt("%.3e", rec.pdgap) << ',' << fmt("%.3f", rec.time_s) << ',' << rec.status
     << ',' << rec.escapes << ',' << (rec.relgap ? fmt("%.3e", *rec.relgap) : "")
     << ',' << (rec.rounded_value ? fmt("%.17g", *rec.rounded_value) : "");
  return os.str();
}

RunRecord make_record(const std::string &id, const QkpInstance &inst,
                      const SolveReport &rep) {
  RunRecord rec;
  rec.instance = id;
  rec.n = inst.size();
  rec.p = inst.meta.density;
  rec.beta = inst.meta.beta;
  rec.r = rep.rank;
  rec.obj = rep.certificate.obj;
  rec.Rp = rep.certificate.Rp;
  rec.Rd = rep.certificate.Rd;
  rec.pdgap = rep.certificate.pdgap;
  rec.time_s = rep.wall_time_s;
  rec.status = std::string(to_string(rep.status));
  rec.escapes = rep.escapes;
  if (rep.rounded) {
    rec.relgap = rep.rounded->relgap;
    rec.rounded_value = rep.rounded->value;
  }
  return rec;
}

std::string report_json(const std::string &id, const QkpInstance &inst,
                        const SolveReport &rep) {
  const KktCertificate &c = rep.certificate;
  json j;
  j["instance"] = id;
  j["n"] = inst.size();
  j["r"] = rep.rank;
  j["status"] = std::string(to_string(rep.status));
  j["branch"] = rep.branch;
  j["message"] = rep.message;
  j["obj"] = c.obj;
  j["Rp"] = c.Rp;
  j["Rd"] = c.Rd;
  j["pdgap"] = c.pdgap;
  j["y"] = c.y;
  j["rd_mode"] = std::string(to_string(c.rd_mode));
  j["rd_converged"] = c.rd_converged;
  j["knapsack_term"] = std::string(knapsack_term_name(rep));
  j["duals_refer_to"] = "scaled instance (a/tau, tau = 1)";
  j["lambda"] = c.lambda;
  j["mu"] = std::vector<double>(c.mu.data(), c.mu.data() + c.mu.size());
  j["iterations"] = rep.iterations;
  j["outer_iterations"] = rep.outer_iterations;
  j["escapes"] = rep.escapes;
  j["kkt_checks"] = rep.kkt_checks;
  j["time_s"] = rep.wall_time_s;
  json rows = json::array();
  for (Index i = 0; i < rep.R.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(rep.R.cols()));
    for (Index k = 0; k < rep.R.cols(); ++k)
      row[static_cast<std::size_t>(k)] = rep.R(i, k);
    rows.push_back(std::move(row));
  }
  j["R"] = std::move(rows);
  if (rep.R.size() > 0) {
    j["R_summary"] = {{"frobenius", rep.R.norm()},
                      {"x_min", rep.R.col(0).minCoeff()},
                      {"x_max", rep.R.col(0).maxCoeff()}};
  }
  if (rep.rounded) {
    std::vector<Index> chosen;
    for (std::size_t i = 0; i < rep.rounded->x.size(); ++i)
      if (rep.rounded->x[i])
        chosen.push_back(static_cast<Index>(i) + 1);
    j["rounded"] = {{"items", chosen},
                    {"value", rep.rounded->value},
                    {"weight", rep.rounded->weight},
                    {"relgap", rep.rounded->relgap},
                    {"feasible", rep.rounded->feasible}};
  }
  return j.dump(1);
}

namespace {

struct GenFlags {
  std::string family;
  Index n = 0;
  double p = 0.25;
  double beta = 0.5;
  std::uint64_t seed = 1;
  bool integer_capacity = false;
  int linear_range = 1000;
};

struct InputFlags {
  std::string in;
  std::string format = "qkp-text";
  std::string generate;
  GenFlags gen;
};

struct SolveFlags {
  Index r = 0;
  std::string rank_mode = "generic";
  double tol = 1e-6;
  double delta0 = 0.1;
  double max_time = 3600.0;
  std::string rd_mode = "auto";
  bool round = true;
  bool verbose = false;
  std::string csv_out;
  std::string report_out;
};

void add_generator_flags(CLI::App *cmd, GenFlags &g) {
  cmd->add_option("--n", g.n, "number of items");
  cmd->add_option("--p", g.p, "density of the profit matrix");
  cmd->add_option("--beta", g.beta, "capacity ratio tau / sum(a)");
  cmd->add_option("--seed", g.seed, "random seed");
  cmd->add_flag("--integer-capacity", g.integer_capacity, "round tau up to an integer");
  cmd->add_option("--linear-range", g.linear_range, "coefficient range of linear families");
}

void add_input_flags(CLI::App *cmd, InputFlags &f) {
  cmd->add_option("--in", f.in, "instance file");
  cmd->add_option("--format", f.format, "knap-linear or qkp-text");
  cmd->add_option("--generate", f.generate, "generate an instance of this family");
  add_generator_flags(cmd, f.gen);
}

void add_solve_flags(CLI::App *cmd, SolveFlags &s) {
  cmd->add_option("--r", s.r, "factor rank (0 = automatic)");
  cmd->add_option("--rank-mode", s.rank_mode, "generic or capped");
  cmd->add_option("--tol", s.tol, "KKT tolerance");
  cmd->add_option("--delta0", s.delta0, "initial rounding radius");
  cmd->add_option("--max-time", s.max_time, "time limit in seconds");
  cmd->add_option("--rd-mode", s.rd_mode, "auto, full-eig or lambda-min");
  cmd->add_flag("--round,!--no-round", s.round, "report the rounded binary solution");
  cmd->add_flag("--verbose", s.verbose, "progress log on stderr");
  cmd->add_option("--csv-out", s.csv_out, "append the CSV row to this file");
  cmd->add_option("--report-out", s.report_out, "write the JSON report here");
}

GeneratorSpec to_spec(const GenFlags &g, const std::string &family) {
  auto fam = parse_family(family);
  if (!fam)
    throw Error("unknown family '" + family + "'");
  GeneratorSpec spec;
  spec.family = *fam;
  spec.n = g.n;
  spec.density = g.p;
  spec.beta = g.beta;
  spec.seed = g.seed;
  spec.integer_capacity = g.integer_capacity;
  spec.linear_range = g.linear_range;
  return spec;
}

std::pair<QkpInstance, std::string> load_instance(const InputFlags &f) {
  if (!f.generate.empty()) {
    QkpInstance inst = generate(to_spec(f.gen, f.generate));
    return {std::move(inst), f.generate + "-n" + std::to_string(f.gen.n) + "-s" +
                                 std::to_string(f.gen.seed)};
  }
  if (f.in.empty())
    throw Error("either --in or --generate is required");
  auto format = parse_format(f.format);
  if (!format)
    throw Error("unknown format '" + f.format + "'");
  QkpInstance inst = read_instance(f.in, *format);
  return {std::move(inst), std::filesystem::path(f.in).filename().string()};
}

SolverConfig to_config(const SolveFlags &s, std::uint64_t seed, std::ostream *log) {
  SolverConfig cfg;
  cfg.r = s.r;
  if (s.rank_mode == "capped")
    cfg.rank_mode = RankMode::Capped;
  else if (s.rank_mode != "generic")
    throw Error("unknown rank mode '" + s.rank_mode + "'");
  cfg.tol_kkt = s.tol;
  cfg.delta0 = s.delta0;
  cfg.max_time_s = s.max_time;
  auto rd = parse_rd_mode(s.rd_mode);
  if (!rd)
    throw Error("unknown rd mode '" + s.rd_mode + "'");
  cfg.rd_mode = *rd;
  cfg.round = s.round;
  cfg.seed = seed;
  cfg.log = s.verbose ? log : nullptr;
  return cfg;
}

bool solved(SolveStatus st) {
  return st == SolveStatus::Converged || st == SolveStatus::NonRegularOptimal;
}

void write_csv(const std::string &path, const std::vector<std::string> &rows,
               std::ostream &out) {
  if (path.empty()) {
    out << csv_header() << '\n';
    for (const auto &r : rows)
      out << r << '\n';
    return;
  }
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream f(path, std::ios::app);
  if (!f)
    throw Error("cannot write '" + path + "'");
  if (fresh)
    f << csv_header() << '\n';
  for (const auto &r : rows)
    f << r << '\n';
}

int cmd_generate(const InputFlags &f, const std::string &out_path,
                 const std::string &format_name, std::ostream &out) {
  if (f.generate.empty())
    throw Error("--family is required");
  QkpInstance inst = generate(to_spec(f.gen, f.generate));
  auto format = parse_format(format_name);
  if (!format)
    throw Error("unknown format '" + format_name + "'");
  if (out_path.empty()) {
    write_instance(out, inst, *format);
  } else {
    std::ofstream file(out_path);
    if (!file)
      throw Error("cannot write '" + out_path + "'");
    write_instance(file, inst, *format);
  }
  return 0;
}

int cmd_solve(const InputFlags &f, const SolveFlags &s, std::ostream &out,
              std::ostream &err) {
  auto [inst, id] = load_instance(f);
  const SolverConfig cfg = to_config(s, f.gen.seed, &err);
  const SolveReport rep = solve_pipeline(inst, cfg);
  const RunRecord rec = make_record(id, inst, rep);
  write_csv(s.csv_out, {csv_row(rec)}, out);
  if (!s.report_out.empty()) {
    std::ofstream file(s.report_out);
    if (!file)
      throw Error("cannot write '" + s.report_out + "'");
    file << report_json(id, inst, rep) << '\n';
  }
  if (!s.csv_out.empty())
    out << csv_row(rec) << '\n';
  return solved(rep.status) ? 0 : 1;
}

int cmd_certify(const InputFlags &f, const std::string &report_path, std::ostream &out) {
  auto [inst, id] = load_instance(f);
  std::ifstream file(report_path);
  if (!file)
    throw ParseError("cannot open report '" + report_path + "'", 0, 0);
  json j;
  try {
    file >> j;
  } catch (const json::exception &e) {
    throw ParseError(std::string("report is not valid JSON: ") + e.what(), 0, 0);
  }
  const auto rows = j.at("R").get<std::vector<std::vector<double>>>();
  const Index n = static_cast<Index>(rows.size());
  if (n != inst.size())
    throw DimensionMismatch("report factor has " + std::to_string(n) +
                            " rows, instance has " + std::to_string(inst.size()));
  const Index r = n ? static_cast<Index>(rows.front().size()) : 0;
  Matrix R(n, r);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < r; ++k)
      R(i, k) = rows[static_cast<std::size_t>(i)].at(static_cast<std::size_t>(k));
  const auto mu_v = j.at("mu").get<std::vector<double>>();
  DualVariables dual;
  dual.mu = Eigen::Map<const Vector>(mu_v.data(), static_cast<Index>(mu_v.size()));
  dual.lambda = j.at("lambda").get<double>();
  CertifyOptions opts;
  opts.rd_mode = parse_rd_mode(j.at("rd_mode").get<std::string>()).value_or(RdMode::Auto);
  opts.knapsack = parse_knapsack_term(j.value("knapsack_term", "equality"));
  opts.eig.seed = j.value("rd_seed", std::uint64_t{18});
  const KktCertificate c = kkt_residues(R, dual, scale(inst), opts);
  json o;
  o["instance"] = id;
  double worst = 0.0;
  for (const auto &[key, val] : {std::pair{"Rp", c.Rp}, std::pair{"Rd", c.Rd},
                                 std::pair{"pdgap", c.pdgap}, std::pair{"obj", c.obj}}) {
    const double stored = j.at(key).get<double>();
    o[key] = {{"stored", stored}, {"recomputed", val}};
    worst = std::max(worst, std::abs(stored - val) / (1.0 + std::abs(stored)));
  }
  o["max_relative_difference"] = worst;
  o["max_residue"] = c.max_residue();
  out << o.dump(1) << '\n';
  return worst <= 1e-12 ? 0 : 3;
}

int cmd_oracle(const InputFlags &f, const SolveFlags &s, std::ostream &out,
               std::ostream &err) {
  auto [inst, id] = load_instance(f);
  if (inst.size() > kOracleMaxItems)
    throw TooLarge("oracle limited to n <= " + std::to_string(kOracleMaxItems) +
                   ", got " + std::to_string(inst.size()));
  const ExhaustiveResult ex = exhaustive_qkp(inst);
  SolverConfig cfg = to_config(s, f.gen.seed, &err);
  cfg.round = true;
  const SolveReport rep = solve_pipeline(inst, cfg);
  const double bound = -rep.certificate.obj;
  const double rounded = rep.rounded ? rep.rounded->value : 0.0;
  const bool lower_ok = rounded <= ex.value;
  const bool upper_ok = ex.value <= bound + 1e-6 * (1.0 + std::abs(bound));

  const QkpInstance scaled = scale(inst);
  const Matrix Cd = Matrix(inst.profit);
  const DenseKkt dk = dense_kkt(rep.R, rep.certificate.mu, rep.certificate.lambda, Cd,
                                scaled.weights, scaled.capacity);

  const BinaryVector zero(static_cast<std::size_t>(inst.size()), 0);
  const EscapeProblem prob(scaled, zero, std::max<Index>(3, rep.rank));
  EscapeOptions eopts;
  eopts.stop_when_certified = false;
  const EscapeOutcome eo = solve_escape_sdp(prob, eopts);
  const auto [M, A] = dense_escape_matrices(Cd, scaled.weights, scaled.capacity, zero);
  const double span = 2.0 * std::max({1.0, std::abs(eo.bracket_lo), std::abs(eo.bracket_hi),
                                      std::abs(eo.dual_alpha)});
  const GridOracleResult grid = escape_grid_oracle(M, A, span);
  const double escape_diff = std::abs(grid.value - eo.dual_value);

  std::vector<Index> items;
  for (std::size_t i = 0; i < ex.x.size(); ++i)
    if (ex.x[i])
      items.push_back(static_cast<Index>(i) + 1);
  json o;
  o["instance"] = id;
  o["n"] = inst.size();
  o["optimum"] = {{"value", ex.value}, {"items", items}, {"feasible_count", ex.feasible}};
  o["solver"] = {{"status", std::string(to_string(rep.status))},
                 {"branch", rep.branch},
                 {"bound", bound},
                 {"rounded_value", rounded},
                 {"Rp", rep.certificate.Rp},
                 {"Rd", rep.certificate.Rd},
                 {"pdgap", rep.certificate.pdgap}};
  o["sandwich"] = {{"rounded_le_opt", lower_ok}, {"opt_le_bound", upper_ok}};
  o["dense_kkt"] = {{"Rp", dk.Rp}, {"Rd", dk.Rd}, {"pdgap", dk.pdgap}};
  o["escape_at_zero"] = {{"dual_value", eo.dual_value},
                         {"grid_value", grid.value},
                         {"difference", escape_diff}};
  out << o.dump(1) << '\n';
  return lower_ok && upper_ok && escape_diff <= 1e-6 ? 0 : 3;
}

struct BenchRun {
  InputFlags input;
  SolveFlags solve;
};

std::vector<BenchRun> read_suite(const std::string &path, const SolveFlags &defaults) {
  std::ifstream file(path);
  if (!file)
    throw ParseError("cannot open suite '" + path + "'", 0, 0);
  json j;
  try {
    file >> j;
  } catch (const json::exception &e) {
    throw ParseError(std::string("suite is not valid JSON: ") + e.what(), 0, 0);
  }
  std::vector<BenchRun> runs;
  const json &list = j.is_array() ? j : j.value("runs", json::array());
  for (const auto &e : list) {
    BenchRun b;
    b.solve = defaults;
    b.input.generate = e.value("family", "");
    b.input.in = e.value("in", "");
    b.input.format = e.value("format", "qkp-text");
    b.input.gen.n = e.value("n", Index{0});
    b.input.gen.p = e.value("p", 0.25);
    b.input.gen.beta = e.value("beta", 0.5);
    b.input.gen.seed = e.value("seed", std::uint64_t{1});
    b.input.gen.integer_capacity = e.value("integer_capacity", false);
    b.solve.r = e.value("r", defaults.r);
    b.solve.rank_mode = e.value("rank_mode", defaults.rank_mode);
    b.solve.max_time = e.value("max_time", defaults.max_time);
    b.solve.tol = e.value("tol", defaults.tol);
    b.solve.rd_mode = e.value("rd_mode", defaults.rd_mode);
    runs.push_back(std::move(b));
  }
  return runs;
}

int cmd_bench(const std::string &suite, const InputFlags &base,
              const std::vector<Index> &sizes, int seeds, const SolveFlags &s,
              std::ostream &out, std::ostream &err) {
  std::vector<BenchRun> runs;
  if (!suite.empty()) {
    runs = read_suite(suite, s);
  } else if (!base.generate.empty()) {
    for (Index n : sizes)
      for (int k = 1; k <= seeds; ++k) {
        BenchRun b{base, s};
        b.input.gen.n = n;
        b.input.gen.seed = static_cast<std::uint64_t>(k);
        runs.push_back(std::move(b));
      }
  }

  std::unique_ptr<std::ofstream> file;
  std::ostream *sink = &out;
  if (!s.csv_out.empty()) {
    file = std::make_unique<std::ofstream>(s.csv_out);
    if (!*file)
      throw Error("cannot write '" + s.csv_out + "'");
    sink = file.get();
  }
  *sink << csv_header() << '\n';
  sink->flush();

  int slots = 1;
  if (const char *env = std::getenv("QKSDP_THREADS")) {
    try {
      slots = std::max(1, std::stoi(env));
    } catch (const std::exception &) {
      slots = 1;
    }
  }
  slots = std::max(1, std::min<int>(slots, static_cast<int>(runs.size())));

  std::vector<std::optional<std::string>> rows(runs.size());
  std::vector<bool> ok(runs.size(), false);
  std::atomic<std::size_t> next{0};
  std::size_t flushed = 0;
  std::mutex mu;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next++;
      if (i >= runs.size())
        return;
      std::string row;
      bool good = false;
      try {
        auto [inst, id] = load_instance(runs[i].input);
        const SolverConfig cfg = to_config(runs[i].solve, runs[i].input.gen.seed, &err);
        const SolveReport rep = solve_pipeline(inst, cfg);
        row = csv_row(make_record(id, inst, rep));
        good = solved(rep.status);
      } catch (const std::exception &e) {
        RunRecord rec;
        rec.instance = runs[i].input.generate.empty() ? runs[i].input.in
                                                      : runs[i].input.generate;
        rec.n = runs[i].input.gen.n;
        rec.status = "Error";
        row = csv_row(rec);
        std::lock_guard<std::mutex> lock(mu);
        err << "bench run " << i + 1 << ": " << e.what() << '\n';
      }
      std::lock_guard<std::mutex> lock(mu);
      rows[i] = std::move(row);
      ok[i] = good;
      while (flushed < rows.size() && rows[flushed]) {
        *sink << *rows[flushed] << '\n';
        ++flushed;
      }
      sink->flush();
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < slots; ++t)
    pool.emplace_back(worker);
  worker();
  for (auto &t : pool)
    t.join();
  return std::all_of(ok.begin(), ok.end(), [](bool b) { return b; }) ? 0 : 1;
}

int report_error(std::ostream &err, const char *kind, const std::exception &e, int code) {
  err << kind << ": " << e.what() << '\n';
  return code;
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out,
            std::ostream &err) {
  CLI::App app{"Low-rank feasible solver for the quadratic knapsack SDP relaxation"};
  app.require_subcommand(1);

  InputFlags gen_in;
  std::string gen_out, gen_format = "qkp-text";
  auto *gen = app.add_subcommand("generate", "write a generated instance");
  gen->add_option("--family", gen_in.generate, "instance family")->required();
  gen->add_option("--out", gen_out, "output file (default stdout)");
  gen->add_option("--format", gen_format, "knap-linear or qkp-text");
  add_generator_flags(gen, gen_in.gen);

  InputFlags solve_in;
  SolveFlags solve_fl;
  auto *solve = app.add_subcommand("solve", "solve an instance and report residues");
  add_input_flags(solve, solve_in);
  add_solve_flags(solve, solve_fl);

  InputFlags cert_in;
  std::string cert_report;
  auto *cert = app.add_subcommand("certify", "recompute residues from a JSON report");
  add_input_flags(cert, cert_in);
  cert->add_option("--report", cert_report, "report written by solve --report-out")
      ->required();

  InputFlags oracle_in;
  SolveFlags oracle_fl;
  auto *oracle = app.add_subcommand("oracle", "compare against brute-force references");
  add_input_flags(oracle, oracle_in);
  add_solve_flags(oracle, oracle_fl);

  InputFlags bench_in;
  SolveFlags bench_fl;
  std::string suite;
  std::vector<Index> sizes;
  int seeds = 1;
  auto *bench = app.add_subcommand("bench", "run a suite and emit a CSV table");
  bench->add_option("--suite", suite, "JSON suite file");
  bench->add_option("--family", bench_in.generate, "family for flag-defined suites");
  bench->add_option("--sizes", sizes, "item counts for flag-defined suites");
  bench->add_option("--seeds", seeds, "seeds 1..k per size");
  add_generator_flags(bench, bench_in.gen);
  add_solve_flags(bench, bench_fl);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp &e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError &e) {
    err << "usage error: " << e.what() << '\n' << app.help();
    return 2;
  }

  try {
    if (*gen)
      return cmd_generate(gen_in, gen_out, gen_format, out);
    if (*solve)
      return cmd_solve(solve_in, solve_fl, out, err);
    if (*cert)
      return cmd_certify(cert_in, cert_report, out);
    if (*oracle)
      return cmd_oracle(oracle_in, oracle_fl, out, err);
    if (*bench)
      return cmd_bench(suite, bench_in, sizes, seeds, bench_fl, out, err);
  } catch (const ParseError &e) {
    return report_error(err, "ParseError", e, 2);
  } catch (const ValidationError &e) {
    return report_error(err, "ValidationError", e, 2);
  } catch (const GeneratorError &e) {
    return report_error(err, "GeneratorError", e, 2);
  } catch (const TooLarge &e) {
    return report_error(err, "TooLarge", e, 4);
  } catch (const std::exception &e) {
    return report_error(err, "Error", e, 2);
  }
  return 2;
}

int run_cli(int argc, char **argv, std::ostream &out, std::ostream &err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i)
    args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

} // namespace qksdp
