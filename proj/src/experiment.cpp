#include "tbctl/experiment.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <iomanip>
#include <set>
#include <sstream>
#include <unsupported/Eigen/MatrixFunctions>

#include "tbctl/terminal_synthesis.hpp"

namespace tbctl {

namespace fs = std::filesystem;

// --- discretization -------------------------------------------------------

Discretized discretize_zoh(const Matrix& A, const Matrix& B, double dt) {
  const auto n = A.rows();
  const auto m = B.cols();
  require(A.cols() == n && B.rows() == n, ErrorCode::DimensionMismatch,
          "discretize_zoh: A must be square and B must have as many rows as A");
  require(std::isfinite(dt) && dt > 0.0, ErrorCode::InvalidArgument, "sampling time must be positive");
  Matrix aug = Matrix::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = A * dt;
  aug.topRightCorner(n, m) = B * dt;
  const Matrix e = aug.exp();
  return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

// --- config parsing -------------------------------------------------------

namespace {

[[noreturn]] void config_fail(const std::string& field, const std::string& what) {
  fail(ErrorCode::ConfigError, field + ": " + what);
}

YAML::Node need(const YAML::Node& node, const std::string& key, const std::string& path) {
  const std::string field = path.empty() ? key : path + "." + key;
  if (!node.IsMap() || !node[key]) config_fail(field, "missing");
  return node[key];
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

double as_double(const YAML::Node& node, const std::string& field) {
  if (!node.IsScalar()) config_fail(field, "expected a number");
  try {
    return node.as<double>();
  } catch (const YAML::Exception&) {
    config_fail(field, "expected a number, got '" + node.Scalar() + "'");
  }
}

long long as_integer(const YAML::Node& node, const std::string& field) {
  if (!node.IsScalar()) config_fail(field, "expected an integer");
  try {
    return node.as<long long>();
  } catch (const YAML::Exception&) {
    config_fail(field, "expected an integer, got '" + node.Scalar() + "'");
  }
}

Vector as_vector(const YAML::Node& node, const std::string& field, long expected = -1) {
  if (!node.IsSequence()) config_fail(field, "expected a list of numbers");
  Vector v(static_cast<Eigen::Index>(node.size()));
  for (std::size_t i = 0; i < node.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = as_double(node[i], field + "[" + std::to_string(i) + "]");
  }
  if (expected >= 0 && v.size() != expected) {
    config_fail(field, "expected " + std::to_string(expected) + " entries, got " +
                           std::to_string(v.size()));
  }
  return v;
}

// Row-major nested lists; a scalar s stands for s * I when the size is known.
Matrix as_matrix(const YAML::Node& node, const std::string& field, long rows = -1, long cols = -1) {
  if (node.IsScalar()) {
    if (rows < 0 || rows != cols) config_fail(field, "a scalar is only allowed for square weights");
    return as_double(node, field) * Matrix::Identity(rows, cols);
  }
  if (!node.IsSequence() || node.size() == 0) config_fail(field, "expected a list of rows");
  const auto r = static_cast<long>(node.size());
  long c = -1;
  Matrix M;
  for (long i = 0; i < r; ++i) {
    const std::string row_field = field + "[" + std::to_string(i) + "]";
    const Vector row = as_vector(node[i], row_field);
    if (c < 0) {
      c = row.size();
      if (c == 0) config_fail(row_field, "empty row");
      M.resize(r, c);
    } else if (row.size() != c) {
      config_fail(row_field, "ragged matrix");
    }
    M.row(i) = row.transpose();
  }
  if ((rows >= 0 && M.rows() != rows) || (cols >= 0 && M.cols() != cols)) {
    std::ostringstream os;
    os << "expected " << rows << "x" << cols << ", got " << M.rows() << "x" << M.cols();
    config_fail(field, os.str());
  }
  return M;
}

std::optional<Box> as_box(const YAML::Node& parent, const std::string& key, const std::string& path,
                          long dim) {
  if (!parent[key]) return std::nullopt;
  const std::string field = join(path, key);
  const YAML::Node node = parent[key];
  Box box{as_vector(need(node, "lower", field), field + ".lower", dim),
          as_vector(need(node, "upper", field), field + ".upper", dim)};
  return box;
}

template <class F>
auto guarded(const std::string& field, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    config_fail(field, e.what());
  }
}

void parse_plant(const YAML::Node& root, const fs::path& base_dir, ExperimentConfig& cfg) {
  YAML::Node plant = need(root, "plant", "");
  std::string path = "plant";
  if (plant["file"]) {
    const fs::path file = base_dir / plant["file"].as<std::string>();
    try {
      plant = YAML::LoadFile(file.string());
    } catch (const YAML::Exception& e) {
      config_fail("plant.file", "cannot read '" + file.string() + "': " + e.what());
    }
    path = file.filename().string();
  }
  Matrix A = as_matrix(need(plant, "A", path), join(path, "A"));
  if (A.rows() != A.cols()) config_fail(join(path, "A"), "must be square");
  Matrix B = as_matrix(need(plant, "B", path), join(path, "B"), A.rows());
  if (plant["dt"]) {
    const double dt = as_double(plant["dt"], join(path, "dt"));
    const Discretized d = guarded(join(path, "dt"), [&] { return discretize_zoh(A, B, dt); });
    A = d.A;
    B = d.B;
  }
  cfg.A = std::move(A);
  cfg.B = std::move(B);
  cfg.state_bounds = as_box(plant, "state_bounds", path, cfg.A.rows());
  cfg.input_bounds = as_box(plant, "input_bounds", path, cfg.B.cols());
  guarded(path, [&] {
    (void)cfg.plant();
    return 0;
  });
}

SetupVariant parse_variant(const YAML::Node& node) {
  if (!node) return SetupVariant::BucketOnly;
  const std::string s = node.as<std::string>();
  if (s == "bucket_only") return SetupVariant::BucketOnly;
  if (s == "direct_link") return SetupVariant::DirectLink;
  config_fail("setup", "expected bucket_only or direct_link, got '" + s + "'");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    config_fail("<document>", e.what());
  }
  if (!root.IsMap()) config_fail("<document>", "expected a mapping at the top level");

  ExperimentConfig cfg;
  if (root["label"]) cfg.label = root["label"].as<std::string>();
  parse_plant(root, base_dir, cfg);
  const long n = cfg.A.rows();
  const long m = cfg.B.cols();

  const YAML::Node bucket = need(root, "bucket", "");
  cfg.b = static_cast<int>(as_integer(need(bucket, "b", "bucket"), "bucket.b"));
  cfg.c = static_cast<int>(as_integer(need(bucket, "c", "bucket"), "bucket.c"));
  cfg.g = static_cast<int>(as_integer(need(bucket, "g", "bucket"), "bucket.g"));
  if (bucket["r"]) cfg.r = static_cast<int>(as_integer(bucket["r"], "bucket.r"));
  const TokenBucketSpec spec = guarded("bucket", [&] { return cfg.spec(); });

  cfg.variant = parse_variant(root["setup"]);

  const YAML::Node w = need(root, "weights", "");
  cfg.weights.Q = as_matrix(need(w, "Q", "weights"), "weights.Q", n, n);
  cfg.weights.R = as_matrix(need(w, "R", "weights"), "weights.R", m, m);
  cfg.weights.S = w["S"] ? as_matrix(w["S"], "weights.S", m, m) : Matrix(0.5 * cfg.weights.R);
  cfg.weights.sigma = w["sigma"] ? as_double(w["sigma"], "weights.sigma") : 0.0;
  cfg.weights.psi = w["psi"] ? as_double(w["psi"], "weights.psi") : 0.0;
  guarded("weights", [&] {
    cfg.weights.validate(cfg.variant, static_cast<int>(n), static_cast<int>(m));
    return 0;
  });

  cfg.N = static_cast<int>(as_integer(need(need(root, "horizon", ""), "N", "horizon"), "horizon.N"));
  if (cfg.N < spec.M()) config_fail("horizon.N", "must be at least M = " + std::to_string(spec.M()));
  if (cfg.variant == SetupVariant::DirectLink) {
    if (spec.q() < 2) config_fail("bucket", "direct-link setup needs q >= 2");
    if (cfg.N % spec.q() != 0) config_fail("horizon.N", "must be a multiple of q in the direct-link setup");
  }

  const YAML::Node init = need(root, "initial", "");
  cfg.initial.x_p = as_vector(need(init, "x_p", "initial"), "initial.x_p", n);
  cfg.initial.u_s = init["u_s"] ? as_vector(init["u_s"], "initial.u_s", m) : Vector(Vector::Zero(m));
  cfg.initial.beta =
      init["beta"] ? static_cast<int>(as_integer(init["beta"], "initial.beta")) : spec.b();
  if (!spec.valid_level(cfg.initial.beta)) config_fail("initial.beta", "outside [0, b]");

  const YAML::Node sc = need(root, "scenario", "");
  cfg.duration = static_cast<int>(as_integer(need(sc, "duration", "scenario"), "scenario.duration"));
  if (cfg.duration <= 0) config_fail("scenario.duration", "must be positive");
  if (sc["set_points"]) {
    const YAML::Node list = sc["set_points"];
    if (!list.IsSequence()) config_fail("scenario.set_points", "expected a list");
    std::int64_t last = 0;
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string field = "scenario.set_points[" + std::to_string(i) + "]";
      SetPointChange c;
      c.step = as_integer(need(list[i], "step", field), field + ".step");
      if (c.step <= last || c.step >= cfg.duration) {
        config_fail(field + ".step", "must be increasing and inside the run");
      }
      if (c.step % spec.M() != 0) config_fail(field + ".step", "must be a multiple of M");
      c.x_ref = as_vector(need(list[i], "x_ref", field), field + ".x_ref", n);
      if (list[i]["u_ref"]) c.u_ref = as_vector(list[i]["u_ref"], field + ".u_ref", m);
      const PlantModel plant = cfg.plant();
      guarded(field, [&] {
        const Vector u = equilibrium_input(plant, c.x_ref, c.u_ref);
        (void)plant.translated(c.x_ref, u);
        return 0;
      });
      last = c.step;
      cfg.changes.push_back(std::move(c));
    }
  }
  if (sc["tail_fraction"]) {
    cfg.tail_fraction = as_double(sc["tail_fraction"], "scenario.tail_fraction");
    if (!(cfg.tail_fraction > 0.0 && cfg.tail_fraction <= 1.0)) {
      config_fail("scenario.tail_fraction", "must lie in (0, 1]");
    }
  }

  if (const YAML::Node t = root["terminal"]) {
    if (t["tolerance"]) cfg.terminal_tol = as_double(t["tolerance"], "terminal.tolerance");
    if (t["samples"]) cfg.certification_samples = static_cast<int>(as_integer(t["samples"], "terminal.samples"));
    if (!(cfg.terminal_tol > 0.0)) config_fail("terminal.tolerance", "must be positive");
    if (cfg.certification_samples < 0) config_fail("terminal.samples", "must be nonnegative");
  }
  if (const YAML::Node o = root["output"]) {
    if (o["dir"]) cfg.out_dir = o["dir"].as<std::string>();
  }
  if (root["seed"]) cfg.seed = static_cast<std::uint64_t>(as_integer(root["seed"], "seed"));
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ConfigError, "cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg = parse_config(ss.str(), path.parent_path().empty() ? fs::path(".") : path.parent_path());
  cfg.source = path;
  if (cfg.label.empty()) cfg.label = path.stem().string();
  return cfg;
}

RolloutProblem build_problem(const ExperimentConfig& cfg) {
  const PlantModel plant = cfg.plant();
  const TokenBucketSpec spec = cfg.spec();
  RolloutProblem p{plant,
                   spec,
                   cfg.variant,
                   cfg.weights,
                   synthesize_terminal(plant, cfg.weights.Q, cfg.weights.R, spec.q()),
                   cfg.N,
                   spec.M()};
  p.terminal_tol = cfg.terminal_tol;
  p.validate();
  return p;
}

Scenario build_scenario(const ExperimentConfig& cfg) {
  return {cfg.initial, cfg.duration, cfg.changes};
}

// --- CSV ------------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trace_csv(std::ostream& os, const Trace& trace) {
  if (trace.empty()) return;
  const auto n = trace.front().x.x_p.size();
  const auto m = trace.front().x.u_s.size();
  os << "k";
  for (Eigen::Index i = 0; i < n; ++i) os << ",x_p[" << i << "]";
  for (Eigen::Index i = 0; i < m; ++i) os << ",u_s[" << i << "]";
  os << ",beta,gamma,delta";
  for (Eigen::Index i = 0; i < m; ++i) os << ",u_applied[" << i << "]";
  os << ",stage_cost,cum_cost,V_star,V_bar_star,beta_pred_terminal\n";
  for (const TraceRecord& r : trace) {
    os << r.k;
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << format_double(r.x.x_p(i));
    for (Eigen::Index i = 0; i < m; ++i) os << ',' << format_double(r.x.u_s(i));
    os << ',' << r.x.beta << ',' << int(r.u_applied.gamma) << ',' << int(r.u_applied.delta);
    const Vector u_p = applied_input(r.x, r.u_applied);
    for (Eigen::Index i = 0; i < m; ++i) os << ',' << format_double(u_p(i));
    os << ',' << format_double(r.stage_cost) << ',' << format_double(r.cumulative_cost) << ',';
    if (r.V_star) os << format_double(*r.V_star);
    os << ',';
    if (r.V_bar_star) os << format_double(*r.V_bar_star);
    os << ',';
    if (r.beta_pred_terminal) os << *r.beta_pred_terminal;
    os << '\n';
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    fail(ErrorCode::ConfigError, "csv line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

long long parse_int(const std::string& s, std::size_t line) {
  const double v = parse_number(s, line);
  if (v != std::floor(v)) {
    fail(ErrorCode::ConfigError, "csv line " + std::to_string(line) + ": expected an integer");
  }
  return static_cast<long long>(v);
}

}  // namespace

Trace read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) return {};
  const std::vector<std::string> header = split_csv(line);
  long n = 0;
  long m = 0;
  for (const std::string& h : header) {
    if (h.rfind("x_p[", 0) == 0) ++n;
    if (h.rfind("u_s[", 0) == 0) ++m;
  }
  const std::size_t width = 1 + n + m + 3 + m + 5;
  if (header.size() != width || header.front() != "k") {
    fail(ErrorCode::ConfigError, "csv header does not match the trace schema");
  }
  Trace trace;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv(line);
    if (f.size() != width) {
      fail(ErrorCode::ConfigError, "csv line " + std::to_string(line_no) + ": wrong field count");
    }
    std::size_t j = 0;
    TraceRecord r;
    r.k = parse_int(f[j++], line_no);
    r.x.x_p.resize(n);
    r.x.u_s.resize(m);
    for (long i = 0; i < n; ++i) r.x.x_p(i) = parse_number(f[j++], line_no);
    for (long i = 0; i < m; ++i) r.x.u_s(i) = parse_number(f[j++], line_no);
    r.x.beta = static_cast<int>(parse_int(f[j++], line_no));
    r.u_applied.gamma = parse_int(f[j++], line_no) != 0;
    r.u_applied.delta = parse_int(f[j++], line_no) != 0;
    Vector u_p(m);
    for (long i = 0; i < m; ++i) u_p(i) = parse_number(f[j++], line_no);
    r.u_applied.u_c = r.u_applied.transmits() ? u_p : Vector(Vector::Zero(m));
    r.stage_cost = parse_number(f[j++], line_no);
    r.cumulative_cost = parse_number(f[j++], line_no);
    if (!f[j].empty()) r.V_star = parse_number(f[j], line_no);
    ++j;
    if (!f[j].empty()) r.V_bar_star = parse_number(f[j], line_no);
    ++j;
    if (!f[j].empty()) r.beta_pred_terminal = static_cast<int>(parse_int(f[j], line_no));
    r.x_ref = Vector::Zero(n);
    r.u_ref = Vector::Zero(m);
    if (!r.u_applied.transmits() && u_p != r.x.u_s) {
      fail(ErrorCode::ConfigError,
           "csv line " + std::to_string(line_no) + ": applied input differs from the held input");
    }
    trace.push_back(std::move(r));
  }
  return trace;
}

bool trace_rows_valid(const Trace& trace, const TokenBucketSpec& spec, SetupVariant variant) {
  double cum = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const TraceRecord& r = trace[i];
    if (!spec.valid_level(r.x.beta)) return false;
    if (r.u_applied.gamma && r.u_applied.delta) return false;
    const bool want_delta = variant == SetupVariant::DirectLink && periodic_delta(spec, r.k);
    if (r.u_applied.delta != want_delta) return false;
    if (!(r.stage_cost >= 0.0)) return false;
    cum += r.stage_cost;
    if (std::abs(cum - r.cumulative_cost) > 1e-12 * (1.0 + std::abs(cum))) return false;
    if (i + 1 < trace.size()) {
      const TraceRecord& next = trace[i + 1];
      if (next.k != r.k + 1) return false;
      if (next.x.u_s != applied_input(r.x, r.u_applied)) return false;
      const int beta = bucket_level_after(spec, variant, r.x.beta, r.u_applied.gamma, r.u_applied.delta);
      if (beta != next.x.beta) return false;
    }
  }
  return true;
}

// --- commands -------------------------------------------------------------

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::LengthMismatch:
      return kExitConfig;
    case ErrorCode::Infeasible:
    case ErrorCode::InitialInfeasible:
    case ErrorCode::InternalFeasibilityLoss:
      return kExitInfeasible;
    case ErrorCode::CertificationFailed:
    case ErrorCode::NonConvergent:
      return kExitCertification;
    default:
      return kExitFailure;
  }
}

namespace {

const char* pass_fail(bool ok) { return ok ? "pass" : "FAIL"; }
const char* yes_no(bool ok) { return ok ? "yes" : "no"; }

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::ConfigError, "cannot write '" + path.string() + "'");
  out << content;
}

std::string plot_script(const std::string& csv_name, long n, long m) {
  const long beta_col = 2 + n + m;
  const long cum_col = beta_col + 3 + m + 2;
  std::ostringstream os;
  os << "set datafile separator ','\n"
     << "set key autotitle columnhead\n"
     << "set xlabel 'k'\n"
     << "set multiplot layout 2,1\n"
     << "set ylabel 'bucket level'\n"
     << "plot '" << csv_name << "' using 1:" << beta_col << " with steps\n"
     << "set ylabel 'cumulated cost'\n"
     << "plot '" << csv_name << "' using 1:" << cum_col << " with lines\n"
     << "unset multiplot\n";
  return os.str();
}

std::string summary_text(const ExperimentConfig& cfg, const SimulationOutput& out) {
  std::ostringstream os;
  os << "label: " << cfg.label << "\n"
     << "setup: " << to_string(cfg.variant) << "\n"
     << "steps: " << out.trace.size() << "\n"
     << "cumulated cost: " << format_double(out.trace.empty() ? 0.0 : out.trace.back().cumulative_cost)
     << "\n"
     << "sector (last " << cfg.tail_fraction << " of the run, from k=" << out.sector.tail_start
     << "): all steps [" << out.sector.lower_all << ", " << out.sector.upper << "] min "
     << out.sector.min_beta_all << " " << pass_fail(out.sector.all_in_sector)
     << "; solve instants [" << out.sector.lower_solve << ", " << out.sector.upper << "] min "
     << out.sector.min_beta_solve << " " << pass_fail(out.sector.solve_in_sector) << "\n"
     << "traffic: " << out.traffic.transmissions << " bucket transmissions in " << out.traffic.steps
     << " steps, rate " << out.traffic.achieved_rate << " (bound " << out.traffic.rate_bound << ") "
     << pass_fail(out.traffic.passed()) << "\n"
     << "decrease monitor: " << out.decrease.pairs_checked << " pairs, " << out.decrease.violations
     << " violations, worst slack " << format_double(out.decrease.worst_slack) << " "
     << pass_fail(out.decrease.passed()) << "\n";
  return os.str();
}

}  // namespace

CommandResult cmd_check_spec(const ExperimentConfig& cfg) {
  const TokenBucketSpec spec = cfg.spec();
  const InterTransmissionBound itb = inter_transmission_bound(spec);
  std::ostringstream os;
  bool ok = true;
  os << "q = " << spec.q() << "\n"
     << "M = " << spec.M() << "\n"
     << "rate bound g/c = " << spec.g() << "/" << spec.c() << " = " << spec.rate_bound() << "\n"
     << "inter-transmission margin qg - c = " << itb.qg_minus_c << " "
     << pass_fail(itb.qg_minus_c >= 1) << "\n"
     << "c/g not an integer: " << pass_fail(itb.ratio_not_integer) << "\n";
  ok = ok && itb.ratio_not_integer && itb.qg_minus_c >= 1;
  if (cfg.variant == SetupVariant::DirectLink) {
    try {
      const double threshold = brim_weight_threshold(spec, cfg.weights.psi);
      const bool pass = cfg.weights.sigma >= threshold;
      os << "brim weight: sigma = " << format_double(cfg.weights.sigma)
         << " >= " << format_double(threshold) << " " << pass_fail(pass) << "\n";
      ok = ok && pass;
    } catch (const Error& e) {
      os << "brim weight: FAIL (" << e.what() << ")\n";
      ok = false;
    }
  } else {
    os << "brim weight: not applicable (bucket-only setup)\n";
  }
  const int lo_all = std::max(0, spec.b() - cfg.N * spec.g());
  const int lo_solve = std::max(0, spec.b() - (cfg.N - spec.M()) * spec.g());
  os << "sector, all steps: [" << lo_all << ", " << spec.b() << "]\n"
     << "sector, solve instants: [" << lo_solve << ", " << spec.b() << "]\n";
  RolloutProblem shell{cfg.plant(), spec, cfg.variant, cfg.weights, {}, cfg.N, spec.M()};
  const StabilityPreconditions pre = stability_preconditions(shell);
  os << "stability checklist (informational):\n"
     << "  N multiple of M: " << yes_no(pre.horizon_multiple) << "\n"
     << "  input set compact: " << yes_no(pre.inputs_compact) << "\n"
     << "  g >= 2: " << yes_no(pre.refill_at_least_two) << "\n"
     << "  origin interior: " << yes_no(pre.origin_interior) << "\n"
     << "result: " << (ok ? "pass" : "FAIL") << "\n";
  return {ok ? kExitOk : kExitCertification, os.str(), {}};
}

SimulationOutput simulate(const ExperimentConfig& cfg) {
  const RolloutProblem problem = build_problem(cfg);
  SimulationOutput out;
  out.trace = run_closed_loop(problem, build_scenario(cfg));
  out.sector = convergence_sector_check(out.trace, problem.spec, problem.N, problem.M, cfg.tail_fraction);
  out.traffic = traffic_audit(out.trace, problem.spec);
  out.decrease = decrease_monitor(out.trace, problem.weights, problem.spec, problem.variant);
  return out;
}

namespace {

std::vector<fs::path> write_outputs(const ExperimentConfig& cfg, const SimulationOutput& out,
                                    const fs::path& dir, bool emit_plot) {
  fs::create_directories(dir);
  std::vector<fs::path> files;
  std::ostringstream csv;
  write_trace_csv(csv, out.trace);
  const fs::path csv_path = dir / (cfg.label + ".csv");
  write_file(csv_path, csv.str());
  files.push_back(csv_path);
  const fs::path summary_path = dir / (cfg.label + ".summary.txt");
  write_file(summary_path, summary_text(cfg, out));
  files.push_back(summary_path);
  if (emit_plot) {
    const fs::path gp = dir / (cfg.label + ".gp");
    write_file(gp, plot_script(csv_path.filename().string(), cfg.A.rows(), cfg.B.cols()));
    files.push_back(gp);
  }
  return files;
}

}  // namespace

CommandResult cmd_simulate(const ExperimentConfig& cfg, const fs::path& out_dir, bool emit_plot) {
  const SimulationOutput out = simulate(cfg);
  CommandResult res;
  res.files = write_outputs(cfg, out, out_dir, emit_plot);
  res.report = summary_text(cfg, out);
  return res;
}

CommandResult cmd_compare(const std::vector<ExperimentConfig>& cfgs, const fs::path& out_dir,
                          bool emit_plot) {
  require(cfgs.size() >= 2, ErrorCode::ConfigError, "compare needs at least two configs");
  std::set<std::string> labels;
  for (const ExperimentConfig& c : cfgs) {
    if (!labels.insert(c.label).second) fail(ErrorCode::ConfigError, "duplicate label '" + c.label + "'");
    if (c.duration != cfgs.front().duration) {
      fail(ErrorCode::ConfigError, c.label + ": scenario.duration differs between configs");
    }
    if (c.changes.size() != cfgs.front().changes.size()) {
      fail(ErrorCode::ConfigError, c.label + ": set-point list differs between configs");
    }
    for (std::size_t i = 0; i < c.changes.size(); ++i) {
      if (c.changes[i].step != cfgs.front().changes[i].step) {
        fail(ErrorCode::ConfigError, c.label + ": set-point steps differ between configs");
      }
    }
  }

  std::vector<std::future<SimulationOutput>> jobs;
  for (const ExperimentConfig& c : cfgs) {
    jobs.push_back(std::async(std::launch::async, [&c] { return simulate(c); }));
  }
  std::vector<SimulationOutput> outs;
  for (auto& j : jobs) outs.push_back(j.get());

  CommandResult res;
  std::vector<LabeledTrace> labeled;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    const auto files = write_outputs(cfgs[i], outs[i], out_dir, emit_plot);
    res.files.insert(res.files.end(), files.begin(), files.end());
    labeled.push_back({cfgs[i].label, &outs[i].trace});
  }
  const CostComparison cmp = cumulative_cost_compare(labeled);

  std::ostringstream csv;
  csv << "k";
  for (const auto& l : cmp.labels) csv << ",cum_" << l;
  for (std::size_t a = 0; a < cmp.labels.size(); ++a)
    for (std::size_t b = a + 1; b < cmp.labels.size(); ++b)
      csv << ",diff_" << cmp.labels[a] << "_minus_" << cmp.labels[b];
  csv << "\n";
  std::vector<std::vector<double>> diffs;
  for (std::size_t a = 0; a < cmp.labels.size(); ++a)
    for (std::size_t b = a + 1; b < cmp.labels.size(); ++b) diffs.push_back(cmp.difference(a, b));
  for (std::size_t i = 0; i < cmp.steps.size(); ++i) {
    csv << cmp.steps[i];
    for (const auto& c : cmp.cumulative) csv << ',' << format_double(c[i]);
    for (const auto& d : diffs) csv << ',' << format_double(d[i]);
    csv << "\n";
  }
  fs::create_directories(out_dir);
  const fs::path cmp_path = out_dir / "compare.csv";
  write_file(cmp_path, csv.str());
  res.files.push_back(cmp_path);

  std::ostringstream rep;
  rep << "configs:";
  for (const auto& l : cmp.labels) rep << " " << l;
  rep << "\n";
  for (std::size_t s = 0; s < cmp.segment_leader.size(); ++s) {
    rep << "segment " << s << " (from k=" << (s == 0 ? 0 : cmp.change_steps[s - 1])
        << "): lowest cumulated cost " << cmp.segment_leader[s] << "\n";
  }
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    rep << "-- " << cfgs[i].label << "\n" << summary_text(cfgs[i], outs[i]);
  }
  if (emit_plot) {
    std::ostringstream gp;
    gp << "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'k'\n"
       << "set ylabel 'cumulated cost'\nplot";
    for (std::size_t i = 0; i < cmp.labels.size(); ++i) {
      gp << (i ? "," : "") << " 'compare.csv' using 1:" << i + 2 << " with lines";
    }
    gp << "\n";
    const fs::path gp_path = out_dir / "compare.gp";
    write_file(gp_path, gp.str());
    res.files.push_back(gp_path);
  }
  write_file(out_dir / "compare.txt", rep.str());
  res.files.push_back(out_dir / "compare.txt");
  res.report = rep.str();
  return res;
}

CommandResult cmd_verify_terminal(const ExperimentConfig& cfg) {
  const PlantModel plant = cfg.plant();
  const int q = cfg.spec().q();
  std::ostringstream os;
  os << std::setprecision(10);
  TerminalIngredients ing;
  try {
    ing = synthesize_terminal(plant, cfg.weights.Q, cfg.weights.R, q);
  } catch (const Error& e) {
    os << "synthesis failed: " << e.what() << "\n";
    return {exit_code_for(e.code()), os.str(), {}};
  }
  os << "q = " << q << "\n"
     << "P =\n" << ing.P << "\n"
     << "K =\n" << ing.K << "\n";
  if (ing.region.kind == TerminalRegion::Kind::Ellipsoid) {
    os << "terminal region: x' P x <= " << ing.region.rho << "\n";
  } else {
    os << "terminal region: whole state space\n";
  }
  TerminalCertificate rep;
  bool ok = true;
  try {
    rep = certify_terminal_decrease(plant, cfg.weights.Q, cfg.weights.R, ing, cfg.certification_samples, cfg.seed);
  } catch (const CertificationError& e) {
    rep = e.report();
    ok = false;
  }
  os << "residual eigenvalue = " << rep.residual_eig << " (bound " << rep.residual_bound << ") "
     << pass_fail(rep.matrix_certified) << "\n"
     << "sampled worst margin = " << rep.worst_margin << " over " << rep.samples << " samples "
     << pass_fail(rep.samples_certified) << "\n"
     << "result: " << (ok ? "certified" : "NOT certified") << "\n";
  return {ok ? kExitOk : kExitCertification, os.str(), {}};
}

}  // namespace tbctl
