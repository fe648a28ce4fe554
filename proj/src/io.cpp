#include "adpc/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#ifndef ADPC_GIT_DESCRIBE
#define ADPC_GIT_DESCRIBE "unknown"
#endif

namespace adpc {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void config_error(const std::string &key, const std::string &what) {
  throw Error(ErrorCode::ConfigError, "config: " + key + ": " + what);
}

double get_number(const json &v, const std::string &key) {
  if (!v.is_number())
    config_error(key, "expected a number");
  return v.get<double>();
}

Index get_index(const json &v, const std::string &key) {
  if (!v.is_number_integer())
    config_error(key, "expected an integer");
  return v.get<Index>();
}

VectorXd get_vector(const json &v, const std::string &key) {
  if (!v.is_array() || v.empty())
    config_error(key, "expected a non-empty array of numbers");
  VectorXd out(Index(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out(Index(i)) = get_number(v[i], key);
  return out;
}

MatrixXd get_matrix(const json &v, const std::string &key) {
  if (!v.is_array() || v.empty() || !v[0].is_array() || v[0].empty())
    config_error(key, "expected a non-empty array of rows");
  const std::size_t cols = v[0].size();
  MatrixXd out(Index(v.size()), Index(cols));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_array() || v[i].size() != cols)
      config_error(key, "rows must have equal length");
    for (std::size_t j = 0; j < cols; ++j)
      out(Index(i), Index(j)) = get_number(v[i][j], key);
  }
  return out;
}

json matrix_json(const MatrixXd &m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Index j = 0; j < m.cols(); ++j)
      r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

json vector_json(const VectorXd &v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i)
    a.push_back(v(i));
  return a;
}

std::ofstream open_out(const fs::path &path) {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string() + " for writing");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  return out;
}

void write_vec(std::ostream &out, const VectorXd &v, Index n) {
  for (Index i = 0; i < n; ++i) {
    out << ',';
    if (i < v.size())
      out << v(i);
    else
      out << "nan";
  }
}

void vec_header(std::ostream &out, const std::string &name, Index n) {
  for (Index i = 0; i < n; ++i)
    out << ',' << name << i + 1;
}

MatrixXd read_matrix_csv(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::ConfigError, "cannot read " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
      row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw Error(ErrorCode::ConfigError, path.string() + ": ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    return MatrixXd(0, 0);
  MatrixXd m(Index(rows.size()), Index(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(Index(i), Index(j)) = rows[i][j];
  return m;
}

void write_matrix_csv(const fs::path &path, const MatrixXd &m) {
  std::ofstream out = open_out(path);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j)
      out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

} // namespace

ExperimentConfig config_from_json(const json &doc, ExperimentConfig cfg) {
  if (!doc.is_object())
    config_error("<root>", "expected an object");
  static const std::set<std::string> known{
      "description", "plant",   "input_radius", "R_x",         "R_u",
      "horizon",     "Q_diag",  "R_diag",       "T_min",       "T_max",
      "samples",     "steps",   "max_columns",  "reference",   "methods",
      "seed",        "trials"};
  for (const auto &[key, value] : doc.items())
    if (!known.count(key))
      config_error(key, "unknown key");

  if (doc.contains("plant")) {
    const json &p = doc["plant"];
    if (!p.is_object())
      config_error("plant", "expected an object");
    for (const auto &[key, value] : p.items())
      if (key != "A" && key != "B" && key != "delta" && key != "x0")
        config_error("plant." + key, "unknown key");
    if (p.contains("A"))
      cfg.A = get_matrix(p["A"], "plant.A");
    if (p.contains("B"))
      cfg.B = get_matrix(p["B"], "plant.B");
    if (p.contains("delta"))
      cfg.delta = get_number(p["delta"], "plant.delta");
    if (p.contains("x0"))
      cfg.x0 = get_vector(p["x0"], "plant.x0");
  }
  if (doc.contains("input_radius"))
    cfg.input_radius = get_number(doc["input_radius"], "input_radius");
  if (doc.contains("R_x"))
    cfg.R_x = get_number(doc["R_x"], "R_x");
  if (doc.contains("R_u"))
    cfg.R_u = get_number(doc["R_u"], "R_u");
  if (doc.contains("horizon"))
    cfg.horizon = get_index(doc["horizon"], "horizon");
  if (doc.contains("Q_diag"))
    cfg.Q_diag = get_vector(doc["Q_diag"], "Q_diag");
  if (doc.contains("R_diag"))
    cfg.R_diag = get_vector(doc["R_diag"], "R_diag");
  if (doc.contains("T_min"))
    cfg.T_min = get_index(doc["T_min"], "T_min");
  if (doc.contains("T_max"))
    cfg.T_max = get_index(doc["T_max"], "T_max");
  if (doc.contains("samples"))
    cfg.samples = get_index(doc["samples"], "samples");
  if (doc.contains("steps"))
    cfg.steps = get_index(doc["steps"], "steps");
  if (doc.contains("max_columns"))
    cfg.max_columns = get_index(doc["max_columns"], "max_columns");
  if (doc.contains("reference")) {
    const json &r = doc["reference"];
    if (!r.is_array())
      config_error("reference", "expected an array");
    cfg.reference.clear();
    for (const json &seg : r) {
      if (!seg.is_object() || !seg.contains("from") || !seg.contains("to") ||
          !seg.contains("x_f"))
        config_error("reference", "each segment needs from, to and x_f");
      cfg.reference.push_back({get_index(seg["from"], "reference.from"),
                               get_index(seg["to"], "reference.to"),
                               get_vector(seg["x_f"], "reference.x_f")});
    }
  }
  if (doc.contains("methods")) {
    const json &m = doc["methods"];
    if (!m.is_array() || m.empty())
      config_error("methods", "expected a non-empty array of method names");
    cfg.methods.clear();
    for (const json &name : m) {
      if (!name.is_string())
        config_error("methods", "method names must be strings");
      cfg.methods.push_back(method_from_string(name.get<std::string>()));
    }
  }
  if (doc.contains("seed")) {
    const json &s = doc["seed"];
    if (!s.is_number_integer() || (!s.is_number_unsigned() && s.get<std::int64_t>() < 0))
      config_error("seed", "expected a non-negative integer");
    cfg.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("trials"))
    cfg.trials = get_index(doc["trials"], "trials");
  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const fs::path &path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::ConfigError, "cannot read config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception &e) {
    throw Error(ErrorCode::ConfigError, std::string("config: parse error: ") + e.what());
  }
  return config_from_json(doc, std::move(base));
}

void validate_config(const ExperimentConfig &cfg) {
  const Index nx = cfg.A.rows();
  if (nx == 0 || cfg.A.cols() != nx)
    config_error("plant.A", "must be square and non-empty");
  if (cfg.B.rows() != nx || cfg.B.cols() == 0)
    config_error("plant.B", "must have as many rows as A");
  const Index nu = cfg.B.cols();
  if (cfg.x0.size() != nx)
    config_error("plant.x0", "length must equal the state dimension");
  if (!(cfg.delta > 0.0))
    config_error("plant.delta", "must be positive");
  if (!(cfg.input_radius > 0.0))
    config_error("input_radius", "must be positive");
  if (!(cfg.R_x > 0.0))
    config_error("R_x", "must be positive");
  if (!(cfg.R_u > 0.0))
    config_error("R_u", "must be positive");
  if (cfg.horizon < 1)
    config_error("horizon", "must be at least 1");
  if (cfg.Q_diag.size() != nx || !(cfg.Q_diag.minCoeff() > 0.0))
    config_error("Q_diag", "needs n_x positive entries");
  if (cfg.R_diag.size() != nu || !(cfg.R_diag.minCoeff() > 0.0))
    config_error("R_diag", "needs n_u positive entries");
  if (cfg.T_min < nx + nu)
    config_error("T_min", "must be at least n_x + n_u");
  if (cfg.T_max < cfg.T_min)
    config_error("T_max", "must not be below T_min");
  if (cfg.samples < nx + nu)
    config_error("samples", "must be at least n_x + n_u");
  if (cfg.steps < 1)
    config_error("steps", "must be at least 1");
  if (cfg.max_columns < nx + nu)
    config_error("max_columns", "must be at least n_x + n_u");
  if (cfg.trials < 1)
    config_error("trials", "must be at least 1");
  if (cfg.methods.empty())
    config_error("methods", "must not be empty");
  for (std::size_t i = 0; i < cfg.methods.size(); ++i)
    for (std::size_t j = i + 1; j < cfg.methods.size(); ++j)
      if (cfg.methods[i] == cfg.methods[j])
        config_error("methods", "duplicate method");
  for (std::size_t i = 0; i < cfg.reference.size(); ++i) {
    const ReferenceSegment &a = cfg.reference[i];
    if (a.from < 0 || a.to < a.from)
      config_error("reference", "each interval needs 0 <= from <= to");
    if (a.x_f.size() != nx)
      config_error("reference", "x_f length must equal the state dimension");
    for (std::size_t j = i + 1; j < cfg.reference.size(); ++j) {
      const ReferenceSegment &b = cfg.reference[j];
      if (a.from <= b.to && b.from <= a.to)
        config_error("reference", "intervals must be disjoint");
    }
  }
}

json config_to_json(const ExperimentConfig &cfg) {
  json doc;
  doc["plant"] = {{"A", matrix_json(cfg.A)},
                  {"B", matrix_json(cfg.B)},
                  {"delta", cfg.delta},
                  {"x0", vector_json(cfg.x0)}};
  doc["input_radius"] = cfg.input_radius;
  doc["R_x"] = cfg.R_x;
  doc["R_u"] = cfg.R_u;
  doc["horizon"] = cfg.horizon;
  doc["Q_diag"] = vector_json(cfg.Q_diag);
  doc["R_diag"] = vector_json(cfg.R_diag);
  doc["T_min"] = cfg.T_min;
  doc["T_max"] = cfg.T_max;
  doc["samples"] = cfg.samples;
  doc["steps"] = cfg.steps;
  doc["max_columns"] = cfg.max_columns;
  json ref = json::array();
  for (const ReferenceSegment &s : cfg.reference)
    ref.push_back({{"from", s.from}, {"to", s.to}, {"x_f", vector_json(s.x_f)}});
  doc["reference"] = ref;
  json methods = json::array();
  for (Method m : cfg.methods)
    methods.push_back(to_string(m));
  doc["methods"] = methods;
  doc["seed"] = cfg.seed;
  doc["trials"] = cfg.trials;
  return doc;
}

std::string config_hash(const ExperimentConfig &cfg) {
  const std::string text = config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const char *build_version() { return ADPC_GIT_DESCRIBE; }

void write_mu_hat_csv(const fs::path &path, const ScalarVolumeResult &r) {
  std::ofstream out = open_out(path);
  out << "method,seed,T,mu_hat\n";
  for (const auto &[m, table] : r.mu_hat)
    for (std::size_t s = 0; s < r.seeds.size(); ++s)
      for (std::size_t j = 0; j < r.T.size(); ++j)
        out << to_string(m) << ',' << r.seeds[s] << ',' << r.T[j] << ','
            << table(Index(s), Index(j)) << '\n';
}

void write_mu_hat_mean_csv(const fs::path &path, const ScalarVolumeResult &r) {
  std::ofstream out = open_out(path);
  out << "method,T,mean_mu_hat\n";
  for (const auto &[m, table] : r.mu_hat)
    for (std::size_t j = 0; j < r.T.size(); ++j)
      out << to_string(m) << ',' << r.T[j] << ',' << table.col(Index(j)).mean() << '\n';
}

void write_boundary_csv(const fs::path &path, const ScalarVolumeResult &r) {
  std::ofstream out = open_out(path);
  out << "method,T,point,a,b\n";
  for (const auto &[m, shapes] : r.boundary)
    for (const auto &[t, pts] : shapes)
      for (Index i = 0; i < pts.cols(); ++i)
        out << to_string(m) << ',' << t << ',' << i << ',' << pts(0, i) << ','
            << (pts.rows() > 1 ? pts(1, i) : 0.0) << '\n';
}

void write_feasibility_csv(const fs::path &path, const FeasibilityResult &r) {
  std::ofstream out = open_out(path);
  out << "method,T,feasible,trials,fraction\n";
  for (const auto &[m, table] : r.feasible)
    for (std::size_t j = 0; j < r.T.size(); ++j) {
      const int n = table.col(Index(j)).sum();
      out << to_string(m) << ',' << r.T[j] << ',' << n << ',' << table.rows() << ','
          << double(n) / double(table.rows()) << '\n';
    }
}

void write_tracking_runs_csv(const fs::path &path, const std::vector<TrackingRun> &runs) {
  std::ofstream out = open_out(path);
  out << "method,seed,cost,mpc_started,ocp_infeasible,state_violations,input_violations,"
         "tube_violations,max_tube_excess,triggers,sigma_failures,forced_checks,"
         "forced_violations,max_forced_gap,max_kkt,min_membership_margin,start_failure\n";
  for (const TrackingRun &r : runs) {
    std::string reason = r.start_failure;
    std::replace(reason.begin(), reason.end(), ',', ';');
    out << to_string(r.method) << ',' << r.seed << ',' << r.cost << ',' << r.mpc_started << ','
        << r.ocp_infeasible << ',' << r.state_violations << ',' << r.input_violations << ','
        << r.tube_violations << ',' << r.max_tube_excess << ',' << r.triggers << ','
        << r.sigma_failures << ',' << r.forced_checks << ',' << r.forced_violations << ','
        << r.max_forced_gap << ',' << r.max_kkt << ',' << r.membership.min_margin << ','
        << reason << '\n';
  }
}

void write_tracking_steps_csv(const fs::path &path, const std::vector<TrackingRun> &runs) {
  std::ofstream out = open_out(path);
  Index nx = 0, nu = 0;
  for (const TrackingRun &r : runs)
    for (const TrackingStep &s : r.steps) {
      nx = std::max(nx, s.x.size());
      nu = std::max(nu, s.u.size());
    }
  out << "method,seed,k";
  vec_header(out, "x", nx);
  vec_header(out, "x_bar", nx);
  vec_header(out, "u", nu);
  vec_header(out, "u_bar", nu);
  vec_header(out, "x_f", nx);
  out << ",tube_radius,error_norm,value,triggered,sigma_star,mu_hat,mpc,terminal_dropped\n";
  for (const TrackingRun &r : runs)
    for (const TrackingStep &s : r.steps) {
      out << to_string(r.method) << ',' << r.seed << ',' << s.k;
      write_vec(out, s.x, nx);
      write_vec(out, s.x_bar, nx);
      write_vec(out, s.u, nu);
      write_vec(out, s.u_bar, nu);
      write_vec(out, s.x_f, nx);
      out << ',' << s.tube_radius << ',' << s.error_norm << ',' << s.value << ','
          << s.triggered << ',' << s.sigma_star << ',' << s.mu_hat << ',' << s.mpc << ','
          << s.terminal_dropped << '\n';
    }
}

void write_trigger_log_csv(const fs::path &path, const std::vector<TrackingRun> &runs) {
  std::ofstream out = open_out(path);
  out << "method,seed,k,triggered,alpha,sigma_star,dataset_size\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const TrackingRun &r : runs)
    for (const TriggerRecord &t : r.trigger_log)
      out << to_string(r.method) << ',' << r.seed << ',' << t.k << ',' << t.triggered << ','
          << t.alpha.value_or(nan) << ',' << t.sigma_star.value_or(nan) << ','
          << t.dataset_size << '\n';
}

void write_openloop_csv(const fs::path &path, const OpenLoopRun<double> &run) {
  std::ofstream out = open_out(path);
  const Index nu = run.input_log.empty() ? 0 : run.input_log.front().u.size();
  const Index nx = run.input_log.empty() ? 0 : run.input_log.front().x.size();
  out << "step,accepted";
  vec_header(out, "u", nu);
  vec_header(out, "x", nx);
  out << ",mu_hat\n";
  for (const InputRecord<double> &rec : run.input_log) {
    out << rec.step << ',' << rec.accepted;
    write_vec(out, rec.u, nu);
    write_vec(out, rec.x, nx);
    out << ',' << rec.mu_hat << '\n';
  }
}

void save_dataset(const fs::path &stem, const DataSet<double> &ds) {
  validate(ds);
  write_matrix_csv(fs::path(stem.string() + "_H.csv"), ds.H.transpose());
  write_matrix_csv(fs::path(stem.string() + "_Xdot.csv"), ds.Xdot.transpose());
  json side;
  side["lambda"] = vector_json(ds.lambda);
  side["delta"] = ds.delta;
  side["n_x"] = ds.n_x;
  side["n_u"] = ds.n_u;
  write_json(fs::path(stem.string() + ".json"), side);
}

DataSet<double> load_dataset(const fs::path &stem) {
  std::ifstream in(stem.string() + ".json");
  if (!in)
    throw Error(ErrorCode::ConfigError, "cannot read " + stem.string() + ".json");
  json side;
  try {
    side = json::parse(in);
  } catch (const json::exception &e) {
    throw Error(ErrorCode::ConfigError, std::string("dataset sidecar: ") + e.what());
  }
  DataSet<double> ds = empty_dataset<double>(get_index(side.at("n_x"), "n_x"),
                                             get_index(side.at("n_u"), "n_u"),
                                             get_number(side.at("delta"), "delta"));
  const MatrixXd H = read_matrix_csv(stem.string() + "_H.csv");
  const MatrixXd X = read_matrix_csv(stem.string() + "_Xdot.csv");
  const json &lam = side.at("lambda");
  if (H.rows() != X.rows() || H.rows() != Index(lam.size()))
    throw Error(ErrorCode::ConfigError, "dataset files disagree on the column count");
  if (H.rows() > 0 && (H.cols() != ds.n_h() || X.cols() != ds.n_x))
    throw Error(ErrorCode::ConfigError, "dataset files disagree with n_x, n_u");
  ds.H = H.transpose();
  ds.Xdot = X.transpose();
  if (H.rows() == 0) {
    ds.H.resize(ds.n_h(), 0);
    ds.Xdot.resize(ds.n_x, 0);
  }
  ds.lambda.resize(Index(lam.size()));
  for (std::size_t i = 0; i < lam.size(); ++i)
    ds.lambda(Index(i)) = get_number(lam[i], "lambda");
  validate(ds);
  return ds;
}

void write_json(const fs::path &path, const json &doc) {
  std::ofstream out = open_out(path);
  out << doc.dump(2) << '\n';
}

void write_manifest(const fs::path &dir, const std::string &command,
                    const ExperimentConfig &cfg, const std::vector<std::string> &files) {
  json m;
  m["command"] = command;
  m["config_hash"] = config_hash(cfg);
  m["seeds"] = cfg.seed_list();
  m["git_describe"] = build_version();
  m["files"] = files;
  m["config"] = config_to_json(cfg);
  write_json(dir / "manifest.json", m);
}

} // namespace adpc
