#include "mfg/io/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace mfg::io {

namespace {

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

using Section = std::map<std::string, Entry>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const std::set<std::string> kSections = {"mode", "grid", "hamiltonian", "coupling", "data", "solver", "norms"};

/// Typed access to the raw sections; every lookup marks the key as used.
class Reader {
 public:
  Reader(std::map<std::string, Section> sections, std::filesystem::path base)
      : sections_(std::move(sections)), base_(std::move(base)) {}

  bool has(const std::string& sec, const std::string& key) const {
    auto s = sections_.find(sec);
    return s != sections_.end() && s->second.count(key);
  }

  std::optional<Entry> find(const std::string& sec, const std::string& key) {
    auto s = sections_.find(sec);
    if (s == sections_.end()) return std::nullopt;
    auto e = s->second.find(key);
    if (e == s->second.end()) return std::nullopt;
    e->second.used = true;
    return e->second;
  }

  std::string text(const std::string& sec, const std::string& key, const std::string& fallback) {
    auto e = find(sec, key);
    return e ? e->value : fallback;
  }

  std::string required(const std::string& sec, const std::string& key) {
    auto e = find(sec, key);
    if (!e) throw ConfigError(0, "missing required field " + sec + "." + key);
    return e->value;
  }

  double real(const std::string& sec, const std::string& key, std::optional<double> fallback) {
    auto e = find(sec, key);
    if (!e) {
      if (!fallback) throw ConfigError(0, "missing required field " + sec + "." + key);
      return *fallback;
    }
    try {
      std::size_t used = 0;
      const double v = std::stod(e->value, &used);
      if (used != e->value.size() || !std::isfinite(v)) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(e->line, "field " + sec + "." + key + ": expected a finite number, got '" + e->value + "'");
    }
  }

  int integer(const std::string& sec, const std::string& key, std::optional<int> fallback) {
    auto e = find(sec, key);
    if (!e) {
      if (!fallback) throw ConfigError(0, "missing required field " + sec + "." + key);
      return *fallback;
    }
    try {
      std::size_t used = 0;
      const long v = std::stol(e->value, &used);
      if (used != e->value.size()) throw std::invalid_argument("");
      return static_cast<int>(v);
    } catch (const std::exception&) {
      throw ConfigError(e->line, "field " + sec + "." + key + ": expected an integer, got '" + e->value + "'");
    }
  }

  int line(const std::string& sec, const std::string& key) const {
    auto s = sections_.find(sec);
    if (s == sections_.end()) return 0;
    auto e = s->second.find(key);
    return e == s->second.end() ? 0 : e->second.line;
  }

  std::filesystem::path path(const std::string& sec, const std::string& key) {
    const std::filesystem::path p(required(sec, key));
    return p.is_absolute() ? p : base_ / p;
  }

  void reject_unused() const {
    for (const auto& [name, sec] : sections_)
      for (const auto& [key, e] : sec)
        if (!e.used) throw ConfigError(e.line, "unknown key '" + key + "' in [" + name + "]");
  }

 private:
  std::map<std::string, Section> sections_;
  std::filesystem::path base_;
};

std::map<std::string, Section> tokenize(const std::string& text) {
  std::map<std::string, Section> out;
  std::istringstream in(text);
  std::string raw;
  std::string current;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(line_no, "unterminated section header");
      current = trim(line.substr(1, line.size() - 2));
      if (!kSections.count(current)) throw ConfigError(line_no, "unknown section [" + current + "]");
      out[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line_no, "expected 'key = value'");
    if (current.empty()) throw ConfigError(line_no, "key outside of any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(line_no, "empty key");
    if (value.empty()) throw ConfigError(line_no, "field " + current + "." + key + " has no value");
    if (out[current].count(key)) throw ConfigError(line_no, "duplicate key " + current + "." + key);
    out[current][key] = Entry{value, line_no, false};
  }
  return out;
}

/// Node-value table: "index value" per line, '#' comments, every node exactly once.
VectorX<double> read_node_table(const std::filesystem::path& path, Index nodes, const std::string& what) {
  std::ifstream f(path);
  if (!f) throw ConfigError(0, what + ": cannot read file " + path.string());
  VectorX<double> v(nodes);
  std::vector<bool> seen(static_cast<std::size_t>(nodes), false);
  std::string raw;
  int line_no = 0;
  while (std::getline(f, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    std::istringstream ls(line);
    long idx = 0;
    double val = 0;
    std::string extra;
    if (!(ls >> idx >> val) || (ls >> extra))
      throw ConfigError(0, what + ": " + path.string() + " line " + std::to_string(line_no) + ": expected 'index value'");
    if (idx < 0 || idx >= nodes)
      throw ConfigError(0, what + ": " + path.string() + " line " + std::to_string(line_no) + ": node index out of range");
    if (seen[static_cast<std::size_t>(idx)])
      throw ConfigError(0, what + ": " + path.string() + " line " + std::to_string(line_no) + ": duplicate node index");
    seen[static_cast<std::size_t>(idx)] = true;
    v[idx] = val;
  }
  for (Index i = 0; i < nodes; ++i)
    if (!seen[static_cast<std::size_t>(i)]) throw ConfigError(0, what + ": " + path.string() + " misses node " + std::to_string(i));
  return v;
}

/// Squared periodic distance from the torus centre (0.5, ..., 0.5).
double centre_distance2(const Eigen::VectorXd& x) {
  double r2 = 0;
  for (Index a = 0; a < x.size(); ++a) {
    const double d = std::abs(x[a] - 0.5);
    const double w = std::min(d, 1.0 - d);
    r2 += w * w;
  }
  return r2;
}

SpaceField<double> build_density(Reader& rd, const TorusGrid& g) {
  const std::string kind = rd.text("data", "m0", "uniform");
  const int line = rd.line("data", "m0");
  if (kind == "file") {
    // file data is taken as is so that an unnormalised table is reported
    return SpaceField<double>(g, read_node_table(rd.path("data", "m0_file"), g.nodes(), "data.m0_file"));
  }
  SpaceField<double> m(g);
  if (kind == "uniform") {
    m = SpaceField<double>::constant(g, 1.0);
  } else if (kind == "cosine_bump") {
    const double a = rd.real("data", "m0_amplitude", 0.5);
    if (!(std::abs(a) < 1.0)) throw ConfigError(rd.line("data", "m0_amplitude"), "data.m0_amplitude must lie in (-1, 1)");
    m = SpaceField<double>::sample(g, [a](const Eigen::VectorXd& x) {
      double v = 1.0;
      for (Index k = 0; k < x.size(); ++k) v *= 1.0 + a * std::cos(2 * M_PI * x[k]);
      return v;
    });
  } else if (kind == "gaussian_bump") {
    const double w = rd.real("data", "m0_width", 0.1);
    if (!(w > 0)) throw ConfigError(rd.line("data", "m0_width"), "data.m0_width must be positive");
    m = SpaceField<double>::sample(g, [w](const Eigen::VectorXd& x) { return std::exp(-centre_distance2(x) / (2 * w * w)); });
  } else {
    throw ConfigError(line, "data.m0: unknown density '" + kind + "' (uniform, cosine_bump, gaussian_bump, file)");
  }
  return (1.0 / m.integral()) * m;
}

/// zero | sine | cosine | file, scaled by <key>_amplitude.
std::optional<SpaceField<double>> build_profile(Reader& rd, const TorusGrid& g, const std::string& key,
                                                const std::string& fallback) {
  const std::string kind = rd.text("data", key, fallback);
  if (kind == "none") return std::nullopt;
  if (kind == "file") return SpaceField<double>(g, read_node_table(rd.path("data", key + "_file"), g.nodes(), "data." + key + "_file"));
  const double a = rd.real("data", key + "_amplitude", 1.0);
  if (kind == "zero") return SpaceField<double>(g);
  if (kind == "sine" || kind == "cosine") {
    const bool sine = kind == "sine";
    return SpaceField<double>::sample(g, [a, sine](const Eigen::VectorXd& x) {
      double s = 0;
      for (Index k = 0; k < x.size(); ++k) s += sine ? std::sin(2 * M_PI * x[k]) : std::cos(2 * M_PI * x[k]);
      return a * s;
    });
  }
  throw ConfigError(rd.line("data", key), "data." + key + ": unknown profile '" + kind + "' (none, zero, sine, cosine, file)");
}

CouplingSpec<double> build_coupling(Reader& rd, const TorusGrid& g, std::string& kind_out) {
  const std::string kind = rd.text("coupling", "kind", "kernel");
  const double sigma = rd.real("coupling", "sigma", 0.0);
  if (sigma < 0) throw ConfigError(rd.line("coupling", "sigma"), "coupling.sigma must be >= 0");
  kind_out = kind;
  if (kind == "kernel") {
    const std::string k = rd.text("coupling", "kernel", "cosine");
    VectorX<double> profile(g.nodes());
    if (k == "constant") {
      profile.setOnes();
    } else if (k == "cosine") {
      const double a = rd.real("coupling", "amplitude", 0.5);
      for (Index j = 0; j < g.nodes(); ++j) {
        double v = 1.0;
        for (int ax = 0; ax < g.dim(); ++ax) v += a * std::cos(2 * M_PI * g.coordinate(j, ax));
        profile[j] = v;
      }
    } else if (k == "delta") {
      profile.setZero();
      profile[0] = 1.0 / g.cell_volume();
    } else if (k == "file") {
      profile = read_node_table(rd.path("coupling", "kernel_file"), g.nodes(), "coupling.kernel_file");
    } else {
      throw ConfigError(rd.line("coupling", "kernel"),
                        "coupling.kernel: unknown kernel '" + k + "' (constant, cosine, delta, file)");
    }
    return CouplingSpec<double>::convolution(g, profile, sigma);
  }
  if (kind == "local") {
    const std::string f = rd.text("coupling", "local", "atan");
    LocalCoupling<double> lc;
    if (f == "linear") {
      lc.value = [](const Eigen::VectorXd&, double m) { return m; };
      lc.derivative = [](const Eigen::VectorXd&, double) { return 1.0; };
      lc.lipschitz = 1.0;
    } else if (f == "atan") {
      lc.value = [](const Eigen::VectorXd&, double m) { return std::atan(m); };
      lc.derivative = [](const Eigen::VectorXd&, double m) { return 1.0 / (1.0 + m * m); };
      lc.lipschitz = 1.0;
    } else if (f == "potential") {
      // m-independent cost a * sum cos(2 pi x_k)
      const double a = rd.real("coupling", "amplitude", 0.5);
      lc.value = [a](const Eigen::VectorXd& x, double) {
        double s = 0;
        for (Index k = 0; k < x.size(); ++k) s += std::cos(2 * M_PI * x[k]);
        return a * s;
      };
      lc.derivative = [](const Eigen::VectorXd&, double) { return 0.0; };
      lc.lipschitz = 0.0;
    } else {
      throw ConfigError(rd.line("coupling", "local"), "coupling.local: unknown function '" + f + "' (linear, atan, potential)");
    }
    return CouplingSpec<double>::local(g, std::move(lc), sigma);
  }
  throw ConfigError(rd.line("coupling", "kind"), "coupling.kind: expected 'kernel' or 'local', got '" + kind + "'");
}

HamiltonianSpec<double> build_hamiltonian(Reader& rd, const TorusGrid& g, std::optional<double>& auto_factor) {
  const std::string kind = rd.text("hamiltonian", "kind", "power");
  const double gamma = rd.real("hamiltonian", "gamma", 2.0);
  if (!(gamma > 1.0)) throw ConfigError(rd.line("hamiltonian", "gamma"), "hamiltonian.gamma must exceed 1");
  HamiltonianSpec<double> ham = HamiltonianSpec<double>::power(g.dim(), gamma);
  if (kind == "truncated") {
    const std::string rbar = rd.text("hamiltonian", "rbar", "auto");
    if (rbar == "auto") {
      auto_factor = rd.real("hamiltonian", "auto_factor", 1.5);
      if (!(*auto_factor > 0)) throw ConfigError(rd.line("hamiltonian", "auto_factor"), "hamiltonian.auto_factor must be positive");
    } else {
      const double r = rd.real("hamiltonian", "rbar", std::nullopt);
      if (!(r > 0)) throw ConfigError(rd.line("hamiltonian", "rbar"), "hamiltonian.rbar must be positive or 'auto'");
      ham = HamiltonianSpec<double>::truncated_power(g.dim(), gamma, r);
    }
  } else if (kind != "power") {
    throw ConfigError(rd.line("hamiltonian", "kind"), "hamiltonian.kind: expected 'power' or 'truncated', got '" + kind + "'");
  }
  const std::string weight = rd.text("hamiltonian", "weight", "none");
  if (weight == "file") {
    SpaceField<double> w(g, read_node_table(rd.path("hamiltonian", "weight_file"), g.nodes(), "hamiltonian.weight_file"));
    if (!(w.values().minCoeff() > 0)) throw ConfigError(0, "hamiltonian.weight_file: weight must be strictly positive");
    ham = ham.with_weight(w);
  } else if (weight != "none") {
    throw ConfigError(rd.line("hamiltonian", "weight"), "hamiltonian.weight: expected 'none' or 'file'");
  }
  return ham;
}

}  // namespace

Experiment parse_experiment(const std::string& text, const std::filesystem::path& base_dir) {
  Reader rd(tokenize(text), base_dir);
  Experiment ex;
  ex.source_text = text;
  RunConfig<double>& cfg = ex.run;

  const std::string mode = rd.text("mode", "type", "finite_horizon");
  if (mode != "finite_horizon" && mode != "ergodic")
    throw ConfigError(rd.line("mode", "type"), "mode.type: expected 'finite_horizon' or 'ergodic', got '" + mode + "'");
  const bool ergodic = mode == "ergodic";

  const int dim = rd.integer("grid", "dim", 1);
  if (dim != 1 && dim != 2) throw ConfigError(rd.line("grid", "dim"), "grid.dim must be 1 or 2");
  const int n = rd.integer("grid", "n", std::nullopt);
  if (n < 3) throw ConfigError(rd.line("grid", "n"), "grid.n must be >= 3");
  if (ergodic) {
    if (rd.has("grid", "nt") || rd.has("grid", "T"))
      throw ConfigError(rd.line("grid", rd.has("grid", "nt") ? "nt" : "T"), "ergodic mode takes no time grid (nt, T)");
    cfg.grid = TorusGrid::periodic(dim, n);
  } else {
    const int nt = rd.integer("grid", "nt", std::nullopt);
    if (nt < 2) throw ConfigError(rd.line("grid", "nt"), "grid.nt must be >= 2");
    const double T = rd.real("grid", "T", 1.0);
    if (!(T > 0)) throw ConfigError(rd.line("grid", "T"), "grid.T must be positive");
    cfg.grid = TorusGrid::space_time(dim, n, nt, T);
  }
  const TorusGrid space = cfg.grid.space();

  cfg.hamiltonian = build_hamiltonian(rd, space, cfg.auto_truncation_factor);
  cfg.coupling = build_coupling(rd, space, ex.coupling_kind);
  cfg.m0 = build_density(rd, space);
  if (ergodic) {
    if (rd.has("data", "uT")) throw ConfigError(rd.line("data", "uT"), "ergodic mode takes no terminal data uT");
  } else {
    cfg.uT = build_profile(rd, space, "uT", "zero");
    if (!cfg.uT) throw ConfigError(rd.line("data", "uT"), "finite-horizon mode needs terminal data (data.uT)");
  }
  cfg.potential = build_profile(rd, space, "potential", "none");
  const std::string q0 = rd.text("data", "q0", "zero");
  if (q0 != "zero") throw ConfigError(rd.line("data", "q0"), "data.q0: only 'zero' is supported");

  cfg.constraint = PolicyConstraint(1.0);
  const double R = rd.real("solver", "R", 10.0);
  if (!(R > 0)) throw ConfigError(rd.line("solver", "R"), "solver.R must be positive");
  cfg.constraint = PolicyConstraint(R);
  cfg.tol = rd.real("solver", "tol", 1e-10);
  if (!(cfg.tol > 0)) throw ConfigError(rd.line("solver", "tol"), "solver.tol must be positive");
  cfg.max_iter = rd.integer("solver", "max_iter", 50);
  if (cfg.max_iter < 1) throw ConfigError(rd.line("solver", "max_iter"), "solver.max_iter must be >= 1");
  const std::string lin = rd.text("solver", "linear", "auto");
  if (lin == "auto") cfg.linear.method = LinearSolverOptions::Method::automatic;
  else if (lin == "direct") cfg.linear.method = LinearSolverOptions::Method::direct;
  else if (lin == "iterative") cfg.linear.method = LinearSolverOptions::Method::iterative;
  else throw ConfigError(rd.line("solver", "linear"), "solver.linear: expected auto, direct or iterative");
  cfg.linear.tolerance = rd.real("solver", "linear_tol", 1e-12);
  if (!(cfg.linear.tolerance > 0)) throw ConfigError(rd.line("solver", "linear_tol"), "solver.linear_tol must be positive");
  cfg.linear.max_iterations = rd.integer("solver", "linear_max_iter", 5000);

  cfg.r = rd.real("norms", "r", 0.0);
  cfg.s = rd.real("norms", "s", 0.0);
  if (cfg.r != 0.0 && !(cfg.r > 1.0)) throw ConfigError(rd.line("norms", "r"), "norms.r must exceed 1");
  if (cfg.s != 0.0 && !(cfg.s > 1.0)) throw ConfigError(rd.line("norms", "s"), "norms.s must exceed 1");

  rd.reject_unused();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, e.what());
  }
  return ex;
}

Experiment load_experiment(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError(0, "cannot read config file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_experiment(ss.str(), path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

}  // namespace mfg::io
