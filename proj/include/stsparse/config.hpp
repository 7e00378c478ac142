#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "errors.hpp"
#include "grid.hpp"
#include "pde.hpp"
#include "solver.hpp"
#include "sparsity.hpp"

namespace stsparse {

/// Sectioned key = value text. '#' and ';' start comments; keys are unique
/// within their section. Values are kept verbatim and converted on access so
/// numeric fields round-trip exactly as written.
class ConfigFile {
public:
  ConfigFile() = default;

  static ConfigFile parse(std::istream& is) {
    ConfigFile cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto comment = line.find_first_of("#;");
      if (comment != std::string::npos) line.erase(comment);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      if (trimmed.front() == '[') {
        if (trimmed.back() != ']')
          throw ConfigError("config line " + std::to_string(lineno) + ": malformed section");
        section = trim(trimmed.substr(1, trimmed.size() - 2));
        continue;
      }
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
      cfg.values_[section + "." + key] = value;
    }
    return cfg;
  }

  static ConfigFile parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    return parse(is);
  }

  static ConfigFile parse_string(const std::string& text) {
    std::istringstream is(text);
    return parse(is);
  }

  bool has(const std::string& section, const std::string& key) const {
    return values_.count(section + "." + key) > 0;
  }

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    const auto it = values_.find(section + "." + key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& section, const std::string& key, double fallback) const {
    const auto it = values_.find(section + "." + key);
    if (it == values_.end()) return fallback;
    const std::string& s = it->second;
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || ptr != s.data() + s.size())
      throw ConfigError("config [" + section + "] " + key + ": not a number: " + s);
    return out;
  }

  long get_int(const std::string& section, const std::string& key, long fallback) const {
    const auto it = values_.find(section + "." + key);
    if (it == values_.end()) return fallback;
    const std::string& s = it->second;
    long out = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || ptr != s.data() + s.size())
      throw ConfigError("config [" + section + "] " + key + ": not an integer: " + s);
    return out;
  }

private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

/// What the analyze command runs beyond the solver itself.
struct AnalyzeOptions {
  std::uint64_t seed = 1;
  int critical_samples = 6;
  int growth_samples = 500;
  double growth_radius = 1e-2;
  double first_order_tol = 1e-8;
  int quotient_levels = 10;  // quotient curves at t = 4^-1 .. 4^-levels
};

namespace config_detail {

inline GridFunction build_field(const GridSpec& g, const std::string& spec_text,
                                const std::string& what) {
  if (spec_text == "zero") return GridFunction::zeros(g);
  if (spec_text.rfind("constant:", 0) == 0) {
    const double c = std::stod(spec_text.substr(9));
    return GridFunction::constant(g, c);
  }
  if (spec_text == "pattern:sin") {
    const double pi = 3.141592653589793;
    return GridFunction::sample(g, [&](std::array<double, 2> x, double t) {
      double v = std::sin(pi * x[0] / g.spatial_extent[0]);
      if (g.spatial_dim == 2) v *= std::sin(pi * x[1] / g.spatial_extent[1]);
      return v * std::exp(-t);
    });
  }
  if (spec_text.rfind("file:", 0) == 0) {
    GridFunction f = read_binary(spec_text.substr(5));
    if (!(f.spec() == g)) throw ConfigError(what + ": file grid does not match [grid] section");
    return f;
  }
  throw ConfigError(what + ": unknown field spec '" + spec_text +
                    "' (zero | constant:<v> | pattern:sin | file:<path>)");
}

}  // namespace config_detail

/// Assemble the full problem from a parsed config, validating every
/// constraint with a message that names it.
inline ProblemConfig load_problem(const ConfigFile& cfg) {
  ProblemConfig pc;

  const long dim = cfg.get_int("grid", "dim", 1);
  const long nx = cfg.get_int("grid", "nx", 16);
  const long ny = cfg.get_int("grid", "ny", 1);
  const long nt = cfg.get_int("grid", "nt", 16);
  const double lx = cfg.get_double("grid", "lx", 1.0);
  const double ly = cfg.get_double("grid", "ly", 1.0);
  const double horizon = cfg.get_double("grid", "horizon", 1.0);
  pc.pde.grid = dim == 2 ? make_grid_2d(static_cast<int>(nx), static_cast<int>(ny),
                                        static_cast<int>(nt), lx, ly, horizon)
                         : make_grid_1d(static_cast<int>(nx), static_cast<int>(nt), lx, horizon);

  pc.pde.kappa = cfg.get_double("pde", "kappa", 1.0);
  if (!(pc.pde.kappa > 0.0)) throw ConfigError("[pde] kappa: must satisfy kappa > 0");
  const std::string nl = cfg.get_string("pde", "nonlinearity", "none");
  if (nl == "none") pc.pde.nonlinearity = Nonlinearity::None;
  else if (nl == "cubic") pc.pde.nonlinearity = Nonlinearity::Cubic;
  else if (nl == "linear_cubic") pc.pde.nonlinearity = Nonlinearity::LinearCubic;
  else throw ConfigError("[pde] nonlinearity: must be none | cubic | linear_cubic");
  pc.pde.nu = cfg.get_double("pde", "nu", 0.0);
  if (pc.pde.nu < 0.0) throw ConfigError("[pde] nu: must satisfy nu >= 0");
  const std::string scheme = cfg.get_string("pde", "scheme", "implicit_euler");
  if (scheme != "implicit_euler")
    throw ConfigError("[pde] scheme: only implicit_euler is available");
  pc.pde.newton_tol = cfg.get_double("pde", "newton_tol", 1e-13);
  pc.pde.y_target =
      config_detail::build_field(pc.pde.grid, cfg.get_string("pde", "y_d", "zero"), "[pde] y_d");
  const std::string y0_text = cfg.get_string("pde", "y0", "zero");
  if (y0_text == "zero") {
    pc.pde.y0.clear();
  } else if (y0_text.rfind("constant:", 0) == 0) {
    pc.pde.y0.assign(static_cast<std::size_t>(pc.pde.grid.num_spatial()),
                     std::stod(y0_text.substr(9)));
  } else if (y0_text == "bump") {
    pc.pde.y0.resize(static_cast<std::size_t>(pc.pde.grid.num_spatial()));
    for (int s = 0; s < pc.pde.grid.num_spatial(); ++s) {
      const auto x = pc.pde.grid.center_space(s);
      double v = x[0] / pc.pde.grid.spatial_extent[0];
      v = 4.0 * v * (1.0 - v);
      if (pc.pde.grid.spatial_dim == 2) {
        double w = x[1] / pc.pde.grid.spatial_extent[1];
        v *= 4.0 * w * (1.0 - w);
      }
      pc.pde.y0[static_cast<std::size_t>(s)] = v;
    }
  } else {
    throw ConfigError("[pde] y0: unknown spec '" + y0_text + "' (zero | constant:<v> | bump)");
  }

  const std::string kind = cfg.get_string("problem", "kind", "j1");
  if (kind == "j1") pc.penalty.kind = SparsityKind::J1;
  else if (kind == "j2") pc.penalty.kind = SparsityKind::J2;
  else if (kind == "j3") pc.penalty.kind = SparsityKind::J3;
  else throw ConfigError("[problem] kind: must be j1 | j2 | j3");
  pc.penalty.mu = cfg.get_double("problem", "mu", 0.1);
  if (pc.penalty.mu < 0.0) throw ConfigError("[problem] mu: must satisfy mu >= 0");
  pc.penalty.box.lower = cfg.get_double("problem", "alpha", -1.0);
  pc.penalty.box.upper = cfg.get_double("problem", "beta", 1.0);
  if (!(pc.penalty.box.lower < 0.0 && 0.0 < pc.penalty.box.upper))
    throw ConfigError("[problem] bounds: must satisfy alpha < 0 < beta");

  pc.validate();
  return pc;
}

inline SolveOptions load_solve_options(const ConfigFile& cfg) {
  SolveOptions o;
  o.tol = cfg.get_double("solver", "tol", 1e-9);
  o.max_iter = static_cast<int>(cfg.get_int("solver", "max_iter", 5000));
  if (o.max_iter < 1) throw ConfigError("[solver] max_iter: must be >= 1");
  return o;
}

inline AnalyzeOptions load_analyze_options(const ConfigFile& cfg) {
  AnalyzeOptions o;
  o.seed = static_cast<std::uint64_t>(cfg.get_int("analyze", "seed", 1));
  o.critical_samples = static_cast<int>(cfg.get_int("analyze", "samples", 6));
  o.growth_samples = static_cast<int>(cfg.get_int("analyze", "growth_samples", 500));
  o.growth_radius = cfg.get_double("analyze", "growth_radius", 1e-2);
  o.first_order_tol = cfg.get_double("analyze", "first_order_tol", 1e-8);
  o.quotient_levels = static_cast<int>(cfg.get_int("analyze", "quotient_levels", 10));
  if (!(o.growth_radius > 0.0)) throw ConfigError("[analyze] growth_radius: must be > 0");
  return o;
}

}  // namespace stsparse
