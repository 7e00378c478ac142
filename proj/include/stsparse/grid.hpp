#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"

namespace stsparse {

/// Uniform space-time discretization of Omega x (0,T).
///
/// Omega is an interval (dim 1) or an axis-aligned rectangle (dim 2).
/// Functions are piecewise constant on cells, so midpoint quadrature is
/// exact for everything the library represents: sign sets, clamps and the
/// pointwise formulas of the sparsity functionals hold cell by cell.
struct GridSpec {
  int spatial_dim = 1;
  std::array<int, 2> spatial_cells{1, 1};  // cells per spatial axis; [1] unused in 1-D
  int time_cells = 1;
  std::array<double, 2> spatial_extent{1.0, 1.0};
  double horizon = 1.0;  // T

  int num_spatial() const {
    return spatial_cells[0] * (spatial_dim == 2 ? spatial_cells[1] : 1);
  }
  int num_cells() const { return num_spatial() * time_cells; }

  double dx(int axis) const { return spatial_extent[axis] / spatial_cells[axis]; }
  double cell_measure_space() const {
    return spatial_dim == 2 ? dx(0) * dx(1) : dx(0);
  }
  double cell_measure_time() const { return horizon / time_cells; }
  double cell_measure() const { return cell_measure_space() * cell_measure_time(); }

  double domain_measure() const {
    return spatial_dim == 2 ? spatial_extent[0] * spatial_extent[1] : spatial_extent[0];
  }
  double spacetime_measure() const { return domain_measure() * horizon; }

  /// Spatial multi-index of flat spatial index s.
  std::array<int, 2> spatial_index(int s) const {
    if (spatial_dim == 1) return {s, 0};
    return {s / spatial_cells[1], s % spatial_cells[1]};
  }
  int flat_spatial(int ix, int iy = 0) const {
    return spatial_dim == 1 ? ix : ix * spatial_cells[1] + iy;
  }
  /// Cell midpoint coordinates.
  std::array<double, 2> center_space(int s) const {
    auto [ix, iy] = spatial_index(s);
    return {(ix + 0.5) * dx(0), spatial_dim == 2 ? (iy + 0.5) * dx(1) : 0.0};
  }
  double center_time(int k) const { return (k + 0.5) * cell_measure_time(); }

  void validate() const {
    if (spatial_dim != 1 && spatial_dim != 2)
      throw ConfigError("GridSpec: spatial_dim must be 1 or 2");
    for (int a = 0; a < spatial_dim; ++a) {
      if (spatial_cells[a] < 1) throw ConfigError("GridSpec: spatial cell counts must be >= 1");
      if (!(spatial_extent[a] > 0.0)) throw ConfigError("GridSpec: spatial extents must be > 0");
    }
    if (time_cells < 1) throw ConfigError("GridSpec: time_cells must be >= 1");
    if (!(horizon > 0.0)) throw ConfigError("GridSpec: horizon must be > 0");
    const double total = cell_measure() * num_cells();
    if (std::abs(total - spacetime_measure()) > 1e-12 * spacetime_measure())
      throw ConfigError("GridSpec: cell measures inconsistent with extents");
  }

  friend bool operator==(const GridSpec& a, const GridSpec& b) {
    return a.spatial_dim == b.spatial_dim && a.spatial_cells == b.spatial_cells &&
           a.time_cells == b.time_cells && a.spatial_extent == b.spatial_extent &&
           a.horizon == b.horizon;
  }
};

inline GridSpec make_grid_1d(int nx, int nt, double length = 1.0, double horizon = 1.0) {
  GridSpec g;
  g.spatial_dim = 1;
  g.spatial_cells = {nx, 1};
  g.time_cells = nt;
  g.spatial_extent = {length, 1.0};
  g.horizon = horizon;
  g.validate();
  return g;
}

inline GridSpec make_grid_2d(int nx, int ny, int nt, double lx = 1.0, double ly = 1.0,
                             double horizon = 1.0) {
  GridSpec g;
  g.spatial_dim = 2;
  g.spatial_cells = {nx, ny};
  g.time_cells = nt;
  g.spatial_extent = {lx, ly};
  g.horizon = horizon;
  g.validate();
  return g;
}

/// Real values per space-time cell, time index fastest.
/// Treated as immutable after construction; all operations return new values.
class GridFunction {
public:
  GridFunction() = default;
  explicit GridFunction(GridSpec spec, double fill = 0.0)
      : spec_(spec), values_(static_cast<std::size_t>(spec.num_cells()), fill) {
    spec_.validate();
  }

  static GridFunction zeros(const GridSpec& spec) { return GridFunction(spec, 0.0); }
  static GridFunction constant(const GridSpec& spec, double c) { return GridFunction(spec, c); }

  /// Sample f(x, t) at cell midpoints (x given as 2-coordinate array, second
  /// entry 0 in 1-D).
  template <class F>
  static GridFunction sample(const GridSpec& spec, F&& f) {
    GridFunction u(spec);
    for (int s = 0; s < spec.num_spatial(); ++s) {
      const auto x = spec.center_space(s);
      for (int k = 0; k < spec.time_cells; ++k) u(s, k) = f(x, spec.center_time(k));
    }
    return u;
  }

  const GridSpec& spec() const { return spec_; }
  int num_spatial() const { return spec_.num_spatial(); }
  int time_cells() const { return spec_.time_cells; }
  int size() const { return static_cast<int>(values_.size()); }

  double operator()(int s, int k) const { return values_[idx(s, k)]; }
  double& operator()(int s, int k) { return values_[idx(s, k)]; }
  double operator[](int flat) const { return values_[static_cast<std::size_t>(flat)]; }
  double& operator[](int flat) { return values_[static_cast<std::size_t>(flat)]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  /// Time trace of one spatial cell (contiguous).
  std::span<const double> space_slice(int s) const {
    return {values_.data() + idx(s, 0), static_cast<std::size_t>(spec_.time_cells)};
  }
  std::span<double> space_slice(int s) {
    return {values_.data() + idx(s, 0), static_cast<std::size_t>(spec_.time_cells)};
  }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

private:
  std::size_t idx(int s, int k) const {
    assert(s >= 0 && s < spec_.num_spatial() && k >= 0 && k < spec_.time_cells);
    return static_cast<std::size_t>(s) * spec_.time_cells + k;
  }

  GridSpec spec_;
  std::vector<double> values_;
};

inline void require_same_spec(const GridFunction& a, const GridFunction& b) {
  if (!(a.spec() == b.spec())) throw ConfigError("grid functions live on different grids");
}

// -- quadrature and inner products ------------------------------------------

/// Midpoint quadrature of f over Omega x (0,T).
inline double integrate(const GridFunction& f) {
  double s = 0.0;
  for (double v : f.values()) s += v;
  return s * f.spec().cell_measure();
}

inline double inner(const GridFunction& a, const GridFunction& b) {
  require_same_spec(a, b);
  double s = 0.0;
  const auto va = a.values(), vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
  return s * a.spec().cell_measure();
}

inline double norm_l2(const GridFunction& u) {
  double s = 0.0;
  for (double v : u.values()) s += v * v;
  return std::sqrt(s * u.spec().cell_measure());
}

inline double norm_l1(const GridFunction& u) {
  double s = 0.0;
  for (double v : u.values()) s += std::abs(v);
  return s * u.spec().cell_measure();
}

inline double norm_linf(const GridFunction& u) {
  double m = 0.0;
  for (double v : u.values()) m = std::max(m, std::abs(v));
  return m;
}

// -- elementwise algebra -----------------------------------------------------

inline GridFunction lincomb(double a, const GridFunction& u, double b, const GridFunction& v) {
  require_same_spec(u, v);
  GridFunction w(u.spec());
  const auto vu = u.values(), vv = v.values();
  auto vw = w.values();
  for (std::size_t i = 0; i < vw.size(); ++i) vw[i] = a * vu[i] + b * vv[i];
  return w;
}

inline GridFunction operator+(const GridFunction& u, const GridFunction& v) {
  return lincomb(1.0, u, 1.0, v);
}
inline GridFunction operator-(const GridFunction& u, const GridFunction& v) {
  return lincomb(1.0, u, -1.0, v);
}
inline GridFunction operator*(double a, const GridFunction& u) {
  GridFunction w = u;
  for (double& v : w.values()) v *= a;
  return w;
}

/// L2 norm of the time trace of one spatial cell.
inline double space_slice_norm_l2t(const GridFunction& u, int s) {
  double acc = 0.0;
  for (double v : u.space_slice(s)) acc += v * v;
  return std::sqrt(acc * u.spec().cell_measure_time());
}

/// L1(Omega) norm of one time slice.
inline double time_slice_norm_l1x(const GridFunction& u, int k) {
  double acc = 0.0;
  for (int s = 0; s < u.num_spatial(); ++s) acc += std::abs(u(s, k));
  return acc * u.spec().cell_measure_space();
}

// -- the mixed norms the sparsity functionals are built from -----------------

struct NormBundle {
  double l2 = 0.0;                 // ||u||_{L2(Omega_T)}
  double l1 = 0.0;                 // ||u||_{L1(Omega_T)}
  std::vector<double> time_l1;     // t  -> ||u(.,t)||_{L1(Omega)}
  std::vector<double> space_l2;    // x  -> ||u(x,.)||_{L2(0,T)}
  double l2t_l1x = 0.0;            // ||u||_{L2(0,T;L1(Omega))}
  double linfx_l2t = 0.0;          // ||u||_{Linf(Omega;L2(0,T))}
};

inline NormBundle mixed_norms(const GridFunction& u) {
  NormBundle n;
  n.l2 = norm_l2(u);
  n.l1 = norm_l1(u);
  n.time_l1.resize(u.time_cells());
  for (int k = 0; k < u.time_cells(); ++k) n.time_l1[k] = time_slice_norm_l1x(u, k);
  n.space_l2.resize(u.num_spatial());
  for (int s = 0; s < u.num_spatial(); ++s) {
    n.space_l2[s] = space_slice_norm_l2t(u, s);
    n.linfx_l2t = std::max(n.linfx_l2t, n.space_l2[s]);
  }
  double acc = 0.0;
  for (double m : n.time_l1) acc += m * m;
  n.l2t_l1x = std::sqrt(acc * u.spec().cell_measure_time());
  return n;
}

// -- file I/O -----------------------------------------------------------------

/// CSV: one row per spatial index, one column per time index.
inline void write_csv(const GridFunction& u, std::ostream& os) {
  os.precision(17);
  for (int s = 0; s < u.num_spatial(); ++s) {
    for (int k = 0; k < u.time_cells(); ++k) {
      if (k) os << ',';
      os << u(s, k);
    }
    os << '\n';
  }
}

inline void write_csv(const GridFunction& u, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open for writing: " + path);
  write_csv(u, os);
}

/// CSV import onto a known grid; the row/column shape must match it.
inline GridFunction read_csv(std::istream& is, const GridSpec& spec) {
  GridFunction u(spec);
  std::string line;
  int s = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (s >= spec.num_spatial()) throw ConfigError("CSV has more rows than grid spatial cells");
    std::stringstream row(line);
    std::string item;
    int k = 0;
    while (std::getline(row, item, ',')) {
      if (k >= spec.time_cells) throw ConfigError("CSV row has more columns than time cells");
      u(s, k++) = std::stod(item);
    }
    if (k != spec.time_cells) throw ConfigError("CSV row has too few columns");
    ++s;
  }
  if (s != spec.num_spatial()) throw ConfigError("CSV has too few rows");
  if (!u.all_finite()) throw ConfigError("CSV contains non-finite values");
  return u;
}

inline GridFunction read_csv(const std::string& path, const GridSpec& spec) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open for reading: " + path);
  return read_csv(is, spec);
}

/// Flat binary: one textual header line (dims and extents), then raw native
/// 64-bit floats, time index fastest.
inline void write_binary(const GridFunction& u, std::ostream& os) {
  const GridSpec& g = u.spec();
  std::ostringstream header;
  header.precision(17);
  header << "stsparse-grid 1 " << g.spatial_dim << ' ' << g.spatial_cells[0] << ' '
         << g.spatial_cells[1] << ' ' << g.time_cells << ' ' << g.spatial_extent[0] << ' '
         << g.spatial_extent[1] << ' ' << g.horizon << '\n';
  os << header.str();
  os.write(reinterpret_cast<const char*>(u.values().data()),
           static_cast<std::streamsize>(u.values().size() * sizeof(double)));
}

inline void write_binary(const GridFunction& u, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open for writing: " + path);
  write_binary(u, os);
}

inline GridFunction read_binary(std::istream& is) {
  std::string magic;
  int version = 0;
  GridSpec g;
  is >> magic >> version >> g.spatial_dim >> g.spatial_cells[0] >> g.spatial_cells[1] >>
      g.time_cells >> g.spatial_extent[0] >> g.spatial_extent[1] >> g.horizon;
  if (!is || magic != "stsparse-grid" || version != 1)
    throw ConfigError("not a stsparse-grid binary file");
  is.ignore(1, '\n');
  g.validate();
  GridFunction u(g);
  is.read(reinterpret_cast<char*>(u.values().data()),
          static_cast<std::streamsize>(u.values().size() * sizeof(double)));
  if (!is) throw ConfigError("binary file truncated");
  if (!u.all_finite()) throw ConfigError("binary file contains non-finite values");
  return u;
}

inline GridFunction read_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open for reading: " + path);
  return read_binary(is);
}

// -- the control box ----------------------------------------------------------

/// Constant control bounds alpha < 0 < beta.
struct Box {
  double lower = -1.0;
  double upper = 1.0;

  void validate() const {
    if (!(lower < 0.0 && 0.0 < upper))
      throw ConfigError("box bounds must satisfy alpha < 0 < beta");
  }
  double clamp(double v) const { return std::min(std::max(v, lower), upper); }
  double width() const { return upper - lower; }
};

}  // namespace stsparse
