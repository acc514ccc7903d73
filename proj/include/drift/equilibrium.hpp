#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "drift/dynamics.hpp"
#include "drift/errors.hpp"
#include "drift/numeric.hpp"
#include "drift/types.hpp"

namespace drift {

/// Steady-state drift operating point on a circle of curvature kappa.
/// psidot = v * kappa * turn_sign holds by construction.
struct DriftEquilibrium {
  double v = 0.0;         // [m/s]
  double beta = 0.0;      // [rad]
  double psidot = 0.0;    // [rad/s]
  double delta_ff = 0.0;  // [rad]
  double omega_ff = 0.0;  // [rad/s]
  double kappa = 0.0;     // [1/m]
  double mu = 0.0;        // friction scale the cell was solved for
  double residual_norm = 0.0;
  int newton_iters = 0;   // diagnostics only; not persisted
};

struct EquilibriumSeed {
  double v = 3.0;
  double beta = -kPi / 3.0;
  double delta = -0.3;
  double omega = 60.0;
};

struct SolverSettings {
  double beta_ref = -kPi / 3.0;    // sideslip condition closing the system
  int turn_sign = +1;              // +1 counter-clockwise
  double beta_drift_min = kPi / 6.0;
  int max_iters = 50;
  double tol = 1e-11;              // Newton convergence on the kinetic residual
  double fd_step = 1e-6;           // relative finite-difference step
};

namespace detail {

/// State on the circle for a candidate (v, beta) at fixed kappa: body frame
/// aligned with the world (psi = 0), course at angle beta.
inline VehicleState equilibrium_state(double v, double beta, double kappa, int turn_sign) {
  VehicleState s;
  s.xdot = v * std::cos(beta);
  s.ydot = v * std::sin(beta);
  s.psidot = v * kappa * turn_sign;
  return s;
}

/// Kinetic steady-state residuals (vdot, betadot, psiddot) assembled from the
/// inertial accelerations. Kept separate from body_rates() so the table
/// checker exercises an independent path.
inline Eigen::Vector3d kinetic_residual(double v, double beta, double delta, double omega,
                                        double kappa, const VehicleParams& p,
                                        const FrictionModel& front, const FrictionModel& rear,
                                        int turn_sign) {
  const VehicleState s = equilibrium_state(v, beta, kappa, turn_sign);
  const ControlInput u{delta, omega};
  const std::array<double, 6> d = derivatives(s, u, p, front, rear);
  const double cb = std::cos(beta), sb = std::sin(beta);
  Eigen::Vector3d r;
  r(0) = d[3] * cb + d[4] * sb;                          // vdot
  r(1) = (-d[3] * sb + d[4] * cb) / v - s.psidot;        // betadot
  r(2) = d[5];                                           // psiddot
  return r;
}

}  // namespace detail

/// Damped Newton on (v, beta, delta, omega) with residuals
/// (vdot, betadot, psiddot, beta - beta_ref). The drift branch is selected by
/// the seed; convergence to small |beta| or out-of-range actuation is
/// rejected as branch capture.
inline DriftEquilibrium solve_equilibrium(double kappa, const FrictionModel& front,
                                          const FrictionModel& rear, const VehicleParams& p,
                                          const EquilibriumSeed& seed,
                                          const SolverSettings& cfg = {}) {
  if (!(kappa > 0.0)) throw Error("solve_equilibrium: kappa must be positive");
  if (std::abs(seed.beta) < cfg.beta_drift_min)
    throw BranchCapture("solve_equilibrium: seed |beta| below drift threshold");

  Eigen::Vector4d z(seed.v, seed.beta, seed.delta, seed.omega);
  auto full_residual = [&](const Eigen::Vector4d& q) {
    Eigen::Vector4d r;
    r.head<3>() = detail::kinetic_residual(q(0), q(1), q(2), q(3), kappa, p, front, rear,
                                           cfg.turn_sign);
    r(3) = q(1) - cfg.beta_ref;
    return r;
  };

  Eigen::Vector4d r = full_residual(z);
  double rn = r.norm();
  bool converged = rn < cfg.tol;
  int iters_used = 0;
  for (int it = 0; it < cfg.max_iters && !converged; ++it) {
    iters_used = it + 1;
    Eigen::Matrix4d J;
    for (int j = 0; j < 4; ++j) {
      const double h = cfg.fd_step * std::max(1.0, std::abs(z(j)));
      Eigen::Vector4d zp = z, zm = z;
      zp(j) += h;
      zm(j) -= h;
      J.col(j) = (full_residual(zp) - full_residual(zm)) / (2.0 * h);
    }
    const Eigen::Vector4d dz = J.fullPivLu().solve(-r);
    if (!dz.allFinite())
      throw BranchCapture("solve_equilibrium: singular Jacobian at kappa=" +
                          std::to_string(kappa));
    // Backtracking keeps the iterate inside the solver's basin.
    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      Eigen::Vector4d zt = z + step * dz;
      if (zt(0) > 0.05 && zt(3) > 0.0) {
        Eigen::Vector4d rt = full_residual(zt);
        if (rt.norm() < rn || step < 1e-3) {
          z = zt;
          r = rt;
          rn = rt.norm();
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!accepted)
      throw BranchCapture("solve_equilibrium: line search stalled at kappa=" +
                          std::to_string(kappa));
    converged = rn < cfg.tol;
  }
  if (!converged)
    throw BranchCapture("solve_equilibrium: no convergence at kappa=" + std::to_string(kappa) +
                        " residual=" + std::to_string(rn));
  if (std::abs(z(1)) < cfg.beta_drift_min)
    throw BranchCapture("solve_equilibrium: converged to grip branch (|beta|=" +
                        std::to_string(std::abs(z(1))) + ")");
  if (std::abs(z(2)) > p.delta_max || z(3) < 0.0 || z(3) > p.omega_max)
    throw BranchCapture("solve_equilibrium: equilibrium outside actuator limits");

  DriftEquilibrium eq;
  eq.v = z(0);
  eq.beta = z(1);
  eq.delta_ff = z(2);
  eq.omega_ff = z(3);
  eq.kappa = kappa;
  eq.psidot = z(0) * kappa * cfg.turn_sign;
  eq.mu = rear.kind == FrictionModel::Kind::constant_mu ? rear.mu : rear.tire.D;
  eq.residual_norm =
      detail::kinetic_residual(z(0), z(1), z(2), z(3), kappa, p, front, rear, cfg.turn_sign)
          .norm();
  eq.newton_iters = iters_used;
  return eq;
}

/// Independent residual check: rebuilds the full state and measures the
/// body-frame rates through body_rates(), which derives the course angle from
/// atan2 rather than the solver's closed-form assembly.
inline double verify_equilibrium(const DriftEquilibrium& eq, const VehicleParams& p,
                                 const FrictionModel& front, const FrictionModel& rear) {
  VehicleState s;
  s.psi = 0.0;
  s.xdot = eq.v * std::cos(eq.beta);
  s.ydot = eq.v * std::sin(eq.beta);
  s.psidot = eq.psidot;
  const BodyRates r = body_rates(s, {eq.delta_ff, eq.omega_ff}, p, front, rear);
  return std::sqrt(r.vdot * r.vdot + r.betadot * r.betadot + r.psiddot * r.psiddot);
}

// ---------------------------------------------------------------------------
// Feedforward table over a (mu, kappa) grid.
// ---------------------------------------------------------------------------

enum class TableMode : std::uint8_t { constant_mu = 0, magic_formula = 1 };

struct TableCell {
  DriftEquilibrium eq{};
  bool feasible = false;
};

struct FeedforwardResult {
  double delta_ff = 0.0;
  double omega_ff = 0.0;
  double v = 0.0;  // interpolated equilibrium speed, for diagnostics
  bool clamped = false;             // query outside the grid, clamped to range
  bool infeasible_fallback = false; // nearest feasible cell substituted
};

struct EquilibriumTable {
  std::vector<double> mu_grid;     // ascending
  std::vector<double> kappa_grid;  // ascending
  std::vector<TableCell> cells;    // row-major, mu index major
  TableMode mode = TableMode::constant_mu;
  int turn_sign = +1;
  double beta_ref = -kPi / 3.0;
  TireParams base_tire{};  // B, C used in magic_formula mode
  std::uint64_t params_hash = 0;

  std::size_t rows() const { return mu_grid.size(); }
  std::size_t cols() const { return kappa_grid.size(); }
  const TableCell& at(std::size_t i, std::size_t j) const { return cells[i * cols() + j]; }
  TableCell& at(std::size_t i, std::size_t j) { return cells[i * cols() + j]; }

  double feasible_fraction() const {
    if (cells.empty()) return 0.0;
    std::size_t n = 0;
    for (const auto& c : cells) n += c.feasible ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(cells.size());
  }

  double max_residual() const {
    double m = 0.0;
    for (const auto& c : cells)
      if (c.feasible) m = std::max(m, c.eq.residual_norm);
    return m;
  }

  bool operator==(const EquilibriumTable& o) const {
    auto cell_eq = [](const TableCell& a, const TableCell& b) {
      return a.feasible == b.feasible && a.eq.v == b.eq.v && a.eq.beta == b.eq.beta &&
             a.eq.psidot == b.eq.psidot && a.eq.delta_ff == b.eq.delta_ff &&
             a.eq.omega_ff == b.eq.omega_ff && a.eq.kappa == b.eq.kappa &&
             a.eq.mu == b.eq.mu && a.eq.residual_norm == b.eq.residual_norm;
    };
    if (mu_grid != o.mu_grid || kappa_grid != o.kappa_grid || mode != o.mode ||
        turn_sign != o.turn_sign || beta_ref != o.beta_ref ||
        params_hash != o.params_hash || cells.size() != o.cells.size())
      return false;
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (!cell_eq(cells[i], o.cells[i])) return false;
    return true;
  }
};

inline std::uint64_t table_params_hash(const VehicleParams& p, TableMode mode,
                                       const TireParams& base, const SolverSettings& cfg) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "m=%.17g Iz=%.17g lf=%.17g lr=%.17g rf=%.17g rr=%.17g h=%.17g g=%.17g "
                "dmax=%.17g wmax=%.17g wguard=%.17g mode=%d B=%.17g C=%.17g "
                "beta_ref=%.17g turn=%d",
                p.m, p.Iz, p.lf, p.lr, p.rf, p.rr, p.h, p.g, p.delta_max, p.omega_max,
                p.omega_min_guard, static_cast<int>(mode), base.B, base.C, cfg.beta_ref,
                cfg.turn_sign);
  return fnv1a64(buf);
}

namespace detail {

inline FrictionModel table_friction(TableMode mode, double mu, const TireParams& base) {
  if (mode == TableMode::constant_mu) return FrictionModel::constant(mu);
  TireParams t = base;
  t.D = mu;
  return FrictionModel::magic(t);
}

inline EquilibriumSeed seed_from(const DriftEquilibrium& eq) {
  return {eq.v, eq.beta, eq.delta_ff, eq.omega_ff};
}

}  // namespace detail

/// Build the table by continuation: the first kappa column is swept across mu
/// rows from the hand seed, then each row sweeps kappa warm-started from its
/// neighbor. Rows are independent after the first column and run concurrently.
inline EquilibriumTable build_table(const std::vector<double>& mu_grid,
                                    const std::vector<double>& kappa_grid,
                                    const VehicleParams& p, const EquilibriumSeed& hand_seed,
                                    TableMode mode = TableMode::constant_mu,
                                    const TireParams& base_tire = {},
                                    const SolverSettings& cfg = {}) {
  if (mu_grid.empty() || kappa_grid.empty())
    throw Error("build_table: grids must be non-empty");
  for (std::size_t i = 1; i < mu_grid.size(); ++i)
    if (mu_grid[i] <= mu_grid[i - 1]) throw Error("build_table: mu grid not ascending");
  for (std::size_t j = 1; j < kappa_grid.size(); ++j)
    if (kappa_grid[j] <= kappa_grid[j - 1])
      throw Error("build_table: kappa grid not ascending");

  EquilibriumTable t;
  t.mu_grid = mu_grid;
  t.kappa_grid = kappa_grid;
  t.mode = mode;
  t.turn_sign = cfg.turn_sign;
  t.beta_ref = cfg.beta_ref;
  t.base_tire = base_tire;
  t.params_hash = table_params_hash(p, mode, base_tire, cfg);
  t.cells.resize(mu_grid.size() * kappa_grid.size());

  // First column: continuation in mu.
  EquilibriumSeed col_seed = hand_seed;
  for (std::size_t i = 0; i < mu_grid.size(); ++i) {
    const FrictionModel fm = detail::table_friction(mode, mu_grid[i], base_tire);
    try {
      DriftEquilibrium eq = solve_equilibrium(kappa_grid[0], fm, fm, p, col_seed, cfg);
      eq.mu = mu_grid[i];
      t.at(i, 0) = {eq, true};
      col_seed = detail::seed_from(eq);
    } catch (const Error&) {
      t.at(i, 0) = {};
      t.at(i, 0).eq.mu = mu_grid[i];
      t.at(i, 0).eq.kappa = kappa_grid[0];
    }
  }

  // Remaining columns: per-row continuation in kappa, rows in parallel.
  auto sweep_row = [&](std::size_t i) {
    const FrictionModel fm = detail::table_friction(mode, t.mu_grid[i], base_tire);
    std::optional<EquilibriumSeed> seed;
    if (t.at(i, 0).feasible) seed = detail::seed_from(t.at(i, 0).eq);
    for (std::size_t j = 1; j < t.kappa_grid.size(); ++j) {
      if (!seed) break;
      try {
        DriftEquilibrium eq = solve_equilibrium(t.kappa_grid[j], fm, fm, p, *seed, cfg);
        eq.mu = t.mu_grid[i];
        t.at(i, j) = {eq, true};
        seed = detail::seed_from(eq);
      } catch (const Error&) {
        t.at(i, j) = {};
        t.at(i, j).eq.mu = t.mu_grid[i];
        t.at(i, j).eq.kappa = t.kappa_grid[j];
        // keep the previous seed and try the next node
      }
    }
  };
  std::vector<std::future<void>> jobs;
  jobs.reserve(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i)
    jobs.push_back(std::async(std::launch::async, sweep_row, i));
  for (auto& j : jobs) j.get();
  return t;
}

inline void require_table_quality(const EquilibriumTable& t, double min_fraction = 0.8) {
  const double f = t.feasible_fraction();
  if (f < min_fraction)
    throw TableQuality("equilibrium table feasible fraction " + std::to_string(f) +
                       " below " + std::to_string(min_fraction));
}

/// Bilinear feedforward lookup over the (mu, kappa) grid; exact at nodes.
/// Queries outside the grid clamp to the boundary and set `clamped`; cells
/// marked infeasible are never interpolated over -- the nearest feasible node
/// is substituted and flagged instead.
inline FeedforwardResult lookup_feedforward(const EquilibriumTable& t, double mu,
                                            double kappa) {
  if (t.cells.empty()) throw Error("lookup_feedforward: empty table");
  FeedforwardResult out;

  auto bracket = [](const std::vector<double>& g, double q, bool& clamped) {
    std::size_t lo = 0;
    if (q <= g.front()) {
      clamped |= q < g.front();
      return std::pair<std::size_t, double>{0, 0.0};
    }
    if (q >= g.back()) {
      clamped |= q > g.back();
      return std::pair<std::size_t, double>{g.size() - 1, 0.0};
    }
    while (lo + 1 < g.size() && g[lo + 1] <= q) ++lo;
    if (lo + 1 >= g.size()) return std::pair<std::size_t, double>{g.size() - 1, 0.0};
    const double w = (q - g[lo]) / (g[lo + 1] - g[lo]);
    return std::pair<std::size_t, double>{lo, w};
  };

  bool clamped = false;
  auto [i0, wi] = bracket(t.mu_grid, mu, clamped);
  auto [j0, wj] = bracket(t.kappa_grid, kappa, clamped);
  out.clamped = clamped;
  const std::size_t i1 = wi > 0.0 ? i0 + 1 : i0;
  const std::size_t j1 = wj > 0.0 ? j0 + 1 : j0;

  const bool all_feasible = t.at(i0, j0).feasible && t.at(i0, j1).feasible &&
                            t.at(i1, j0).feasible && t.at(i1, j1).feasible;
  if (all_feasible) {
    auto blend = [&](auto&& field) {
      const double f00 = field(t.at(i0, j0).eq), f01 = field(t.at(i0, j1).eq);
      const double f10 = field(t.at(i1, j0).eq), f11 = field(t.at(i1, j1).eq);
      return (1 - wi) * ((1 - wj) * f00 + wj * f01) + wi * ((1 - wj) * f10 + wj * f11);
    };
    out.delta_ff = blend([](const DriftEquilibrium& e) { return e.delta_ff; });
    out.omega_ff = blend([](const DriftEquilibrium& e) { return e.omega_ff; });
    out.v = blend([](const DriftEquilibrium& e) { return e.v; });
    return out;
  }

  // Nearest feasible node in normalized grid coordinates.
  double best = std::numeric_limits<double>::infinity();
  const double qi = static_cast<double>(i0) + wi, qj = static_cast<double>(j0) + wj;
  const TableCell* pick = nullptr;
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) {
      if (!t.at(i, j).feasible) continue;
      const double di = static_cast<double>(i) - qi, dj = static_cast<double>(j) - qj;
      const double d2 = di * di + dj * dj;
      if (d2 < best) {
        best = d2;
        pick = &t.at(i, j);
      }
    }
  if (!pick) throw TableQuality("lookup_feedforward: table has no feasible cells");
  out.delta_ff = pick->eq.delta_ff;
  out.omega_ff = pick->eq.omega_ff;
  out.v = pick->eq.v;
  out.infeasible_fallback = true;
  return out;
}

/// Largest grid curvature whose equilibrium speed (at the given mu) is still
/// at or above v: the feasibility bound for the curvature reference when the
/// vehicle carries excess speed. Returns kappa_hi when even the tightest cell
/// is feasible, kappa_lo when none are.
inline double feasible_kappa_for_speed(const EquilibriumTable& t, double mu, double v) {
  double best = t.kappa_grid.front();
  bool any = false;
  for (std::size_t j = 0; j < t.cols(); ++j) {
    const FeedforwardResult ff = lookup_feedforward(t, mu, t.kappa_grid[j]);
    if (ff.v >= v) {
      best = t.kappa_grid[j];
      any = true;
    }
  }
  return any ? best : t.kappa_grid.front();
}

// ---------------------------------------------------------------------------
// Persistence: versioned little-endian flat file plus a text export.
// ---------------------------------------------------------------------------

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "table files are little-endian; byte-swapped platforms are unsupported");

template <typename T>
void put(std::ostream& os, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  os.write(b, sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  char b[sizeof(T)];
  is.read(b, sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

inline constexpr char kTableMagic[4] = {'D', 'E', 'Q', 'T'};
inline constexpr std::uint32_t kTableVersion = 1;

}  // namespace detail

inline void save_table(const EquilibriumTable& t, std::ostream& os) {
  using namespace detail;
  os.write(kTableMagic, 4);
  put<std::uint32_t>(os, kTableVersion);
  put<std::uint64_t>(os, t.params_hash);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(t.mode));
  put<std::int8_t>(os, static_cast<std::int8_t>(t.turn_sign));
  put<double>(os, t.beta_ref);
  put<double>(os, t.base_tire.B);
  put<double>(os, t.base_tire.C);
  put<double>(os, t.base_tire.D);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(t.mu_grid.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(t.kappa_grid.size()));
  for (double m : t.mu_grid) put<double>(os, m);
  for (double k : t.kappa_grid) put<double>(os, k);
  // Cell layout: v, beta, psidot, delta_ff, omega_ff, residual_norm, feasible.
  // kappa and mu are implied by the cell's grid position.
  for (const auto& c : t.cells) {
    put<double>(os, c.eq.v);
    put<double>(os, c.eq.beta);
    put<double>(os, c.eq.psidot);
    put<double>(os, c.eq.delta_ff);
    put<double>(os, c.eq.omega_ff);
    put<double>(os, c.eq.residual_norm);
    put<std::uint8_t>(os, c.feasible ? 1 : 0);
  }
}

inline EquilibriumTable load_table(std::istream& is) {
  using namespace detail;
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kTableMagic, 4) != 0)
    throw Error("load_table: bad magic");
  const auto version = get<std::uint32_t>(is);
  if (version != kTableVersion)
    throw Error("load_table: unsupported version " + std::to_string(version));
  EquilibriumTable t;
  t.params_hash = get<std::uint64_t>(is);
  t.mode = static_cast<TableMode>(get<std::uint8_t>(is));
  t.turn_sign = get<std::int8_t>(is);
  t.beta_ref = get<double>(is);
  t.base_tire.B = get<double>(is);
  t.base_tire.C = get<double>(is);
  t.base_tire.D = get<double>(is);
  const auto nm = get<std::uint32_t>(is);
  const auto nk = get<std::uint32_t>(is);
  t.mu_grid.resize(nm);
  t.kappa_grid.resize(nk);
  for (auto& m : t.mu_grid) m = get<double>(is);
  for (auto& k : t.kappa_grid) k = get<double>(is);
  t.cells.resize(static_cast<std::size_t>(nm) * nk);
  for (std::size_t idx = 0; idx < t.cells.size(); ++idx) {
    TableCell& c = t.cells[idx];
    c.eq.v = get<double>(is);
    c.eq.beta = get<double>(is);
    c.eq.psidot = get<double>(is);
    c.eq.delta_ff = get<double>(is);
    c.eq.omega_ff = get<double>(is);
    c.eq.residual_norm = get<double>(is);
    c.feasible = get<std::uint8_t>(is) != 0;
    c.eq.mu = t.mu_grid[idx / nk];
    c.eq.kappa = t.kappa_grid[idx % nk];
  }
  if (!is) throw Error("load_table: truncated file");
  return t;
}

inline void save_table_file(const EquilibriumTable& t, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("save_table_file: cannot open " + path);
  save_table(t, os);
}

inline EquilibriumTable load_table_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("load_table_file: cannot open " + path);
  return load_table(is);
}

/// Human-readable export of the table contents.
inline std::string table_to_text(const EquilibriumTable& t) {
  std::ostringstream os;
  os << "# drift equilibrium table\n";
  os << "# mode=" << (t.mode == TableMode::constant_mu ? "constant_mu" : "magic_formula")
     << " turn_sign=" << t.turn_sign << " beta_ref=" << t.beta_ref
     << " params_hash=" << t.params_hash << "\n";
  os << "# feasible_fraction=" << t.feasible_fraction()
     << " max_residual=" << t.max_residual() << "\n";
  os << "# mu kappa feasible v beta psidot delta_ff omega_ff residual\n";
  char line[256];
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) {
      const TableCell& c = t.at(i, j);
      std::snprintf(line, sizeof line, "%.6g %.6g %d %.9g %.9g %.9g %.9g %.9g %.3g\n",
                    t.mu_grid[i], t.kappa_grid[j], c.feasible ? 1 : 0, c.eq.v, c.eq.beta,
                    c.eq.psidot, c.eq.delta_ff, c.eq.omega_ff, c.eq.residual_norm);
      os << line;
    }
  return os.str();
}

}  // namespace drift
