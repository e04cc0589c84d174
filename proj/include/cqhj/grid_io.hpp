#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cqhj/integrate.hpp"
#include "cqhj/isochrone.hpp"
#include "cqhj/parallel.hpp"
#include "cqhj/singular.hpp"
#include "cqhj/wave_model.hpp"

namespace cqhj {

struct IoError : std::runtime_error {
  IoError(const std::string& what, const std::filesystem::path& path)
      : std::runtime_error(what + ": " + path.string()) {}
};

enum class RealFieldKind { rho, S, v, Q };
enum class ArgandFieldKind { psibar_mod, psibar_phase, vbar_mod, vbar_phase };

inline const char* to_string(RealFieldKind f) {
  switch (f) {
    case RealFieldKind::rho: return "rho";
    case RealFieldKind::S: return "S";
    case RealFieldKind::v: return "v";
    case RealFieldKind::Q: return "Q";
  }
  return "?";
}

inline const char* to_string(ArgandFieldKind f) {
  switch (f) {
    case ArgandFieldKind::psibar_mod: return "psibar_mod";
    case ArgandFieldKind::psibar_phase: return "psibar_phase";
    case ArgandFieldKind::vbar_mod: return "vbar_mod";
    case ArgandFieldKind::vbar_phase: return "vbar_phase";
  }
  return "?";
}

// Dense field samples on a rectangular grid. Role of (c1, c2):
// real space-time grids use (x, t); Argand grids use (Re z, Im z).
// Cells where the field is undefined (node-adjacent) or non-finite are
// masked, never filled with sentinel values.
struct FieldGrid {
  std::string field;
  std::vector<double> c1;      // size n1
  std::vector<double> c2;      // size n2
  std::vector<double> values;  // row-major, c2 fastest; size n1*n2
  std::vector<std::uint8_t> mask;
  double t = 0.0;  // evaluation time for fixed-t (Argand) grids

  std::size_t n1() const { return c1.size(); }
  std::size_t n2() const { return c2.size(); }
  double& at(std::size_t i, std::size_t j) { return values[i * n2() + j]; }
  double value(std::size_t i, std::size_t j) const { return values[i * n2() + j]; }
  bool masked(std::size_t i, std::size_t j) const { return mask[i * n2() + j] != 0; }
  void set_masked(std::size_t i, std::size_t j) { mask[i * n2() + j] = 1; }
};

namespace detail {

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n < 2) throw std::invalid_argument("grid axes need at least 2 points");
  if (!(lo < hi)) throw std::invalid_argument("grid range bounds must be ordered");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  out.back() = hi;
  return out;
}

inline FieldGrid make_grid(std::string field, std::vector<double> c1,
                           std::vector<double> c2) {
  FieldGrid g;
  g.field = std::move(field);
  g.c1 = std::move(c1);
  g.c2 = std::move(c2);
  g.values.assign(g.n1() * g.n2(), 0.0);
  g.mask.assign(g.n1() * g.n2(), 0);
  return g;
}

}  // namespace detail

// Real-axis space-time sampling of rho, S, v or Q. c1 = x, c2 = t.
inline FieldGrid sample_real_spacetime(const WaveModel& w, double x_lo,
                                       double x_hi, double t_lo, double t_hi,
                                       std::size_t nx, std::size_t nt,
                                       RealFieldKind field, int threads = 1) {
  FieldGrid g = detail::make_grid(to_string(field),
                                  detail::linspace(x_lo, x_hi, nx),
                                  detail::linspace(t_lo, t_hi, nt));
  parallel_for(nx, threads, [&](std::size_t i) {
    for (std::size_t j = 0; j < nt; ++j) {
      try {
        switch (field) {
          case RealFieldKind::rho:
            g.at(i, j) = w.rho(g.c1[i], g.c2[j]);
            break;
          case RealFieldKind::S:
            g.at(i, j) = w.real_fields(g.c1[i], g.c2[j]).S;
            break;
          case RealFieldKind::v:
            g.at(i, j) = w.real_fields(g.c1[i], g.c2[j]).v;
            break;
          case RealFieldKind::Q:
            g.at(i, j) = w.quantum_potential(g.c1[i], g.c2[j]);
            break;
        }
        if (!std::isfinite(g.value(i, j))) g.set_masked(i, j);
      } catch (const NodeAtXError&) {
        g.set_masked(i, j);
      } catch (const NonFiniteError&) {
        g.set_masked(i, j);
      }
    }
  });
  return g;
}

// Argand-plane sampling of the complex fields' polar components at fixed t.
// c1 = Re z, c2 = Im z; overflow and pole cells are masked.
inline FieldGrid sample_argand(const WaveModel& w, const Rect& rect,
                               std::size_t nx, std::size_t ny, double t,
                               ArgandFieldKind field, int threads = 1) {
  FieldGrid g = detail::make_grid(to_string(field),
                                  detail::linspace(rect.re_lo, rect.re_hi, nx),
                                  detail::linspace(rect.im_lo, rect.im_hi, ny));
  g.t = t;
  parallel_for(nx, threads, [&](std::size_t i) {
    for (std::size_t j = 0; j < ny; ++j) {
      const Complex z(g.c1[i], g.c2[j]);
      try {
        switch (field) {
          case ArgandFieldKind::psibar_mod:
            g.at(i, j) = std::abs(w.psi_bar(z, t));
            break;
          case ArgandFieldKind::psibar_phase: {
            const auto ev = w.evaluate(z, t);
            if (ev.at_node()) throw PoleProximityError(z, t);
            g.at(i, j) = std::arg(ev.sum);  // phase unaffected by the shift
            break;
          }
          case ArgandFieldKind::vbar_mod:
            g.at(i, j) = std::abs(w.v_bar(z, t));
            break;
          case ArgandFieldKind::vbar_phase:
            g.at(i, j) = polar_decompose(w.v_bar(z, t)).second;
            break;
        }
        if (!std::isfinite(g.value(i, j))) g.set_masked(i, j);
      } catch (const PoleProximityError&) {
        g.set_masked(i, j);
      } catch (const NonFiniteError&) {
        g.set_masked(i, j);
      }
    }
  });
  return g;
}

// Residual of the continuity equation d rho/dt + d(rho v)/dx by 4th-order
// central differences of the analytically evaluated fields. Stencil margins
// and node-adjacent cells are masked. c1 = x, c2 = t.
inline FieldGrid continuity_residual(const WaveModel& w, double x_lo,
                                     double x_hi, double t_lo, double t_hi,
                                     std::size_t nx, std::size_t nt,
                                     int threads = 1) {
  if (nx < 5 || nt < 5)
    throw std::invalid_argument("continuity_residual needs nx, nt >= 5");
  FieldGrid g = detail::make_grid("continuity_residual",
                                  detail::linspace(x_lo, x_hi, nx),
                                  detail::linspace(t_lo, t_hi, nt));
  const double hx = g.c1[1] - g.c1[0];
  const double ht = g.c2[1] - g.c2[0];

  std::vector<double> rho(nx * nt), flux(nx * nt);
  std::vector<std::uint8_t> bad(nx * nt, 0);
  parallel_for(nx, threads, [&](std::size_t i) {
    for (std::size_t j = 0; j < nt; ++j) {
      try {
        const auto f = w.real_fields(g.c1[i], g.c2[j]);
        rho[i * nt + j] = f.rho;
        flux[i * nt + j] = f.rho * f.v;
      } catch (const NodeAtXError&) {
        bad[i * nt + j] = 1;
      }
    }
  });

  parallel_for(nx, threads, [&](std::size_t i) {
    for (std::size_t j = 0; j < nt; ++j) {
      if (i < 2 || i + 2 >= nx || j < 2 || j + 2 >= nt) {
        g.set_masked(i, j);
        continue;
      }
      bool usable = true;
      for (int k = -2; k <= 2 && usable; ++k)
        usable = !bad[(i + k) * nt + j] && !bad[i * nt + (j + k)];
      if (!usable) {
        g.set_masked(i, j);
        continue;
      }
      const auto d4 = [](double m2, double m1, double p1, double p2, double h) {
        return (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h);
      };
      const double drho_dt = d4(rho[i * nt + j - 2], rho[i * nt + j - 1],
                                rho[i * nt + j + 1], rho[i * nt + j + 2], ht);
      const double dflux_dx = d4(flux[(i - 2) * nt + j], flux[(i - 1) * nt + j],
                                 flux[(i + 1) * nt + j], flux[(i + 2) * nt + j], hx);
      g.at(i, j) = drho_dt + dflux_dx;
    }
  });
  return g;
}

inline double masked_max_abs(const FieldGrid& g) {
  double m = 0.0;
  for (std::size_t k = 0; k < g.values.size(); ++k)
    if (!g.mask[k]) m = std::max(m, std::abs(g.values[k]));
  return m;
}

namespace detail {

// 17 significant digits: round-trip exact for double.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create output directory", path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);  // fixed newlines on any host
  if (!out) throw IoError("cannot open for writing", path);
  return out;
}

inline void finish_out(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed", path);
}

}  // namespace detail

// Grid CSV: header `c1,c2,value,mask`; row-major, c2 fastest; masked cells
// carry value 0 so no non-finite number ever reaches the file.
inline void write_grid(const FieldGrid& g, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "c1,c2,value,mask\n";
  for (std::size_t i = 0; i < g.n1(); ++i)
    for (std::size_t j = 0; j < g.n2(); ++j) {
      const bool m = g.masked(i, j);
      out << detail::fmt(g.c1[i]) << ',' << detail::fmt(g.c2[j]) << ','
          << detail::fmt(m ? 0.0 : g.value(i, j)) << ',' << (m ? '1' : '0')
          << '\n';
    }
  detail::finish_out(out, path);
}

// Trajectory CSV: header `member,t,re,im,status`; rows sorted by
// (member, t) regardless of integration direction.
inline void write_paths(std::span<const TrajectoryPath> paths,
                        const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "member,t,re,im,status\n";
  for (std::size_t m = 0; m < paths.size(); ++m) {
    const auto& p = paths[m];
    const char* status = to_string(p.status);
    const bool reversed =
        p.samples.size() > 1 && p.samples.front().t > p.samples.back().t;
    for (std::size_t k = 0; k < p.samples.size(); ++k) {
      const auto& s = p.samples[reversed ? p.samples.size() - 1 - k : k];
      out << m << ',' << detail::fmt(s.t) << ',' << detail::fmt(s.z.real())
          << ',' << detail::fmt(s.z.imag()) << ',' << status << '\n';
    }
  }
  detail::finish_out(out, path);
}

inline void write_paths(const IsochroneFamily& fam,
                        const std::filesystem::path& path) {
  std::vector<TrajectoryPath> paths;
  paths.reserve(fam.members.size());
  for (const auto& mbr : fam.members) paths.push_back(mbr.path);
  write_paths(paths, path);
}

// Node report CSV: header `t,re,im,residual,winding`.
inline void write_node_report(std::span<const NodeRecord> nodes,
                              const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "t,re,im,residual,winding\n";
  for (const auto& n : nodes)
    out << detail::fmt(n.t) << ',' << detail::fmt(n.z.real()) << ','
        << detail::fmt(n.z.imag()) << ',' << detail::fmt(n.residual) << ','
        << n.winding << '\n';
  detail::finish_out(out, path);
}

// Caustic report CSV: header `t,re,im,member,residual`.
inline void write_caustic_report(std::span<const CausticPoint> points,
                                 const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "t,re,im,member,residual\n";
  for (const auto& c : points)
    out << detail::fmt(c.t) << ',' << detail::fmt(c.z.real()) << ','
        << detail::fmt(c.z.imag()) << ',' << c.member_index << ','
        << detail::fmt(c.tangency_residual) << '\n';
  detail::finish_out(out, path);
}

// Loop report CSV: one row per detected loop of each member.
inline void write_loop_report(std::span<const LoopReport> reports,
                              const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "member,t_enter,t_exit,re,im,winding,certified\n";
  for (std::size_t m = 0; m < reports.size(); ++m)
    for (const auto& loop : reports[m].loops)
      out << m << ',' << detail::fmt(loop.t_enter) << ','
          << detail::fmt(loop.t_exit) << ',' << detail::fmt(loop.at.real())
          << ',' << detail::fmt(loop.at.imag()) << ',' << loop.winding << ','
          << (loop.winding_certified ? '1' : '0') << '\n';
  detail::finish_out(out, path);
}

}  // namespace cqhj
