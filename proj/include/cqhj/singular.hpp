#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cqhj/integrate.hpp"
#include "cqhj/isochrone.hpp"
#include "cqhj/parallel.hpp"
#include "cqhj/quadrature.hpp"
#include "cqhj/wave_model.hpp"

namespace cqhj {

struct ContourThroughNodeError : std::runtime_error {
  ContourThroughNodeError()
      : std::runtime_error("contour passes through or too close to a node") {}
};

struct InsufficientFamilyError : std::runtime_error {
  InsufficientFamilyError()
      : std::runtime_error("caustic detection needs at least 3 member paths") {}
};

struct Rect {
  double re_lo, re_hi, im_lo, im_hi;
  bool contains(Complex z) const {
    return z.real() >= re_lo && z.real() <= re_hi && z.imag() >= im_lo &&
           z.imag() <= im_hi;
  }
};

// A certified node of psi: residual below threshold and nonzero phase
// winding on a small surrounding contour.
struct NodeRecord {
  Complex z;
  double t = 0.0;
  double residual = 0.0;  // |psi(z, t)|
  int winding = 0;
};

struct CausticPoint {
  Complex z;
  double t = 0.0;
  int member_index = 0;      // lower member of the producing pair
  double tangency_residual = 0.0;  // |normalized cross product|
};

struct NodeSearchConfig {
  double eps_residual_rel = 1e-10;  // relative to the regional peak |psi|
  double dedup_tol = 1e-6;
  double max_winding_radius = 0.2;
  int max_newton_iters = 50;
};

// Phase winding of psi around a circle, by principal-branch phase
// differences with adaptive sample doubling so that every step satisfies
// |dphi| < pi; the result is then an exact integer.
inline int winding_number(const WaveModel& w, Complex center, double radius,
                          double t, int n_samples = 64) {
  constexpr int kMaxSamples = 4096;
  constexpr double kMinRelMagnitude = 1e-6;
  n_samples = std::max(n_samples, 8);
  int refinements_left = 3;
  for (int n = n_samples; n <= kMaxSamples; n *= 2) {
    std::vector<double> phases(n + 1);
    bool contour_ok = true;
    for (int i = 0; i < n; ++i) {
      const double th = 2.0 * std::numbers::pi * i / n;
      const Complex z = center + radius * Complex(std::cos(th), std::sin(th));
      const auto ev = w.evaluate(z, t);
      if (ev.relative_magnitude() < kMinRelMagnitude) {
        contour_ok = false;
        break;
      }
      phases[i] = std::arg(ev.sum);  // log_shift is a positive real factor
    }
    phases[n] = phases[0];  // exact closure
    if (!contour_ok) {
      if (--refinements_left < 0) throw ContourThroughNodeError();
      continue;
    }
    double total = 0.0;
    bool steps_ok = true;
    for (int i = 0; i < n; ++i) {
      double d = phases[i + 1] - phases[i];
      if (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
      if (d <= -std::numbers::pi) d += 2.0 * std::numbers::pi;
      if (std::abs(d) > 0.999 * std::numbers::pi) {
        steps_ok = false;
        break;
      }
      total += d;
    }
    if (!steps_ok) continue;  // double n and retry
    const double turns = total / (2.0 * std::numbers::pi);
    return static_cast<int>(std::llround(turns));
  }
  throw ContourThroughNodeError();
}

// Contour integral of m * v_bar along a closed polygonal contour; by the
// argument principle this is 2 pi hbar times the enclosed winding sum.
inline double circulation(const WaveModel& w, std::span<const Complex> contour,
                          double t, double quad_tol = 1e-9) {
  if (contour.size() < 3)
    throw std::invalid_argument("circulation needs a closed polygon (>= 3 vertices)");
  Complex total = 0.0;
  const double m = w.mass();
  for (std::size_t i = 0; i < contour.size(); ++i) {
    const Complex a = contour[i];
    const Complex b = contour[(i + 1) % contour.size()];
    const Complex dz = b - a;
    try {
      // integral over the edge parameterized on [0, 1]
      total += integrate_adaptive<Complex>(
          [&](double s) { return m * w.v_bar(a + s * dz, t) * dz; }, 0.0, 1.0,
          quad_tol / static_cast<double>(contour.size()));
    } catch (const PoleProximityError&) {
      throw ContourThroughNodeError();
    }
  }
  return total.real();
}

// Node search on a rectangle: seeds where Re psi and Im psi both change
// sign across a grid cell, refined by damped complex Newton
// z <- z - psi/grad psi, deduplicated, and certified by a nonzero winding.
inline std::vector<NodeRecord> find_nodes(const WaveModel& w, double t,
                                          const Rect& region, int grid_n,
                                          const NodeSearchConfig& cfg = {},
                                          int threads = 1) {
  if (grid_n < 16) throw std::invalid_argument("find_nodes requires grid_n >= 16");

  const int nx = grid_n + 1;
  const int ny = grid_n + 1;
  const double dx = (region.re_hi - region.re_lo) / grid_n;
  const double dy = (region.im_hi - region.im_lo) / grid_n;

  // corner values; overflow cells are skipped
  std::vector<Complex> vals(static_cast<std::size_t>(nx) * ny);
  std::vector<char> ok(vals.size(), 1);
  parallel_for(static_cast<std::size_t>(nx), threads, [&](std::size_t i) {
    for (int j = 0; j < ny; ++j) {
      const Complex z(region.re_lo + static_cast<double>(i) * dx,
                      region.im_lo + j * dy);
      try {
        vals[i * ny + j] = w.psi_bar(z, t);
      } catch (const NonFiniteError&) {
        ok[i * ny + j] = 0;
      }
    }
  });

  double peak = 0.0;
  for (std::size_t k = 0; k < vals.size(); ++k)
    if (ok[k]) peak = std::max(peak, std::abs(vals[k]));
  if (peak <= 0.0) return {};
  const double eps_abs = cfg.eps_residual_rel * peak;

  std::vector<Complex> seeds;
  for (int i = 0; i + 1 < nx; ++i) {
    for (int j = 0; j + 1 < ny; ++j) {
      const std::size_t c00 = static_cast<std::size_t>(i) * ny + j;
      const std::size_t c01 = c00 + 1, c10 = c00 + ny, c11 = c10 + 1;
      if (!(ok[c00] && ok[c01] && ok[c10] && ok[c11])) continue;
      auto spread = [&](auto part) {
        const double v0 = part(vals[c00]), v1 = part(vals[c01]);
        const double v2 = part(vals[c10]), v3 = part(vals[c11]);
        return std::minmax({v0, v1, v2, v3});
      };
      const auto [re_min, re_max] = spread([](Complex v) { return v.real(); });
      const auto [im_min, im_max] = spread([](Complex v) { return v.imag(); });
      if (re_min <= 0.0 && re_max >= 0.0 && im_min <= 0.0 && im_max >= 0.0)
        seeds.emplace_back(region.re_lo + (i + 0.5) * dx,
                           region.im_lo + (j + 0.5) * dy);
    }
  }

  // damped Newton refinement per seed
  std::vector<std::optional<Complex>> refined(seeds.size());
  // polish well below the acceptance threshold; quadratic convergence makes
  // the extra iterations free
  const double eps_target = 1e-3 * eps_abs;
  parallel_for(seeds.size(), threads, [&](std::size_t s) {
    try {
      Complex z = seeds[s];
      double best = std::abs(w.psi_bar(z, t));
      for (int it = 0; it < cfg.max_newton_iters && best > eps_target; ++it) {
        const auto ev = w.evaluate(z, t);
        if (std::abs(ev.grad_sum) == 0.0) return;
        const Complex step = -ev.sum / ev.grad_sum;  // -psi / grad psi
        double lambda = 1.0;
        bool moved = false;
        for (int halvings = 0; halvings < 8; ++halvings, lambda *= 0.5) {
          const Complex z_try = z + lambda * step;
          const double val = std::abs(w.psi_bar(z_try, t));
          if (val < best) {
            z = z_try;
            best = val;
            moved = true;
            break;
          }
        }
        if (!moved) return;
      }
      if (best <= eps_abs && region.contains(z)) refined[s] = z;
    } catch (const NonFiniteError&) {
      // seed wandered into the overflow zone: not a usable candidate
    }
  });

  std::vector<Complex> candidates;
  for (const auto& r : refined)
    if (r) candidates.push_back(*r);
  std::sort(candidates.begin(), candidates.end(), [](Complex a, Complex b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  std::vector<Complex> unique;
  for (const auto& z : candidates) {
    bool dup = false;
    for (const auto& u : unique)
      if (std::abs(z - u) < cfg.dedup_tol) { dup = true; break; }
    if (!dup) unique.push_back(z);
  }

  // winding certification; winding 0 candidates are spurious
  std::vector<std::optional<NodeRecord>> certified(unique.size());
  parallel_for(unique.size(), threads, [&](std::size_t i) {
    double r_w = cfg.max_winding_radius;
    for (std::size_t j = 0; j < unique.size(); ++j)
      if (j != i) r_w = std::min(r_w, 0.5 * std::abs(unique[i] - unique[j]));
    try {
      const int wd = winding_number(w, unique[i], r_w, t);
      if (wd != 0) {
        NodeRecord rec;
        rec.z = unique[i];
        rec.t = t;
        rec.residual = std::abs(w.psi_bar(unique[i], t));
        rec.winding = wd;
        certified[i] = rec;
      }
    } catch (const ContourThroughNodeError&) {
      // cannot certify: drop the candidate
    }
  });

  std::vector<NodeRecord> nodes;
  for (const auto& c : certified)
    if (c) nodes.push_back(*c);
  std::sort(nodes.begin(), nodes.end(), [](const NodeRecord& a, const NodeRecord& b) {
    return a.z.real() != b.z.real() ? a.z.real() < b.z.real()
                                    : a.z.imag() < b.z.imag();
  });
  return nodes;
}

// Least-squares line fit through node positions; returns the angle of the
// real axis measured from the fitted nodal line (clockwise-positive tilt).
// With this sign the symmetric-collision node line sweeps from positive
// through zero to negative as the interference maximum passes.
inline double node_line_angle(std::span<const NodeRecord> nodes) {
  if (nodes.size() < 2)
    throw std::invalid_argument("node_line_angle needs >= 2 nodes");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<double>(nodes.size());
  for (const auto& rec : nodes) {
    sx += rec.z.real();
    sy += rec.z.imag();
    sxx += rec.z.real() * rec.z.real();
    sxy += rec.z.real() * rec.z.imag();
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw std::invalid_argument("nodes are vertically aligned");
  const double slope = (n * sxy - sx * sy) / denom;
  return -std::atan(slope);
}

struct LoopRecord {
  double t_enter = 0.0;   // interpolated times of the self-intersection
  double t_exit = 0.0;
  Complex at;             // intersection point
  int cross_sign = 0;     // orientation of the crossing
  int winding = 0;        // psi winding of the loop boundary at mid-time
  bool winding_certified = false;
};

struct LoopReport {
  std::vector<LoopRecord> loops;
  std::size_t count() const { return loops.size(); }
};

namespace detail {

// Phase winding of psi along an arbitrary closed polygon at fixed t, with
// recursive edge subdivision to keep every step below pi.
inline std::optional<int> polygon_winding(const WaveModel& w,
                                          std::span<const Complex> poly,
                                          double t) {
  constexpr int kMaxDepth = 24;
  double total = 0.0;
  // step phase difference with midpoint subdivision
  auto step = [&](auto&& self, Complex a, Complex b, double pa, double pb,
                  int depth) -> bool {
    double d = pb - pa;
    if (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
    if (d <= -std::numbers::pi) d += 2.0 * std::numbers::pi;
    if (std::abs(d) < 0.999 * std::numbers::pi) {
      total += d;
      return true;
    }
    if (depth >= kMaxDepth) return false;
    const Complex mid = 0.5 * (a + b);
    const auto ev = w.evaluate(mid, t);
    if (ev.relative_magnitude() < 1e-9) return false;
    const double pm = std::arg(ev.sum);
    return self(self, a, mid, pa, pm, depth + 1) &&
           self(self, mid, b, pm, pb, depth + 1);
  };
  std::vector<double> phases(poly.size());
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto ev = w.evaluate(poly[i], t);
    if (ev.relative_magnitude() < 1e-9) return std::nullopt;
    phases[i] = std::arg(ev.sum);
  }
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const std::size_t j = (i + 1) % poly.size();
    if (!step(step, poly[i], poly[j], phases[i], phases[j], 0))
      return std::nullopt;
  }
  return static_cast<int>(std::llround(total / (2.0 * std::numbers::pi)));
}

struct SegmentHit {
  double u, v;  // local parameters on the two segments
  Complex at;
  int sign;
};

inline std::optional<SegmentHit> segment_intersection(Complex p0, Complex p1,
                                                      Complex q0, Complex q1) {
  const double rx = p1.real() - p0.real(), ry = p1.imag() - p0.imag();
  const double sx = q1.real() - q0.real(), sy = q1.imag() - q0.imag();
  const double den = rx * sy - ry * sx;
  if (den == 0.0) return std::nullopt;
  const double dxq = q0.real() - p0.real(), dyq = q0.imag() - p0.imag();
  const double u = (dxq * sy - dyq * sx) / den;
  const double v = (dxq * ry - dyq * rx) / den;
  constexpr double kEdge = 1e-12;
  if (u <= kEdge || u >= 1.0 - kEdge || v <= kEdge || v >= 1.0 - kEdge)
    return std::nullopt;
  SegmentHit hit;
  hit.u = u;
  hit.v = v;
  hit.at = Complex(p0.real() + u * rx, p0.imag() + u * ry);
  hit.sign = den > 0.0 ? 1 : -1;
  return hit;
}

}  // namespace detail

// Counts signed self-intersections of a complex trajectory polyline; each
// one closes a loop. The psi winding of the loop boundary, evaluated at the
// loop's mid-time, associates the loop with the node it encircles. Works on
// partial (aborted) paths too.
inline LoopReport detect_loops(const WaveModel& w, const TrajectoryPath& path) {
  if (path.kind != PathKind::complex_trajectory)
    throw std::invalid_argument("detect_loops expects a complex trajectory");
  LoopReport report;
  const auto& s = path.samples;
  if (s.size() < 4) return report;
  const std::size_t n_seg = s.size() - 1;
  for (std::size_t i = 0; i + 2 < n_seg; ++i) {
    const Complex p0 = s[i].z, p1 = s[i + 1].z;
    const double ilo = std::min(p0.real(), p1.real());
    const double ihi = std::max(p0.real(), p1.real());
    for (std::size_t j = i + 2; j < n_seg; ++j) {
      const Complex q0 = s[j].z, q1 = s[j + 1].z;
      if (std::max(q0.real(), q1.real()) < ilo ||
          std::min(q0.real(), q1.real()) > ihi)
        continue;
      const auto hit = detail::segment_intersection(p0, p1, q0, q1);
      if (!hit) continue;
      LoopRecord loop;
      loop.t_enter = s[i].t + hit->u * (s[i + 1].t - s[i].t);
      loop.t_exit = s[j].t + hit->v * (s[j + 1].t - s[j].t);
      loop.at = hit->at;
      loop.cross_sign = hit->sign;
      // loop boundary: intersection point, then the samples between
      std::vector<Complex> poly;
      poly.push_back(hit->at);
      for (std::size_t k = i + 1; k <= j; ++k) poly.push_back(s[k].z);
      const double t_mid = 0.5 * (loop.t_enter + loop.t_exit);
      if (const auto wd = detail::polygon_winding(w, poly, t_mid)) {
        loop.winding = *wd;
        loop.winding_certified = true;
      }
      report.loops.push_back(loop);
    }
  }
  return report;
}

namespace detail {

// 4-point Lagrange interpolation of member positions at off-sample times.
inline Complex interp_member(const std::vector<PathSample>& s, double t) {
  const std::size_t n = s.size();
  std::size_t hi = 1;
  while (hi + 1 < n && s[hi].t < t) ++hi;
  const std::size_t lo = hi - 1;
  std::size_t first = lo > 0 ? lo - 1 : 0;
  if (first + 3 >= n) first = n - 4;
  Complex acc = 0.0;
  for (std::size_t a = first; a < first + 4; ++a) {
    double basis = 1.0;
    for (std::size_t b = first; b < first + 4; ++b)
      if (b != a) basis *= (t - s[b].t) / (s[a].t - s[b].t);
    acc += basis * s[a].z;
  }
  return acc;
}

}  // namespace detail

// Envelope (caustic) detection over a trajectory family z(t; s) sampled on
// a common time grid: cells where the cross product of the flow direction
// (d z/d t) and the family direction (d z/d s) changes sign are refined by
// bisection in t. Throws InsufficientFamilyError for fewer than 3 members.
inline std::vector<CausticPoint> detect_caustics(
    std::span<const TrajectoryPath> members, double eps_caustic = 1e-6) {
  std::vector<const TrajectoryPath*> usable;
  for (const auto& p : members)
    if (p.samples.size() >= 4) usable.push_back(&p);
  if (usable.size() < 3) throw InsufficientFamilyError();

  // common time grid: use the shortest member's sample times; members must
  // share the grid where they overlap
  std::size_t n_t = usable.front()->samples.size();
  for (const auto* p : usable) n_t = std::min(n_t, p->samples.size());
  for (const auto* p : usable)
    for (std::size_t k = 0; k < n_t; ++k)
      if (std::abs(p->samples[k].t - usable.front()->samples[k].t) > 1e-9)
        throw std::invalid_argument("caustic members must share the sample grid");

  const std::size_t n_s = usable.size();
  auto zat = [&](std::size_t s, std::size_t k) { return usable[s]->samples[k].z; };
  auto tat = [&](std::size_t k) { return usable.front()->samples[k].t; };

  // normalized cross product at interior grid cells
  auto cross_at = [&](std::size_t s, std::size_t k) {
    const Complex dz_dt = (zat(s, k + 1) - zat(s, k - 1)) /
                          (tat(k + 1) - tat(k - 1));
    const Complex dz_ds = 0.5 * (zat(s + 1, k) - zat(s - 1, k));
    const double cross = dz_dt.real() * dz_ds.imag() - dz_dt.imag() * dz_ds.real();
    const double scale = std::abs(dz_dt) * std::abs(dz_ds);
    return scale > 0.0 ? cross / scale : 0.0;
  };
  // same quantity at an interpolated time
  auto cross_interp = [&](std::size_t s, double t, double dt) {
    auto member = [&](std::size_t ss, double tt) {
      return detail::interp_member(usable[ss]->samples, tt);
    };
    const Complex dz_dt = (member(s, t + dt) - member(s, t - dt)) / (2.0 * dt);
    const Complex dz_ds = 0.5 * (member(s + 1, t) - member(s - 1, t));
    const double cross = dz_dt.real() * dz_ds.imag() - dz_dt.imag() * dz_ds.real();
    const double scale = std::abs(dz_dt) * std::abs(dz_ds);
    return scale > 0.0 ? cross / scale : 0.0;
  };

  std::vector<CausticPoint> out;
  for (std::size_t s = 1; s + 1 < n_s; ++s) {
    for (std::size_t k = 1; k + 2 < n_t; ++k) {
      const double c0 = cross_at(s, k);
      const double c1 = cross_at(s, k + 1);
      if (c0 == 0.0 && c1 == 0.0) continue;
      if (c0 * c1 > 0.0) continue;
      // bisection in t inside [t_k, t_{k+1}]
      double ta = tat(k), tb = tat(k + 1);
      const double dt = 0.5 * (tat(k + 1) - tat(k));
      double ca = c0;
      double tm = 0.5 * (ta + tb), cm = 0.0;
      for (int it = 0; it < 48; ++it) {
        tm = 0.5 * (ta + tb);
        cm = cross_interp(s, tm, dt);
        if (std::abs(cm) <= 0.5 * eps_caustic) break;
        if ((cm > 0.0) == (ca > 0.0)) {
          ta = tm;
          ca = cm;
        } else {
          tb = tm;
        }
      }
      if (std::abs(cm) > eps_caustic) continue;
      CausticPoint cp;
      cp.t = tm;
      cp.z = detail::interp_member(usable[s]->samples, tm);
      cp.member_index = static_cast<int>(s);
      cp.tangency_residual = std::abs(cm);
      out.push_back(cp);
    }
  }
  std::sort(out.begin(), out.end(), [](const CausticPoint& a, const CausticPoint& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.member_index != b.member_index) return a.member_index < b.member_index;
    return a.z.real() < b.z.real();
  });
  return out;
}

// Convenience: caustics of an isochrone family's completed members.
inline std::vector<CausticPoint> detect_caustics(const IsochroneFamily& fam,
                                                 double eps_caustic = 1e-6) {
  std::vector<TrajectoryPath> paths;
  for (const auto& mbr : fam.members)
    if (mbr.status == PathStatus::completed) paths.push_back(mbr.path);
  return detect_caustics(std::span<const TrajectoryPath>(paths), eps_caustic);
}

}  // namespace cqhj
