#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "cqhj/integrate.hpp"
#include "cqhj/parallel.hpp"
#include "cqhj/wave_model.hpp"

namespace cqhj {

// Crossing tolerance |Im z(t_c)|; two orders above the integrator tolerance.
inline constexpr double kEpsCross = 1e-8;

struct IsochroneMember {
  double x_target = 0.0;   // requested real-axis crossing point
  Complex z0;              // initial condition at t = 0
  TrajectoryPath path;     // [0, T] when completed; partial when aborted
  Complex z_at_tc;         // position recorded exactly at t_c
  double crossing_residual = std::numeric_limits<double>::quiet_NaN();
  bool polished = false;   // Newton refinement was applied
  PathStatus status = PathStatus::completed;
};

// A family of complex trajectories crossing the real axis at a shared time.
struct IsochroneFamily {
  double t_c = 0.0;
  double T = 0.0;
  std::vector<IsochroneMember> members;

  // Largest |Im z(t_c)| over completed members (aborted ones carry no
  // crossing and are excluded).
  double max_crossing_residual() const {
    double r = 0.0;
    for (const auto& mbr : members)
      if (mbr.status == PathStatus::completed)
        r = std::max(r, std::abs(mbr.z_at_tc.imag()));
    return r;
  }
};

namespace detail {

// Concatenates leg [0, t_c] and leg [t_c, T]; the shared sample at t_c is
// kept once, so the crossing time appears exactly in the path.
inline TrajectoryPath stitch(const TrajectoryPath& first,
                             const TrajectoryPath& second) {
  TrajectoryPath out = first;
  out.t1 = second.t1;
  out.status = second.status;
  out.stats.steps += second.stats.steps;
  out.stats.rejected += second.stats.rejected;
  out.stats.min_psi_rel = std::min(out.stats.min_psi_rel, second.stats.min_psi_rel);
  out.stats.error_estimate += second.stats.error_estimate;
  for (std::size_t i = 1; i < second.samples.size(); ++i)
    out.samples.push_back(second.samples[i]);
  return out;
}

}  // namespace detail

// Builds one isochrone member crossing the real axis at (x, t_c):
// backward integration t_c -> 0 gives z0; Newton shooting (variational
// jacobian) polishes z0 when the round-trip residual exceeds kEpsCross;
// the final path spans [0, T] with an exact sample at t_c.
inline IsochroneMember build_isochrone_member(const WaveModel& w, double x,
                                              double t_c, double T,
                                              const IntegratorConfig& cfg,
                                              bool allow_polish = true) {
  IsochroneMember mbr;
  mbr.x_target = x;
  const Complex target(x, 0.0);

  Complex z0 = target;
  if (t_c > 0.0) {
    TrajectoryPath back = propagate_complex(w, target, t_c, 0.0, cfg);
    if (back.status != PathStatus::completed) {
      mbr.status = back.status;
      mbr.path = std::move(back);
      mbr.z0 = mbr.path.back().z;
      return mbr;
    }
    z0 = back.back().z;
  }

  auto shoot = [&](Complex z) {
    return propagate_complex(w, z, 0.0, t_c, cfg);
  };

  TrajectoryPath leg1 = t_c > 0.0 ? shoot(z0) : TrajectoryPath{};
  if (t_c > 0.0) {
    if (leg1.status != PathStatus::completed) {
      mbr.status = leg1.status;
      mbr.path = std::move(leg1);
      mbr.z0 = z0;
      return mbr;
    }
    Complex residual = leg1.back().z - target;
    for (int it = 0; allow_polish && std::abs(residual) > 0.3 * kEpsCross && it < 8; ++it) {
      const JacobianResult var = variational_jacobian(w, z0, 0.0, t_c, cfg);
      if (var.path.status != PathStatus::completed ||
          std::abs(var.jacobian) == 0.0)
        break;
      z0 -= residual / var.jacobian;
      TrajectoryPath retry = shoot(z0);
      if (retry.status != PathStatus::completed) break;
      leg1 = std::move(retry);
      residual = leg1.back().z - target;
      mbr.polished = true;
    }
  } else {
    leg1.kind = PathKind::complex_trajectory;
    leg1.t0 = leg1.t1 = 0.0;
    leg1.initial_condition = z0;
    leg1.samples.push_back({0.0, z0});
  }

  mbr.z0 = z0;
  mbr.z_at_tc = leg1.back().z;
  mbr.crossing_residual = std::abs(mbr.z_at_tc.imag());

  if (T > t_c) {
    TrajectoryPath leg2 = propagate_complex(w, mbr.z_at_tc, t_c, T, cfg);
    mbr.path = detail::stitch(leg1, leg2);
    mbr.status = leg2.status;
  } else {
    mbr.path = std::move(leg1);
    mbr.status = mbr.path.status;
  }
  return mbr;
}

// Builds the family for a list of crossing targets. Per-target failures
// (pole aborts on the backward leg) are recorded as aborted members, not
// dropped. Members are built in parallel; the output order follows
// x_targets regardless of scheduling.
inline IsochroneFamily build_isochrone(const WaveModel& w, double t_c,
                                       std::span<const double> x_targets,
                                       double T, const IntegratorConfig& cfg,
                                       bool allow_polish = true,
                                       int threads = 1) {
  if (t_c < 0.0 || t_c > T)
    throw std::invalid_argument("build_isochrone requires 0 <= t_c <= T");
  IsochroneFamily fam;
  fam.t_c = t_c;
  fam.T = T;
  fam.members.resize(x_targets.size());
  parallel_for(x_targets.size(), threads, [&](std::size_t i) {
    fam.members[i] =
        build_isochrone_member(w, x_targets[i], t_c, T, cfg, allow_polish);
  });
  return fam;
}

struct CrossingRecord {
  double t = 0.0;          // crossing time (sample time of the real path)
  double x = 0.0;          // real-trajectory position at t
  Complex z0;              // initial condition of the crossing complex path
  double residual = std::numeric_limits<double>::quiet_NaN();  // |Im z(t)|
  PathStatus status = PathStatus::completed;
};

struct CrossingReport {
  std::vector<CrossingRecord> records;

  std::size_t completed_count() const {
    std::size_t n = 0;
    for (const auto& r : records)
      if (r.status == PathStatus::completed) ++n;
    return n;
  }
};

// Reconstructs a real trajectory as crossings of distinct complex
// trajectories: for every stride-th sample (t_k, x_k) of the real path, the
// complex trajectory crossing the axis there is built and its residual
// reported. The z0 values demonstrate that one real trajectory is traced by
// many different complex ones.
inline CrossingReport real_from_crossings(const WaveModel& w,
                                          const TrajectoryPath& real_path,
                                          const IntegratorConfig& cfg,
                                          std::size_t stride = 1,
                                          int threads = 1) {
  if (real_path.kind != PathKind::real_trajectory)
    throw std::invalid_argument("real_from_crossings expects a real trajectory");
  if (real_path.status != PathStatus::completed)
    throw std::invalid_argument("real_from_crossings expects a completed path");
  if (stride == 0) stride = 1;

  std::vector<const PathSample*> picks;
  for (std::size_t i = 0; i < real_path.samples.size(); i += stride)
    picks.push_back(&real_path.samples[i]);

  CrossingReport report;
  report.records.resize(picks.size());
  parallel_for(picks.size(), threads, [&](std::size_t i) {
    const auto& s = *picks[i];
    CrossingRecord rec;
    rec.t = s.t;
    rec.x = s.z.real();
    const IsochroneMember mbr =
        build_isochrone_member(w, rec.x, s.t, s.t, cfg);
    rec.z0 = mbr.z0;
    rec.status = mbr.status;
    if (mbr.status == PathStatus::completed) rec.residual = mbr.crossing_residual;
    report.records[i] = rec;
  });
  return report;
}

}  // namespace cqhj
