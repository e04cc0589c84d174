#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "cqhj/grid_io.hpp"
#include "cqhj/integrate.hpp"
#include "cqhj/isochrone.hpp"
#include "cqhj/parallel.hpp"
#include "cqhj/scenario.hpp"
#include "cqhj/singular.hpp"
#include "cqhj/wave_model.hpp"

namespace cqhj {

// A pipeline invariant failed at run time (exit code 1 territory, as
// opposed to configuration validation).
struct PipelineError : std::runtime_error {
  explicit PipelineError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

// compact time tag for filenames: 4 -> "4", 2.5 -> "2.5"
inline std::string time_tag(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", t);
  return buf;
}

inline std::vector<double> sorted_launches(const ScenarioConfig& cfg) {
  auto launches = cfg.trajectories.real_launches;
  std::sort(launches.begin(), launches.end());
  return launches;
}

inline std::vector<TrajectoryPath> real_bundle(const WaveModel& w,
                                               const ScenarioConfig& cfg) {
  const auto launches = sorted_launches(cfg);
  std::vector<TrajectoryPath> paths(launches.size());
  parallel_for(paths.size(), cfg.threads, [&](std::size_t i) {
    paths[i] = propagate_real(w, launches[i], 0.0, cfg.T, cfg.integrator);
  });
  return paths;
}

// Bohmian trajectories never cross; a crossing in the computed family means
// the integration is untrustworthy.
inline void verify_non_crossing(const std::vector<TrajectoryPath>& paths) {
  for (std::size_t a = 0; a + 1 < paths.size(); ++a) {
    const auto& lo = paths[a];
    const auto& hi = paths[a + 1];
    if (lo.initial_condition.real() >= hi.initial_condition.real())
      throw PipelineError("real launches must be strictly increasing");
    const std::size_t n = std::min(lo.samples.size(), hi.samples.size());
    for (std::size_t k = 0; k < n; ++k)
      if (!(lo.samples[k].z.real() < hi.samples[k].z.real()))
        throw PipelineError(
            "real trajectories crossed between launches " +
            std::to_string(lo.initial_condition.real()) + " and " +
            std::to_string(hi.initial_condition.real()) + " at t = " +
            std::to_string(lo.samples[k].t));
  }
}

}  // namespace detail

// Crossing targets for one t_c: explicit list, or the positions the real
// trajectories have reached at t_c, so the crossing points trace the real
// dynamics.
inline std::vector<double> isochrone_targets(const WaveModel& w,
                                             const ScenarioConfig& cfg,
                                             double t_c) {
  if (cfg.isochrones.x_targets) {
    auto targets = *cfg.isochrones.x_targets;
    std::sort(targets.begin(), targets.end());
    return targets;
  }
  const auto launches = detail::sorted_launches(cfg);
  std::vector<double> targets(launches.size());
  parallel_for(targets.size(), cfg.threads, [&](std::size_t i) {
    const auto path = propagate_real(w, launches[i], 0.0, t_c, cfg.integrator);
    if (path.status != PathStatus::completed)
      throw PipelineError("real trajectory aborted while seeding isochrone");
    targets[i] = path.back().z.real();
  });
  return targets;
}

namespace detail {

inline IsochroneFamily build_family(const WaveModel& w,
                                    const ScenarioConfig& cfg, double t_c) {
  const auto targets = isochrone_targets(w, cfg, t_c);
  return build_isochrone(w, t_c, targets, cfg.T, cfg.integrator,
                         /*allow_polish=*/true, cfg.threads);
}

}  // namespace detail

// Writes the real-spacetime grids (rho, S, v, Q), the Argand grids of the
// complex fields at the configured times, and the continuity residual.
inline std::vector<std::filesystem::path> run_fields(const ScenarioConfig& cfg) {
  const WaveModel w = cfg.make_model();
  std::vector<std::filesystem::path> written;
  const auto& f = cfg.fields;

  for (RealFieldKind kind : {RealFieldKind::rho, RealFieldKind::S,
                             RealFieldKind::v, RealFieldKind::Q}) {
    const FieldGrid g = sample_real_spacetime(w, f.x_lo, f.x_hi, 0.0, cfg.T,
                                              f.nx, f.nt, kind, cfg.threads);
    auto path = cfg.out_dir / ("real_" + std::string(to_string(kind)) + ".csv");
    write_grid(g, path);
    written.push_back(std::move(path));
  }
  for (double t : f.times) {
    for (ArgandFieldKind kind :
         {ArgandFieldKind::psibar_mod, ArgandFieldKind::psibar_phase,
          ArgandFieldKind::vbar_mod, ArgandFieldKind::vbar_phase}) {
      const FieldGrid g = sample_argand(w, f.argand, f.argand_nx, f.argand_ny,
                                        t, kind, cfg.threads);
      auto path = cfg.out_dir / ("argand_" + std::string(to_string(kind)) +
                                 "_t" + detail::time_tag(t) + ".csv");
      write_grid(g, path);
      written.push_back(std::move(path));
    }
  }
  const FieldGrid res = continuity_residual(w, f.cont_x_lo, f.cont_x_hi, 0.0,
                                            cfg.T, f.cont_nx, f.cont_nt,
                                            cfg.threads);
  auto path = cfg.out_dir / "continuity.csv";
  write_grid(res, path);
  written.push_back(std::move(path));
  return written;
}

// Real trajectories (non-crossing verified in-run) and complex trajectories.
inline std::vector<std::filesystem::path> run_trajectories(
    const ScenarioConfig& cfg) {
  const WaveModel w = cfg.make_model();
  std::vector<std::filesystem::path> written;

  const auto real_paths = detail::real_bundle(w, cfg);
  detail::verify_non_crossing(real_paths);
  auto rp = cfg.out_dir / "real_trajectories.csv";
  write_paths(real_paths, rp);
  written.push_back(std::move(rp));

  std::vector<TrajectoryPath> complex_paths(cfg.trajectories.complex_launches.size());
  parallel_for(complex_paths.size(), cfg.threads, [&](std::size_t i) {
    complex_paths[i] = propagate_complex(w, cfg.trajectories.complex_launches[i],
                                         0.0, cfg.T, cfg.integrator);
  });
  auto cp = cfg.out_dir / "complex_trajectories.csv";
  write_paths(complex_paths, cp);
  written.push_back(std::move(cp));
  return written;
}

// One trajectory file per crossing time t_c.
inline std::vector<std::filesystem::path> run_isochrones(
    const ScenarioConfig& cfg) {
  const WaveModel w = cfg.make_model();
  std::vector<std::filesystem::path> written;
  for (double t_c : cfg.isochrones.tc) {
    const IsochroneFamily fam = detail::build_family(w, cfg, t_c);
    auto path = cfg.out_dir / ("isochrone_tc" + detail::time_tag(t_c) + ".csv");
    write_paths(fam, path);
    written.push_back(std::move(path));
  }
  return written;
}

// Node reports per analysis time; loop and caustic reports per isochrone
// family.
inline std::vector<std::filesystem::path> run_singular(const ScenarioConfig& cfg) {
  const WaveModel w = cfg.make_model();
  std::vector<std::filesystem::path> written;

  for (double t : cfg.singular.times) {
    const auto nodes = find_nodes(w, t, cfg.singular.region,
                                  cfg.singular.grid_n, {}, cfg.threads);
    auto path = cfg.out_dir / ("nodes_t" + detail::time_tag(t) + ".csv");
    write_node_report(nodes, path);
    written.push_back(std::move(path));
  }

  for (double t_c : cfg.singular.tc) {
    const IsochroneFamily fam = detail::build_family(w, cfg, t_c);

    std::vector<LoopReport> loops(fam.members.size());
    parallel_for(fam.members.size(), cfg.threads, [&](std::size_t i) {
      loops[i] = detect_loops(w, fam.members[i].path);
    });
    auto lp = cfg.out_dir / ("loops_tc" + detail::time_tag(t_c) + ".csv");
    write_loop_report(loops, lp);
    written.push_back(std::move(lp));

    std::vector<CausticPoint> caustics;
    try {
      caustics = detect_caustics(fam);
    } catch (const InsufficientFamilyError&) {
      // fewer than 3 completed members: report stays empty
    }
    auto csp = cfg.out_dir / ("caustics_tc" + detail::time_tag(t_c) + ".csv");
    write_caustic_report(caustics, csp);
    written.push_back(std::move(csp));
  }
  return written;
}

}  // namespace cqhj
