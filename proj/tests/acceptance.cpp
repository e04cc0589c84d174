// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Runs against the default two-packet collision scenario.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cqhj/grid_io.hpp"
#include "cqhj/integrate.hpp"
#include "cqhj/isochrone.hpp"
#include "cqhj/pipeline.hpp"
#include "cqhj/quadrature.hpp"
#include "cqhj/scenario.hpp"
#include "cqhj/singular.hpp"
#include "cqhj/wave_model.hpp"

namespace fs = std::filesystem;
using namespace cqhj;

namespace {

constexpr double kPi = std::numbers::pi;

WaveModel collision_model() {
  return WaveModel({{-8.0, 2.0, 1.0, 1.0, 1.0}, {8.0, -2.0, 1.0, 1.0, 1.0}});
}

double uniform(std::mt19937& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng()) / 4294967296.0);
}

// Node line of the collision model (derived from the packet ratio and
// verified against |psi| minima): z_k = i pi (2k+1)/A, A = (8-2t)/sigma~ - 4i.
std::vector<Complex> oracle_nodes(double t, double radius_cap = 40.0) {
  const GaussianPacket p{-8.0, 2.0, 1.0, 1.0, 1.0};
  const Complex A =
      (8.0 - 2.0 * t) / complex_spreading(p, t) - Complex(0.0, 4.0);
  std::vector<Complex> out;
  for (int k = -64; k < 64; ++k) {
    const Complex z = Complex(0.0, kPi * (2 * k + 1)) / A;
    if (std::abs(z) <= radius_cap) out.push_back(z);
  }
  return out;
}

double min_node_distance(const TrajectoryPath& path) {
  double dmin = 1e300;
  for (const auto& s : path.samples) {
    for (const auto& nz : oracle_nodes(s.t))
      dmin = std::min(dmin, std::abs(s.z - nz));
  }
  return dmin;
}

std::vector<Complex> circle_polygon(Complex center, double r, int n = 256) {
  std::vector<Complex> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double th = 2.0 * kPi * i / n;
    out.push_back(center + r * Complex(std::cos(th), std::sin(th)));
  }
  return out;
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << (detail.str().empty() ? "" : "; ") << what;
    }
  }
};

// ---- criterion 1: single-packet propagation against the closed form ----
Outcome criterion_single_packet_oracle() {
  Outcome out;
  const auto start = std::chrono::steady_clock::now();
  std::mt19937 rng(20250810);
  double worst = 0.0;
  for (int draw = 0; draw < 50; ++draw) {
    const GaussianPacket p{uniform(rng, -8, 8), uniform(rng, -2, 2),
                           uniform(rng, 0.5, 2.0), 1.0, 1.0};
    const WaveModel w({p});
    const Complex z0(uniform(rng, -10, 10), uniform(rng, -3, 3));
    const auto path = propagate_complex(w, z0, 0.0, 10.0, {});
    out.require(path.status == PathStatus::completed, "propagation aborted");
    for (const auto& s : path.samples) {
      const Complex exact =
          p.a + p.v0 * s.t + (z0 - p.a) * complex_spreading(p, s.t) / p.sigma0;
      const double rel =
          std::abs(s.z - exact) / std::max(1.0, std::abs(exact));
      worst = std::max(worst, rel);
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  out.require(worst < 1e-8, "relative error " + std::to_string(worst));
  out.require(secs < 5.0, "runtime " + std::to_string(secs) + " s");
  out.detail << "worst rel err " << worst << ", " << secs << " s";
  return out;
}

// ---- criterion 2: node placement at and off maximal interference ----
Outcome criterion_node_placement() {
  Outcome out;
  const WaveModel w = collision_model();
  const Rect region{-3.0, 3.0, -1.0, 1.0};

  const auto nodes4 = find_nodes(w, 4.0, region, 96, {}, 0);
  out.require(nodes4.size() == 4,
              "expected 4 nodes at t=4, got " + std::to_string(nodes4.size()));
  double worst_re = 0.0, worst_im = 0.0;
  for (std::size_t i = 0; i < nodes4.size() && i < 4; ++i) {
    const double expected = kPi / 4.0 + (static_cast<double>(i) - 2.0) * kPi / 2.0;
    worst_re = std::max(worst_re, std::abs(nodes4[i].z.real() - expected));
    worst_im = std::max(worst_im, std::abs(nodes4[i].z.imag()));
  }
  out.require(worst_re < 1e-6, "on-axis Re deviation " + std::to_string(worst_re));
  out.require(worst_im < 1e-8, "on-axis Im deviation " + std::to_string(worst_im));

  for (double t : {2.0, 6.0}) {
    const auto nodes = find_nodes(w, t, region, 96, {}, 0);
    out.require(!nodes.empty(), "no nodes found at t=" + std::to_string(t));
    for (const auto& n : nodes)
      out.require(std::abs(n.z.imag()) > 1e-3,
                  "on-axis node at t=" + std::to_string(t));
  }
  out.detail << "t=4 nodes at pi/4+n pi/2 (|dRe|<" << worst_re << ", |Im|<"
             << worst_im << "); t=2,6 all off-axis";
  return out;
}

// ---- criterion 3: vortex quantization ----
Outcome criterion_vortex_quantization() {
  Outcome out;
  const WaveModel w = collision_model();
  const auto nodes = find_nodes(w, 4.0, Rect{-3.0, 3.0, -1.0, 1.0}, 96, {}, 0);
  out.require(nodes.size() == 4, "node search failed");
  double worst_residual = 0.0;
  for (const auto& n : nodes) {
    const int w1 = winding_number(w, n.z, 0.05, 4.0);
    const int w2 = winding_number(w, n.z, 0.1, 4.0);
    out.require(w1 != 0, "zero winding");
    out.require(w1 == w2, "winding differs between radii");
    const double circ = circulation(w, circle_polygon(n.z, 0.1), 4.0);
    const double residual = std::abs(circ / (2.0 * kPi * w.hbar()) - w1);
    worst_residual = std::max(worst_residual, residual);
  }
  out.require(worst_residual < 1e-6,
              "circulation residual " + std::to_string(worst_residual));
  out.detail << "winding stable across radii, worst |circ/(2 pi hbar) - n| = "
             << worst_residual;
  return out;
}

// ---- criterion 4: anticlockwise nodal rotation ----
Outcome criterion_node_rotation() {
  Outcome out;
  const WaveModel w = collision_model();
  const Rect region{-3.0, 3.0, -1.0, 1.0};
  auto angle_at = [&](double t) {
    const auto nodes = find_nodes(w, t, region, 96, {}, 0);
    return node_line_angle(nodes);
  };
  const double a3 = angle_at(3.0), a4 = angle_at(4.0), a5 = angle_at(5.0);
  out.require(a3 > 0.0, "angle(3) = " + std::to_string(a3));
  out.require(std::abs(a4) < 1e-3, "angle(4) = " + std::to_string(a4));
  out.require(a5 < 0.0, "angle(5) = " + std::to_string(a5));
  out.detail << "angles " << a3 << " / " << a4 << " / " << a5;
  return out;
}

// ---- criterion 5: barrier, bounce, non-crossing ----
Outcome criterion_real_trajectories() {
  Outcome out;
  const WaveModel w = collision_model();
  const std::vector<double> launches = {-10.0, -8.0, -6.0, -4.0, -2.0};
  std::vector<TrajectoryPath> paths;
  for (double x0 : launches) {
    paths.push_back(propagate_real(w, x0, 0.0, 8.0, {}));
    out.require(paths.back().status == PathStatus::completed,
                "trajectory aborted from " + std::to_string(x0));
  }
  for (std::size_t m = 0; m < paths.size(); ++m) {
    double x_max = -1e300;
    std::size_t k_max = 0;
    for (std::size_t k = 0; k < paths[m].samples.size(); ++k) {
      const double x = paths[m].samples[k].z.real();
      out.require(x < 0.0, "barrier crossed from " + std::to_string(launches[m]));
      if (x > x_max) {
        x_max = x;
        k_max = k;
      }
    }
    out.require(k_max > 0 && k_max + 1 < paths[m].samples.size(),
                "no interior maximum from " + std::to_string(launches[m]));
    out.require(paths[m].samples.back().z.real() < x_max,
                "no bounce from " + std::to_string(launches[m]));
  }
  std::size_t n = paths.front().samples.size();
  for (const auto& p : paths) n = std::min(n, p.samples.size());
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t m = 0; m + 1 < paths.size(); ++m)
      out.require(paths[m].samples[k].z.real() < paths[m + 1].samples[k].z.real(),
                  "ordering violated at t=" + std::to_string(paths[m].samples[k].t));
  out.detail << "all launches stay left of the barrier, bounce, and stay ordered";
  return out;
}

// ---- criterion 6: isochrone crossing residuals, loops, caustics ----
Outcome criterion_isochrones() {
  Outcome out;
  const WaveModel w = collision_model();
  const ScenarioConfig cfg = make_default_scenario();

  for (double t_c : {0.0, 2.0, 4.0, 8.0}) {
    const auto targets = isochrone_targets(w, cfg, t_c);
    const auto fam =
        build_isochrone(w, t_c, targets, 8.0, cfg.integrator, true, 0);

    std::size_t completed = 0;
    for (const auto& mbr : fam.members)
      if (mbr.status == PathStatus::completed) ++completed;
    out.require(completed >= 3, "too few completed members at t_c=" +
                                    std::to_string(t_c));
    const double residual = fam.max_crossing_residual();
    out.require(residual < 1e-8, "crossing residual " + std::to_string(residual) +
                                     " at t_c=" + std::to_string(t_c));

    if (t_c == 4.0) {
      std::size_t loopers = 0;
      for (const auto& mbr : fam.members) {
        if (mbr.status != PathStatus::completed) continue;
        if (detect_loops(w, mbr.path).count() >= 1) ++loopers;
      }
      out.require(loopers >= 1, "no vortical member in the t_c=4 family");
      out.detail << "t_c=4: " << loopers << " looping members; ";
    }
    if (t_c == 0.0 || t_c == 8.0) {
      std::vector<CausticPoint> caustics;
      try {
        caustics = detect_caustics(fam);
      } catch (const InsufficientFamilyError&) {
      }
      out.require(!caustics.empty(),
                  "no caustics at t_c=" + std::to_string(t_c));
      // members whose paths stay clear of the node band must not loop
      std::size_t away = 0;
      for (const auto& mbr : fam.members) {
        if (mbr.status != PathStatus::completed) continue;
        if (min_node_distance(mbr.path) <= 0.5) continue;
        ++away;
        out.require(detect_loops(w, mbr.path).count() == 0,
                    "free-flight member loops at t_c=" + std::to_string(t_c));
      }
      out.require(away >= 1, "no members away from the node band at t_c=" +
                                 std::to_string(t_c));
      out.detail << "t_c=" << t_c << ": " << caustics.size()
                 << " caustic points, " << away << " node-free members; ";
    }
  }
  return out;
}

// ---- criterion 7: conservation diagnostics ----
Outcome criterion_conservation() {
  Outcome out;
  const WaveModel w = collision_model();
  double worst_norm = 0.0;
  for (double t : {0.0, 2.0, 4.0, 8.0}) {
    const double integral = integrate_composite<double>(
        [&](double x) { return std::norm(w.psi_bar(Complex(x, 0.0), t)); },
        -60.0, 60.0, 960);
    worst_norm = std::max(worst_norm, std::abs(integral - 1.0));
  }
  out.require(worst_norm < 1e-6, "normalization off by " + std::to_string(worst_norm));

  const FieldGrid r1 = continuity_residual(w, -10.0, 10.0, 0.0, 8.0, 401, 321, 0);
  const double m1 = masked_max_abs(r1);
  const FieldGrid r2 = continuity_residual(w, -10.0, 10.0, 0.0, 8.0, 801, 641, 0);
  const double m2 = masked_max_abs(r2);
  out.require(m1 < 1e-4, "continuity residual " + std::to_string(m1));
  out.require(m1 >= 3.0 * m2, "doubling improved only " +
                                  std::to_string(m2 > 0 ? m1 / m2 : 1e9) + "x");
  out.detail << "norm dev " << worst_norm << ", residual " << m1
             << " -> " << m2 << " on doubling";
  return out;
}

// ---- criterion 8: byte-identical full pipeline ----
Outcome criterion_determinism() {
  Outcome out;
  const fs::path base = fs::temp_directory_path() / "cqhj_acceptance";
  fs::remove_all(base);
  fs::create_directories(base);

  const auto start = std::chrono::steady_clock::now();
  for (const std::string run : {"a", "b"}) {
    for (const std::string cmd : {"fields", "trajectories", "isochrones", "singular"}) {
      const std::string line = std::string(CQHJ_CLI_PATH) + " " + cmd +
                               " --out " + (base / run).string() + " > " +
                               (base / (run + "_" + cmd + ".log")).string() +
                               " 2>&1";
      const int status = std::system(line.c_str());
      out.require(WEXITSTATUS(status) == 0, cmd + " exited nonzero");
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();

  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(base / "a")) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(entry.path(), base / "a");
    const fs::path twin = base / "b" / rel;
    if (!fs::exists(twin)) {
      out.require(false, "missing twin for " + rel.string());
      continue;
    }
    std::ifstream fa(entry.path(), std::ios::binary);
    std::ifstream fb(twin, std::ios::binary);
    std::ostringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    out.require(sa.str() == sb.str(), "files differ: " + rel.string());
  }
  out.require(files >= 20, "suspiciously few output files");
  out.detail << files << " files byte-identical across runs; "
             << "both pipelines took " << secs << " s";
  fs::remove_all(base);
  return out;
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Entry> criteria = {
      {"single-packet trajectory oracle", criterion_single_packet_oracle},
      {"node placement at/off maximal interference", criterion_node_placement},
      {"vortex quantization", criterion_vortex_quantization},
      {"anticlockwise nodal rotation", criterion_node_rotation},
      {"real-trajectory barrier and bounce", criterion_real_trajectories},
      {"isochrone crossings, loops and caustics", criterion_isochrones},
      {"conservation diagnostics", criterion_conservation},
      {"pipeline determinism", criterion_determinism},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome out;
    try {
      out = criteria[i].run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail << "exception: " << e.what();
    }
    if (!out.pass) ++failures;
    std::cout << (out.pass ? "[PASS]" : "[FAIL]") << " criterion " << (i + 1)
              << ": " << criteria[i].name << " - " << out.detail.str() << "\n";
  }
  return failures == 0 ? 0 : 1;
}
