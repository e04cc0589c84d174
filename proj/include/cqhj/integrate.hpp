#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cqhj/wave_model.hpp"

namespace cqhj {

struct IntegratorConfig {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  double max_step = 0.1;
  double min_step = 1e-12;
  double dense_dt = 0.01;  // output sampling interval

  void validate() const {
    if (!(rel_tol > 0.0) || !(abs_tol > 0.0))
      throw std::invalid_argument("integrator tolerances must be positive");
    if (!(min_step > 0.0) || !(min_step < max_step))
      throw std::invalid_argument("require 0 < min_step < max_step");
    if (!(dense_dt > 0.0))
      throw std::invalid_argument("dense_dt must be positive");
  }
};

enum class PathStatus { completed, aborted_pole, aborted_nonfinite };

inline const char* to_string(PathStatus s) {
  switch (s) {
    case PathStatus::completed: return "completed";
    case PathStatus::aborted_pole: return "aborted_pole";
    case PathStatus::aborted_nonfinite: return "aborted_nonfinite";
  }
  return "unknown";
}

enum class PathKind { complex_trajectory, real_trajectory };

struct PathSample {
  double t;
  Complex z;  // real trajectories carry Im z = 0
};

struct TrajectoryStats {
  long steps = 0;
  long rejected = 0;
  double min_psi_rel = std::numeric_limits<double>::infinity();
  double error_estimate = 0.0;  // accumulated embedded-error magnitudes
};

struct TrajectoryPath {
  PathKind kind = PathKind::complex_trajectory;
  std::vector<PathSample> samples;  // strictly monotonic in t
  double t0 = 0.0;
  double t1 = 0.0;
  PathStatus status = PathStatus::completed;
  Complex initial_condition;
  TrajectoryStats stats;

  const PathSample& back() const { return samples.back(); }
};

namespace detail {

// Dormand-Prince 5(4) coefficients.
inline constexpr double kDpC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
inline constexpr double kDpA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
inline constexpr double kDpErr[7] = {
    71.0 / 57600, 0.0, -71.0 / 16695, 71.0 / 1920,
    -17253.0 / 339200, 22.0 / 525, -1.0 / 40};

enum class RhsFailure { none, pole, nonfinite };

// Embedded adaptive RK over a small fixed-size state. Rhs is
// f(t, y, dy) -> RhsFailure; the sink receives each accepted step
// (t, y, f, t_new, y_new, f_new) for dense output.
template <std::size_t N, typename Rhs, typename StepSink>
PathStatus integrate_adaptive_rk(Rhs&& rhs, double t0, double t1,
                                 std::array<double, N> y,
                                 const IntegratorConfig& cfg,
                                 TrajectoryStats& stats, StepSink&& sink,
                                 double* t_reached = nullptr) {
  using State = std::array<double, N>;
  const double dir = (t1 >= t0) ? 1.0 : -1.0;
  const double span = std::abs(t1 - t0);
  double t = t0;
  if (t_reached) *t_reached = t;
  if (span == 0.0) return PathStatus::completed;

  State f0{};
  RhsFailure fail = rhs(t, y, f0);
  if (fail != RhsFailure::none)
    return fail == RhsFailure::pole ? PathStatus::aborted_pole
                                    : PathStatus::aborted_nonfinite;

  double h = std::min(cfg.max_step, span);
  // conservative initial step from the first derivative scale
  double ynorm = 0.0, fnorm = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    ynorm = std::max(ynorm, std::abs(y[i]));
    fnorm = std::max(fnorm, std::abs(f0[i]));
  }
  if (fnorm > 0.0)
    h = std::min(h, std::max(cfg.min_step, 0.01 * std::max(1.0, ynorm) / fnorm));

  double err_prev = 1.0;
  std::array<State, 7> k;
  const double eps_t = 1e-14 * std::max(1.0, std::abs(t1));

  while (dir * (t1 - t) > eps_t) {
    h = std::min(h, std::abs(t1 - t));
    bool step_done = false;
    while (!step_done) {
      const double hs = dir * h;
      k[0] = f0;
      State y_stage, y_new{}, f_new{};
      fail = RhsFailure::none;
      for (int s = 1; s < 7 && fail == RhsFailure::none; ++s) {
        for (std::size_t i = 0; i < N; ++i) {
          double acc = 0.0;
          for (int j = 0; j < s; ++j) acc += kDpA[s][j] * k[j][i];
          y_stage[i] = y[i] + hs * acc;
        }
        fail = rhs(t + kDpC[s] * hs, y_stage, k[s]);
        if (s == 6) y_new = y_stage;  // stage 7 input is the 5th-order result
      }
      if (fail == RhsFailure::none) {
        f_new = k[6];
        // scaled error norm
        double err = 0.0, err_abs = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
          double e = 0.0;
          for (int j = 0; j < 7; ++j) e += kDpErr[j] * k[j][i];
          e *= hs;
          const double sc =
              cfg.abs_tol +
              cfg.rel_tol * std::max(std::abs(y[i]), std::abs(y_new[i]));
          err += (e / sc) * (e / sc);
          err_abs += e * e;
        }
        err = std::sqrt(err / N);
        if (err <= 1.0) {
          // accept; PI controller for the next step
          stats.steps++;
          stats.error_estimate += std::sqrt(err_abs);
          const double t_new = t + hs;
          sink(t, y, k[0], t_new, y_new, f_new);
          t = t_new;
          y = y_new;
          f0 = f_new;  // FSAL
          if (t_reached) *t_reached = t;
          const double fac =
              0.9 * std::pow(std::max(err, 1e-10), -0.7 / 5.0) *
              std::pow(std::max(err_prev, 1e-10), 0.4 / 5.0);
          h = std::min(cfg.max_step, h * std::clamp(fac, 0.2, 5.0));
          err_prev = std::max(err, 1e-10);
          step_done = true;
          continue;
        }
        stats.rejected++;
        const double fac = std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.9);
        h *= fac;
      } else {
        // evaluation failed inside the step: shrink toward the obstacle
        stats.rejected++;
        h *= 0.5;
      }
      if (h < cfg.min_step) {
        // cannot resolve the region without stepping over it
        return fail == RhsFailure::nonfinite ? PathStatus::aborted_nonfinite
                                             : PathStatus::aborted_pole;
      }
    }
  }
  return PathStatus::completed;
}

// Cubic Hermite interpolation on one accepted step.
template <std::size_t N>
std::array<double, N> hermite(double t, double ta, const std::array<double, N>& ya,
                              const std::array<double, N>& fa, double tb,
                              const std::array<double, N>& yb,
                              const std::array<double, N>& fb) {
  const double h = tb - ta;
  const double th = (t - ta) / h;
  const double t2 = th * th, t3 = t2 * th;
  const double h00 = 2 * t3 - 3 * t2 + 1;
  const double h10 = t3 - 2 * t2 + th;
  const double h01 = -2 * t3 + 3 * t2;
  const double h11 = t3 - t2;
  std::array<double, N> out;
  for (std::size_t i = 0; i < N; ++i)
    out[i] = h00 * ya[i] + h10 * h * fa[i] + h01 * yb[i] + h11 * h * fb[i];
  return out;
}

// Emits dense samples at t0 + k dense_dt (k >= 1) plus the exact endpoint.
template <std::size_t N>
class DenseSampler {
 public:
  DenseSampler(double t0, double t1, double dense_dt,
               std::vector<PathSample>& out,
               Complex (*to_z)(const std::array<double, N>&))
      : t0_(t0), t1_(t1), dt_(dense_dt), dir_(t1 >= t0 ? 1.0 : -1.0),
        out_(out), to_z_(to_z) {}

  void operator()(double ta, const std::array<double, N>& ya,
                  const std::array<double, N>& fa, double tb,
                  const std::array<double, N>& yb,
                  const std::array<double, N>& fb) {
    // grid times strictly inside (ta, tb]; the final endpoint is emitted
    // separately so it lands exactly on t1
    while (true) {
      const double tg = t0_ + dir_ * (next_ * dt_);
      if (dir_ * (tg - tb) > 0.0) break;
      if (dir_ * (t1_ - tg) <= 1e-12) break;  // leave the endpoint to finish()
      const auto yi = hermite<N>(tg, ta, ya, fa, tb, yb, fb);
      out_.push_back({tg, to_z_(yi)});
      ++next_;
    }
    last_y_ = yb;
    have_last_ = true;
  }

  // records the endpoint sample with the exact requested time
  void finish(PathStatus status, double t_reached) {
    if (!have_last_) return;
    const double t_end = status == PathStatus::completed ? t1_ : t_reached;
    if (!out_.empty() && out_.back().t == t_end) return;
    out_.push_back({t_end, to_z_(last_y_)});
  }

 private:
  double t0_, t1_, dt_, dir_;
  std::size_t next_ = 1;
  std::vector<PathSample>& out_;
  Complex (*to_z_)(const std::array<double, N>&);
  std::array<double, N> last_y_{};
  bool have_last_ = false;
};

inline Complex state2_to_z(const std::array<double, 2>& y) { return {y[0], y[1]}; }
inline Complex state1_to_z(const std::array<double, 1>& y) { return {y[0], 0.0}; }
inline Complex state4_to_z(const std::array<double, 4>& y) { return {y[0], y[1]}; }

}  // namespace detail

// Propagates dz/dt = v_bar(z, t) from (z0, t0) to t1 (backward when t1 < t0).
// Dense output at multiples of dense_dt plus the exact endpoint. Near-node
// and overflow failures abort with a partial path rather than stepping over.
inline TrajectoryPath propagate_complex(const WaveModel& w, Complex z0,
                                        double t0, double t1,
                                        const IntegratorConfig& cfg) {
  cfg.validate();
  TrajectoryPath path;
  path.kind = PathKind::complex_trajectory;
  path.t0 = t0;
  path.t1 = t1;
  path.initial_condition = z0;
  path.samples.push_back({t0, z0});

  auto rhs = [&](double t, const std::array<double, 2>& y,
                 std::array<double, 2>& dy) -> detail::RhsFailure {
    const auto ev = w.evaluate(Complex(y[0], y[1]), t);
    path.stats.min_psi_rel = std::min(path.stats.min_psi_rel, ev.relative_magnitude());
    if (ev.at_node()) return detail::RhsFailure::pole;
    const Complex v = Complex(0.0, -w.hbar() / w.mass()) * (ev.grad_sum / ev.sum);
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      return detail::RhsFailure::nonfinite;
    dy = {v.real(), v.imag()};
    return detail::RhsFailure::none;
  };

  detail::DenseSampler<2> sampler(t0, t1, cfg.dense_dt, path.samples,
                                  detail::state2_to_z);
  double t_reached = t0;
  path.status = detail::integrate_adaptive_rk<2>(
      rhs, t0, t1, {z0.real(), z0.imag()}, cfg, path.stats, sampler, &t_reached);
  sampler.finish(path.status, t_reached);
  return path;
}

// Propagates the real Bohmian trajectory dx/dt = v(x, t); the velocity is
// the analytic complex log-derivative restricted to real z (never a
// difference of S, which would jump at the branch cut).
inline TrajectoryPath propagate_real(const WaveModel& w, double x0, double t0,
                                     double t1, const IntegratorConfig& cfg) {
  cfg.validate();
  TrajectoryPath path;
  path.kind = PathKind::real_trajectory;
  path.t0 = t0;
  path.t1 = t1;
  path.initial_condition = Complex(x0, 0.0);
  path.samples.push_back({t0, Complex(x0, 0.0)});

  auto rhs = [&](double t, const std::array<double, 1>& y,
                 std::array<double, 1>& dy) -> detail::RhsFailure {
    const auto ev = w.evaluate(Complex(y[0], 0.0), t);
    path.stats.min_psi_rel = std::min(path.stats.min_psi_rel, ev.relative_magnitude());
    if (ev.at_node()) return detail::RhsFailure::pole;
    const double v = (w.hbar() / w.mass()) * (ev.grad_sum / ev.sum).imag();
    if (!std::isfinite(v)) return detail::RhsFailure::nonfinite;
    dy = {v};
    return detail::RhsFailure::none;
  };

  detail::DenseSampler<1> sampler(t0, t1, cfg.dense_dt, path.samples,
                                  detail::state1_to_z);
  double t_reached = t0;
  path.status = detail::integrate_adaptive_rk<1>(rhs, t0, t1, {x0}, cfg,
                                                 path.stats, sampler, &t_reached);
  sampler.finish(path.status, t_reached);
  return path;
}

struct JacobianResult {
  Complex jacobian;     // dz(t1)/dz0
  TrajectoryPath path;  // the carrier trajectory
};

// Integrates the variational equation dJ/dt = (dv_bar/dz) J, J(t0) = 1,
// alongside the trajectory. v_bar is analytic in z away from nodes, so one
// complex sensitivity captures the full derivative.
inline JacobianResult variational_jacobian(const WaveModel& w, Complex z0,
                                           double t0, double t1,
                                           const IntegratorConfig& cfg) {
  cfg.validate();
  JacobianResult result;
  TrajectoryPath& path = result.path;
  path.kind = PathKind::complex_trajectory;
  path.t0 = t0;
  path.t1 = t1;
  path.initial_condition = z0;
  path.samples.push_back({t0, z0});

  auto rhs = [&](double t, const std::array<double, 4>& y,
                 std::array<double, 4>& dy) -> detail::RhsFailure {
    const auto ev = w.evaluate(Complex(y[0], y[1]), t);
    path.stats.min_psi_rel = std::min(path.stats.min_psi_rel, ev.relative_magnitude());
    if (ev.at_node()) return detail::RhsFailure::pole;
    const Complex iscale(0.0, -w.hbar() / w.mass());
    const Complex g = ev.grad_sum / ev.sum;
    const Complex v = iscale * g;
    const Complex dv = iscale * (ev.lap_sum / ev.sum - g * g);
    const Complex j(y[2], y[3]);
    const Complex dj = dv * j;
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()) ||
        !std::isfinite(dj.real()) || !std::isfinite(dj.imag()))
      return detail::RhsFailure::nonfinite;
    dy = {v.real(), v.imag(), dj.real(), dj.imag()};
    return detail::RhsFailure::none;
  };

  std::array<double, 4> y_last = {z0.real(), z0.imag(), 1.0, 0.0};
  auto sink = [&](double ta, const std::array<double, 4>& ya,
                  const std::array<double, 4>& fa, double tb,
                  const std::array<double, 4>& yb,
                  const std::array<double, 4>& fb) {
    (void)ta; (void)ya; (void)fa; (void)fb;
    y_last = yb;
    path.samples.push_back({tb, Complex(yb[0], yb[1])});
  };
  double t_reached = t0;
  path.status = detail::integrate_adaptive_rk<4>(rhs, t0, t1, y_last, cfg,
                                                 path.stats, sink, &t_reached);
  if (path.status == PathStatus::completed && !path.samples.empty())
    path.samples.back().t = t1;
  result.jacobian = Complex(y_last[2], y_last[3]);
  return result;
}

}  // namespace cqhj
