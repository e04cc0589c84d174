#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cqhj/quadrature.hpp"

namespace cqhj {

using Complex = std::complex<double>;

// Relative |psi| threshold below which a point counts as sitting on a node
// of the superposition (relative to the largest single-packet magnitude
// at that point).
inline constexpr double kEpsPole = 1e-12;
// Same threshold on the density (kEpsPole squared).
inline constexpr double kEpsNode = 1e-24;

struct PoleProximityError : std::runtime_error {
  PoleProximityError(Complex z_, double t_)
      : std::runtime_error("velocity field evaluated at/near a node of psi"),
        z(z_), t(t_) {}
  Complex z;
  double t;
};

struct NodeAtXError : std::runtime_error {
  NodeAtXError(double x_, double t_)
      : std::runtime_error("hydrodynamic fields undefined at a node"),
        x(x_), t(t_) {}
  double x;
  double t;
};

struct NonFiniteError : std::runtime_error {
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

// One free Gaussian wave packet. m and hbar default to 1 (arbitrary units);
// p0 and E are derived from v0 so they can never fall out of sync.
struct GaussianPacket {
  double a = 0.0;       // initial center position
  double v0 = 0.0;      // group velocity
  double sigma0 = 1.0;  // initial width
  double m = 1.0;
  double hbar = 1.0;

  double p0() const { return m * v0; }
  double energy() const { return 0.5 * m * v0 * v0; }
  double center(double t) const { return a + v0 * t; }
};

// sigma0 * (1 + i hbar t / (2 m sigma0^2)); t may be negative.
inline Complex complex_spreading(const GaussianPacket& p, double t) {
  return {p.sigma0, p.hbar * t / (2.0 * p.m * p.sigma0)};
}

// |complex_spreading|.
inline double real_spreading(const GaussianPacket& p, double t) {
  return std::abs(complex_spreading(p, t));
}

namespace detail {

// Split packet evaluation: value = prefactor * exp(exponent). Keeping the
// exponent separate lets the superposition be evaluated without overflow.
struct PacketTerms {
  Complex prefactor;      // (2 pi sigma_t~^2)^(-1/4)
  Complex exponent;
  Complex log_derivative; // d log psi / dz
  Complex dlog_dz;        // second derivative of log psi (z-independent)
};

inline PacketTerms packet_terms(const GaussianPacket& p, Complex z, double t) {
  const Complex st = complex_spreading(p, t);
  const Complex dz = z - p.center(t);
  const double ip = p.p0() / p.hbar;
  PacketTerms out;
  out.prefactor = std::pow(2.0 * std::numbers::pi * st * st, -0.25);
  out.exponent = -dz * dz / (4.0 * st * p.sigma0) + Complex(0.0, ip) * z -
                 Complex(0.0, p.energy() * t / p.hbar);
  out.dlog_dz = -1.0 / (2.0 * st * p.sigma0);
  out.log_derivative = dz * out.dlog_dz + Complex(0.0, ip);
  return out;
}

}  // namespace detail

// psi_j(z, t), the analytic continuation of the packet to complex z.
// Throws NonFiniteError when the value overflows (large |Im z|).
inline Complex packet_value(const GaussianPacket& p, Complex z, double t) {
  const auto terms = detail::packet_terms(p, z, t);
  const Complex v = terms.prefactor * std::exp(terms.exponent);
  if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
    throw NonFiniteError("packet_value overflow");
  return v;
}

// grad psi_j / psi_j = -(z - a - v0 t)/(2 sigma_t~ sigma0) + i p0/hbar.
// Exact; psi_j itself is nodeless so there is no pole.
inline Complex packet_log_derivative(const GaussianPacket& p, Complex z,
                                     double t) {
  return detail::packet_terms(p, z, t).log_derivative;
}

// Polar form (modulus, phase) with phase on the principal branch (-pi, pi];
// the phase of 0 is 0.
inline std::pair<double, double> polar_decompose(Complex value) {
  const double mod = std::abs(value);
  if (mod == 0.0) return {0.0, 0.0};
  return {mod, std::arg(value)};
}

// A field value at (z, t) together with its polar form.
struct ComplexFieldSample {
  Complex z;
  double t = 0.0;
  Complex value;
  double modulus = 0.0;
  double phase = 0.0;
};

// Normalized superposition of free Gaussian packets, analytically continued
// to the complex plane. Immutable after construction; evaluations are pure.
class WaveModel {
 public:
  explicit WaveModel(std::vector<GaussianPacket> packets)
      : packets_(std::move(packets)) {
    validate();
    norm_ = compute_norm();
  }

  const std::vector<GaussianPacket>& packets() const { return packets_; }
  double norm() const { return norm_; }
  double mass() const { return packets_.front().m; }
  double hbar() const { return packets_.front().hbar; }

  // Stabilized superposition pieces at one (z, t). All members are finite
  // for any finite input; the true wave value is norm * sum * e^log_shift.
  struct Evaluation {
    Complex sum;       // sum_j A_j e^(e_j - M)
    Complex grad_sum;  // same weights times g_j
    Complex lap_sum;   // same weights times (g_j^2 + g_j')
    double log_shift;  // M = max_j Re e_j
    double max_term;   // max_j |A_j e^(e_j - M)|
    bool at_node() const { return std::abs(sum) < kEpsPole * max_term; }
    // Scale-free |psi| proxy used for pole detection and diagnostics.
    double relative_magnitude() const {
      return max_term > 0.0 ? std::abs(sum) / max_term : 0.0;
    }
  };

  Evaluation evaluate(Complex z, double t) const {
    constexpr std::size_t kInlineTerms = 4;
    std::array<detail::PacketTerms, kInlineTerms> inline_buf;
    std::vector<detail::PacketTerms> heap_buf;
    const std::size_t n = packets_.size();
    detail::PacketTerms* terms = inline_buf.data();
    if (n > kInlineTerms) {
      heap_buf.resize(n);
      terms = heap_buf.data();
    }
    Evaluation ev{};
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      terms[j] = detail::packet_terms(packets_[j], z, t);
      shift = std::max(shift, terms[j].exponent.real());
    }
    ev.log_shift = shift;
    ev.max_term = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const auto& tm = terms[j];
      const Complex w = tm.prefactor * std::exp(tm.exponent - shift);
      ev.sum += w;
      ev.grad_sum += w * tm.log_derivative;
      ev.lap_sum += w * (tm.log_derivative * tm.log_derivative + tm.dlog_dz);
      ev.max_term = std::max(ev.max_term, std::abs(w));
    }
    return ev;
  }

  // Psi(z, t) = N sum_j psi_j(z, t). Unit L2 norm along the real axis.
  Complex psi_bar(Complex z, double t) const {
    const auto ev = evaluate(z, t);
    return reconstruct(ev.sum, ev.log_shift);
  }

  Complex grad_psi_bar(Complex z, double t) const {
    const auto ev = evaluate(z, t);
    return reconstruct(ev.grad_sum, ev.log_shift);
  }

  // Complex velocity (hbar/im) grad Psi / Psi from the analytic
  // log-derivatives; throws PoleProximityError at/near a node.
  Complex v_bar(Complex z, double t) const {
    const auto ev = evaluate(z, t);
    if (ev.at_node()) throw PoleProximityError(z, t);
    return velocity_from(ev);
  }

  // d v_bar / dz, analytic; needed by the variational equation.
  Complex v_bar_gradient(Complex z, double t) const {
    const auto ev = evaluate(z, t);
    if (ev.at_node()) throw PoleProximityError(z, t);
    const Complex g = ev.grad_sum / ev.sum;
    const Complex l = ev.lap_sum / ev.sum;
    return Complex(0.0, -hbar() / mass()) * (l - g * g);
  }

  bool near_node(Complex z, double t) const { return evaluate(z, t).at_node(); }

  double relative_magnitude(Complex z, double t) const {
    return evaluate(z, t).relative_magnitude();
  }

  struct RealFields {
    double rho;  // probability density
    double S;    // phase action, principal branch (-pi hbar, pi hbar]
    double v;    // Bohmian velocity
  };

  // Hydrodynamic fields on the real axis. Throws NodeAtXError where the
  // density is below the node threshold (phase and velocity undefined).
  RealFields real_fields(double x, double t) const {
    const auto ev = evaluate(Complex(x, 0.0), t);
    if (std::norm(ev.sum) < kEpsNode * ev.max_term * ev.max_term)
      throw NodeAtXError(x, t);
    RealFields out;
    const Complex value = reconstruct(ev.sum, ev.log_shift);
    out.rho = std::norm(value);
    out.S = hbar() * std::arg(ev.sum);
    out.v = (hbar() / mass()) * (ev.grad_sum / ev.sum).imag();
    return out;
  }

  double rho(double x, double t) const {
    return std::norm(psi_bar(Complex(x, 0.0), t));
  }

  // Q = -(hbar^2/2m) (d^2 sqrt(rho) / dx^2) / sqrt(rho), from analytic
  // second differentiation of the superposition. Diagnostic only.
  double quantum_potential(double x, double t) const {
    const auto ev = evaluate(Complex(x, 0.0), t);
    if (std::norm(ev.sum) < kEpsNode * ev.max_term * ev.max_term)
      throw NodeAtXError(x, t);
    const Complex g = ev.grad_sum / ev.sum;
    const Complex l = ev.lap_sum / ev.sum;
    // (sqrt rho)'' / sqrt rho = Re l - Re(g^2) + (Re g)^2
    const double curv = l.real() - (g * g).real() + g.real() * g.real();
    return -hbar() * hbar() / (2.0 * mass()) * curv;
  }

  ComplexFieldSample sample_psi_bar(Complex z, double t) const {
    ComplexFieldSample s;
    s.z = z;
    s.t = t;
    s.value = psi_bar(z, t);
    std::tie(s.modulus, s.phase) = polar_decompose(s.value);
    return s;
  }

  ComplexFieldSample sample_v_bar(Complex z, double t) const {
    ComplexFieldSample s;
    s.z = z;
    s.t = t;
    s.value = v_bar(z, t);
    std::tie(s.modulus, s.phase) = polar_decompose(s.value);
    return s;
  }

 private:
  void validate() const {
    if (packets_.empty())
      throw std::invalid_argument("WaveModel needs at least one packet");
    for (const auto& p : packets_) {
      if (!(p.m > 0.0) || !(p.hbar > 0.0) || !(p.sigma0 > 0.0))
        throw std::invalid_argument("packet parameters must be positive");
      if (p.m != packets_.front().m || p.hbar != packets_.front().hbar)
        throw std::invalid_argument("packets must share identical m and hbar");
    }
  }

  // N such that the superposition has unit L2 norm on the real axis at t=0.
  // Composite Gauss-Legendre over [min a - 12 sigma0, max a + 12 sigma0];
  // the panel width resolves both the narrowest packet and the fastest
  // cross-term oscillation.
  double compute_norm() const {
    double lo = packets_.front().a, hi = packets_.front().a;
    double sigma_min = packets_.front().sigma0;
    double k_max = 0.0;
    for (const auto& p : packets_) {
      lo = std::min(lo, p.a);
      hi = std::max(hi, p.a);
      sigma_min = std::min(sigma_min, p.sigma0);
      k_max = std::max(k_max, std::abs(p.p0()) / p.hbar);
    }
    const double sigma_pad = 12.0 * max_sigma0();
    lo -= sigma_pad;
    hi += sigma_pad;
    double h = sigma_min;
    if (k_max > 0.0)
      h = std::min(h, std::numbers::pi / (2.0 * k_max));
    const int panels = std::max(16, static_cast<int>(std::ceil((hi - lo) / (0.5 * h))));
    const double integral = integrate_composite<double>(
        [&](double x) {
          Complex acc = 0.0;
          for (const auto& p : packets_) acc += packet_value(p, Complex(x, 0.0), 0.0);
          return std::norm(acc);
        },
        lo, hi, panels);
    if (!(integral > 0.0) || !std::isfinite(integral))
      throw std::invalid_argument("superposition has no finite positive norm");
    return 1.0 / std::sqrt(integral);
  }

  double max_sigma0() const {
    double s = 0.0;
    for (const auto& p : packets_) s = std::max(s, p.sigma0);
    return s;
  }

  Complex reconstruct(Complex scaled, double log_shift) const {
    const double scale = std::exp(log_shift);
    const Complex v = norm_ * scaled * scale;
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw NonFiniteError("wave evaluation overflow");
    return v;
  }

  Complex velocity_from(const Evaluation& ev) const {
    // (hbar / i m) * grad Psi / Psi
    return Complex(0.0, -hbar() / mass()) * (ev.grad_sum / ev.sum);
  }

  std::vector<GaussianPacket> packets_;
  double norm_ = 1.0;
};

}  // namespace cqhj
