#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace cqhj {

// 16-point Gauss-Legendre rule on [-1, 1].
namespace detail {
inline constexpr std::array<double, 8> kGl16Nodes = {
    0.0950125098376374401853193, 0.2816035507792589132304605,
    0.4580167776572273863424194, 0.6178762444026437484466718,
    0.7554044083550030338951012, 0.8656312023878317438804679,
    0.9445750230732325760779884, 0.9894009349916499325961542};
inline constexpr std::array<double, 8> kGl16Weights = {
    0.1894506104550684962853967, 0.1826034150449235888667637,
    0.1691565193950025381893121, 0.1495959888165767320815017,
    0.1246289712555338720524763, 0.0951585116824927848099251,
    0.0622535239386478928628438, 0.0271524594117540948517806};
}  // namespace detail

// Integrates f over [a, b] with a single 16-point Gauss-Legendre panel.
// T must support addition and scaling by double.
template <typename T, typename F>
T gauss_legendre_panel(F&& f, double a, double b) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  T acc = {};
  for (std::size_t i = 0; i < detail::kGl16Nodes.size(); ++i) {
    const double dx = half * detail::kGl16Nodes[i];
    acc += detail::kGl16Weights[i] * (f(mid - dx) + f(mid + dx));
  }
  return half * acc;
}

// Composite rule: n_panels equal panels over [a, b].
template <typename T, typename F>
T integrate_composite(F&& f, double a, double b, int n_panels) {
  T acc = {};
  const double h = (b - a) / n_panels;
  for (int k = 0; k < n_panels; ++k)
    acc += gauss_legendre_panel<T>(f, a + k * h, a + (k + 1) * h);
  return acc;
}

// Adaptive panel subdivision: accepts a panel when splitting it changes the
// result by less than tol (absolute).
template <typename T, typename F>
T integrate_adaptive(F&& f, double a, double b, double tol, int max_depth = 24) {
  const T whole = gauss_legendre_panel<T>(f, a, b);
  const double mid = 0.5 * (a + b);
  const T left = gauss_legendre_panel<T>(f, a, mid);
  const T right = gauss_legendre_panel<T>(f, mid, b);
  const T split = left + right;
  if (max_depth <= 0 || std::abs(split - whole) <= tol) return split;
  return integrate_adaptive<T>(f, a, mid, 0.5 * tol, max_depth - 1) +
         integrate_adaptive<T>(f, mid, b, 0.5 * tol, max_depth - 1);
}

}  // namespace cqhj
