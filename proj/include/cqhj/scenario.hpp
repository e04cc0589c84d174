#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cqhj/integrate.hpp"
#include "cqhj/singular.hpp"
#include "cqhj/wave_model.hpp"

namespace cqhj {

// Configuration problems carry the offending field so the CLI can print
// field-level messages (and exit with the validation code).
struct ConfigError : std::runtime_error {
  ConfigError(const std::string& field, const std::string& message)
      : std::runtime_error(field + ": " + message) {}
};

struct PacketSpec {
  double a = 0.0;
  double v0 = 0.0;
  double sigma0 = 1.0;
};

struct FieldsParams {
  double x_lo = -15.0, x_hi = 15.0;
  std::size_t nx = 301, nt = 161;
  std::vector<double> times = {0.0, 2.0, 4.0, 8.0};
  Rect argand{-12.0, 12.0, -6.0, 6.0};
  std::size_t argand_nx = 241, argand_ny = 121;
  double cont_x_lo = -10.0, cont_x_hi = 10.0;
  std::size_t cont_nx = 401, cont_nt = 321;
};

struct TrajectoriesParams {
  std::vector<double> real_launches = {-10.0, -8.0, -6.0, -4.0, -2.0,
                                       2.0,   4.0,  6.0,  8.0,  10.0};
  std::vector<Complex> complex_launches;  // defaulted in make_default()
};

struct IsochronesParams {
  std::vector<double> tc = {0.0, 2.0, 4.0, 8.0};
  // explicit crossing targets; when absent, the real-trajectory positions
  // at each t_c are used (one target per real launch)
  std::optional<std::vector<double>> x_targets;
};

struct SingularParams {
  std::vector<double> times = {0.0, 2.0, 4.0, 8.0};
  Rect region{-3.0, 3.0, -1.0, 1.0};
  int grid_n = 96;
  std::vector<double> tc = {0.0, 2.0, 4.0, 8.0};
};

struct ScenarioConfig {
  std::vector<PacketSpec> packets;
  double m = 1.0;
  double hbar = 1.0;
  double T = 8.0;
  IntegratorConfig integrator;
  FieldsParams fields;
  TrajectoriesParams trajectories;
  IsochronesParams isochrones;
  SingularParams singular;
  std::filesystem::path out_dir = "out";
  int threads = 0;  // 0 = auto

  WaveModel make_model() const {
    std::vector<GaussianPacket> ps;
    ps.reserve(packets.size());
    for (const auto& p : packets)
      ps.push_back({p.a, p.v0, p.sigma0, m, hbar});
    return WaveModel(std::move(ps));
  }

  void validate() const {
    if (packets.empty())
      throw ConfigError("packets", "at least one packet is required");
    for (std::size_t i = 0; i < packets.size(); ++i) {
      const auto& p = packets[i];
      const std::string where = "packets[" + std::to_string(i) + "]";
      if (!(p.sigma0 > 0.0) || !std::isfinite(p.sigma0))
        throw ConfigError(where + ".sigma0", "must be positive and finite");
      if (!std::isfinite(p.a) || !std::isfinite(p.v0))
        throw ConfigError(where, "parameters must be finite");
    }
    if (!(m > 0.0) || !std::isfinite(m))
      throw ConfigError("m", "must be positive and finite");
    if (!(hbar > 0.0) || !std::isfinite(hbar))
      throw ConfigError("hbar", "must be positive and finite");
    if (!(T >= 0.0) || !std::isfinite(T))
      throw ConfigError("T", "must be non-negative and finite");
    try {
      integrator.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("integrator", e.what());
    }
    for (double tc : isochrones.tc)
      if (tc < 0.0 || tc > T)
        throw ConfigError("isochrones.tc", "crossing times must lie in [0, T]");
    for (double tc : singular.tc)
      if (tc < 0.0 || tc > T)
        throw ConfigError("singular.tc", "crossing times must lie in [0, T]");
    if (fields.nx < 2 || fields.nt < 2 || fields.argand_nx < 2 ||
        fields.argand_ny < 2)
      throw ConfigError("fields", "grid resolutions must be >= 2");
    if (fields.cont_nx < 5 || fields.cont_nt < 5)
      throw ConfigError("fields", "continuity grid needs nx, nt >= 5");
    if (!(fields.x_lo < fields.x_hi) ||
        !(fields.argand.re_lo < fields.argand.re_hi) ||
        !(fields.argand.im_lo < fields.argand.im_hi) ||
        !(fields.cont_x_lo < fields.cont_x_hi) ||
        !(singular.region.re_lo < singular.region.re_hi) ||
        !(singular.region.im_lo < singular.region.im_hi))
      throw ConfigError("ranges", "range bounds must be ordered");
    if (singular.grid_n < 16)
      throw ConfigError("singular.grid_n", "must be >= 16");
    if (threads < 0) throw ConfigError("threads", "must be >= 0");
    auto launches = trajectories.real_launches;
    std::sort(launches.begin(), launches.end());
    if (std::adjacent_find(launches.begin(), launches.end()) != launches.end())
      throw ConfigError("trajectories.real_launches", "entries must be distinct");
  }
};

// Head-on collision of two identical packets: sigma0 = 1, a = -/+8,
// v0 = +/-2, unit mass, hbar = 1, horizon T = 8.
inline ScenarioConfig make_default_scenario() {
  ScenarioConfig cfg;
  cfg.packets = {{-8.0, 2.0, 1.0}, {8.0, -2.0, 1.0}};
  for (double re : {-10.0, -8.0, -6.0, -4.0, -2.0, 2.0, 4.0, 6.0, 8.0, 10.0})
    for (double im : {-0.5, 0.5})
      cfg.trajectories.complex_launches.emplace_back(re, im);
  return cfg;
}

namespace detail {

using json = nlohmann::json;

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(key, "has the wrong type");
  }
}

inline std::vector<double> get_list(const json& j, const std::string& key,
                                    std::vector<double> fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_array()) throw ConfigError(key, "must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : j.at(key)) {
    if (!e.is_number()) throw ConfigError(key, "must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

}  // namespace detail

// Parses a scenario from JSON. Missing keys keep the defaults of the
// given base configuration; structural mistakes raise ConfigError.
inline ScenarioConfig load_scenario(const nlohmann::json& j,
                                    ScenarioConfig base = make_default_scenario()) {
  using detail::get_list;
  using detail::get_or;
  ScenarioConfig cfg = std::move(base);
  if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");

  if (j.contains("packets")) {
    if (!j.at("packets").is_array())
      throw ConfigError("packets", "must be an array of packet objects");
    cfg.packets.clear();
    std::size_t i = 0;
    for (const auto& pj : j.at("packets")) {
      const std::string where = "packets[" + std::to_string(i++) + "]";
      if (!pj.is_object()) throw ConfigError(where, "must be an object");
      PacketSpec p;
      if (!pj.contains("a")) throw ConfigError(where + ".a", "is required");
      p.a = get_or<double>(pj, "a", 0.0);
      p.v0 = get_or<double>(pj, "v0", 0.0);
      p.sigma0 = get_or<double>(pj, "sigma0", 1.0);
      cfg.packets.push_back(p);
    }
  }
  cfg.m = get_or<double>(j, "m", cfg.m);
  cfg.hbar = get_or<double>(j, "hbar", cfg.hbar);
  cfg.T = get_or<double>(j, "T", cfg.T);
  cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir.string());
  cfg.threads = get_or<int>(j, "threads", cfg.threads);

  if (j.contains("integrator")) {
    const auto& ij = j.at("integrator");
    cfg.integrator.rel_tol = get_or<double>(ij, "rel_tol", cfg.integrator.rel_tol);
    cfg.integrator.abs_tol = get_or<double>(ij, "abs_tol", cfg.integrator.abs_tol);
    cfg.integrator.max_step = get_or<double>(ij, "max_step", cfg.integrator.max_step);
    cfg.integrator.min_step = get_or<double>(ij, "min_step", cfg.integrator.min_step);
    cfg.integrator.dense_dt = get_or<double>(ij, "dense_dt", cfg.integrator.dense_dt);
  }
  if (j.contains("fields")) {
    const auto& fj = j.at("fields");
    auto& f = cfg.fields;
    f.x_lo = get_or<double>(fj, "x_lo", f.x_lo);
    f.x_hi = get_or<double>(fj, "x_hi", f.x_hi);
    f.nx = get_or<std::size_t>(fj, "nx", f.nx);
    f.nt = get_or<std::size_t>(fj, "nt", f.nt);
    f.times = get_list(fj, "times", f.times);
    if (fj.contains("argand")) {
      const auto& aj = fj.at("argand");
      f.argand.re_lo = get_or<double>(aj, "re_lo", f.argand.re_lo);
      f.argand.re_hi = get_or<double>(aj, "re_hi", f.argand.re_hi);
      f.argand.im_lo = get_or<double>(aj, "im_lo", f.argand.im_lo);
      f.argand.im_hi = get_or<double>(aj, "im_hi", f.argand.im_hi);
      f.argand_nx = get_or<std::size_t>(aj, "nx", f.argand_nx);
      f.argand_ny = get_or<std::size_t>(aj, "ny", f.argand_ny);
    }
    if (fj.contains("continuity")) {
      const auto& cj = fj.at("continuity");
      f.cont_x_lo = get_or<double>(cj, "x_lo", f.cont_x_lo);
      f.cont_x_hi = get_or<double>(cj, "x_hi", f.cont_x_hi);
      f.cont_nx = get_or<std::size_t>(cj, "nx", f.cont_nx);
      f.cont_nt = get_or<std::size_t>(cj, "nt", f.cont_nt);
    }
  }
  if (j.contains("trajectories")) {
    const auto& tj = j.at("trajectories");
    cfg.trajectories.real_launches =
        get_list(tj, "real_launches", cfg.trajectories.real_launches);
    if (tj.contains("complex_launches")) {
      if (!tj.at("complex_launches").is_array())
        throw ConfigError("trajectories.complex_launches",
                          "must be an array of [re, im] pairs");
      cfg.trajectories.complex_launches.clear();
      for (const auto& e : tj.at("complex_launches")) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
          throw ConfigError("trajectories.complex_launches",
                            "must be an array of [re, im] pairs");
        cfg.trajectories.complex_launches.emplace_back(e[0].get<double>(),
                                                       e[1].get<double>());
      }
    }
  }
  bool tc_iso_explicit = false, tc_sing_explicit = false;
  if (j.contains("isochrones")) {
    const auto& ij = j.at("isochrones");
    tc_iso_explicit = ij.contains("tc");
    cfg.isochrones.tc = get_list(ij, "tc", cfg.isochrones.tc);
    if (ij.contains("x_targets"))
      cfg.isochrones.x_targets = get_list(ij, "x_targets", {});
  }
  if (j.contains("singular")) {
    const auto& sj = j.at("singular");
    cfg.singular.times = get_list(sj, "times", cfg.singular.times);
    cfg.singular.grid_n = get_or<int>(sj, "grid_n", cfg.singular.grid_n);
    tc_sing_explicit = sj.contains("tc");
    cfg.singular.tc = get_list(sj, "tc", cfg.singular.tc);
    if (sj.contains("region")) {
      const auto& rj = sj.at("region");
      cfg.singular.region.re_lo = get_or<double>(rj, "re_lo", cfg.singular.region.re_lo);
      cfg.singular.region.re_hi = get_or<double>(rj, "re_hi", cfg.singular.region.re_hi);
      cfg.singular.region.im_lo = get_or<double>(rj, "im_lo", cfg.singular.region.im_lo);
      cfg.singular.region.im_hi = get_or<double>(rj, "im_hi", cfg.singular.region.im_hi);
    }
  }
  // default crossing-time lists adapt to a shortened horizon; explicit
  // lists must satisfy tc <= T themselves
  auto clamp_defaults = [&](std::vector<double>& tc) {
    std::vector<double> kept;
    for (double v : tc)
      if (v <= cfg.T) kept.push_back(v);
    if (kept.empty()) kept.push_back(cfg.T);
    tc = std::move(kept);
  };
  if (!tc_iso_explicit) clamp_defaults(cfg.isochrones.tc);
  if (!tc_sing_explicit) clamp_defaults(cfg.singular.tc);
  cfg.validate();
  return cfg;
}

inline ScenarioConfig load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  return load_scenario(j);
}

}  // namespace cqhj
