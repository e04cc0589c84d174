#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <set>
#include <vector>

#include "cqhj/isochrone.hpp"
#include "cqhj/wave_model.hpp"

using namespace cqhj;
using Catch::Matchers::WithinAbs;

namespace {

constexpr double kPi = std::numbers::pi;

WaveModel collision_model() {
  return WaveModel({{-8.0, 2.0, 1.0, 1.0, 1.0}, {8.0, -2.0, 1.0, 1.0, 1.0}});
}

}  // namespace

TEST_CASE("t_c = 0 degenerates to real initial conditions") {
  const WaveModel w = collision_model();
  const std::vector<double> targets = {-6.0, -3.0, 3.0, 6.0};
  const auto fam = build_isochrone(w, 0.0, targets, 4.0, {});
  REQUIRE(fam.members.size() == targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& mbr = fam.members[i];
    CHECK(mbr.z0 == Complex(targets[i], 0.0));  // exact, no backward leg
    CHECK(mbr.crossing_residual == 0.0);
    CHECK(mbr.status == PathStatus::completed);
    CHECK(mbr.path.samples.front().t == 0.0);
    CHECK(mbr.path.back().t == 4.0);
  }
}

TEST_CASE("single-packet backward map matches the closed-form inversion") {
  // z0 = a + (x - a) sigma0/sigma~(t_c); for a=-8, x=0, t_c=4 (packet at
  // rest) this is -8 + 8/(1+2i) = -6.4 - 3.2i
  const GaussianPacket p{-8.0, 0.0, 1.0, 1.0, 1.0};
  const WaveModel w({p});
  const std::vector<double> targets = {0.0};
  const auto fam = build_isochrone(w, 4.0, targets, 8.0, {});
  REQUIRE(fam.members.size() == 1);
  const auto& mbr = fam.members[0];
  REQUIRE(mbr.status == PathStatus::completed);
  CHECK_THAT(std::abs(mbr.z0 - Complex(-6.4, -3.2)), WithinAbs(0.0, 1e-7));
  // the member crosses the axis at the target
  CHECK_THAT(std::abs(mbr.z_at_tc - Complex(0.0, 0.0)), WithinAbs(0.0, kEpsCross));
}

TEST_CASE("collision families satisfy the crossing invariant") {
  const WaveModel w = collision_model();
  const std::vector<double> targets = {-4.0, -1.5, 1.5, 4.0};

  for (double tc : {2.0, 4.0}) {
    const auto fam = build_isochrone(w, tc, targets, 8.0, {});
    REQUIRE(fam.members.size() == targets.size());
    for (std::size_t i = 0; i < fam.members.size(); ++i) {
      const auto& mbr = fam.members[i];
      REQUIRE(mbr.status == PathStatus::completed);
      CHECK(std::abs(mbr.z_at_tc.imag()) < kEpsCross);
      CHECK(std::abs(mbr.z_at_tc.real() - targets[i]) < kEpsCross);
      // the stitched path spans [0, T] and contains the crossing sample
      CHECK(mbr.path.samples.front().t == 0.0);
      CHECK(mbr.path.back().t == 8.0);
      bool has_tc = false;
      for (const auto& s : mbr.path.samples)
        if (s.t == tc && std::abs(s.z - mbr.z_at_tc) < 1e-14) has_tc = true;
      CHECK(has_tc);
    }
    CHECK(fam.max_crossing_residual() < kEpsCross);
  }
}

TEST_CASE("round trip is already close without polish") {
  const WaveModel w = collision_model();
  const std::vector<double> targets = {-4.0, 3.0};
  const auto fam =
      build_isochrone(w, 2.0, targets, 2.0, {}, /*allow_polish=*/false);
  for (const auto& mbr : fam.members) {
    REQUIRE(mbr.status == PathStatus::completed);
    CHECK(std::abs(mbr.z_at_tc - Complex(mbr.x_target, 0.0)) < 1e-6);
  }
}

TEST_CASE("a target at a node is recorded, not dropped") {
  const WaveModel w = collision_model();
  const std::vector<double> targets = {-4.0, kPi / 4.0, 4.0};
  const auto fam = build_isochrone(w, 4.0, targets, 8.0, {});
  REQUIRE(fam.members.size() == 3);
  CHECK(fam.members[0].status == PathStatus::completed);
  CHECK(fam.members[1].status == PathStatus::aborted_pole);
  CHECK(fam.members[2].status == PathStatus::completed);
  // node-adjacent crossing points have tiny wave amplitude
  const double peak = std::abs(w.psi_bar(Complex(0.0, 0.0), 4.0));
  CHECK(std::abs(w.psi_bar(Complex(kPi / 4.0 + 1e-3, 0.0), 4.0)) < 1e-2 * peak);
}

TEST_CASE("build_isochrone validates the crossing time") {
  const WaveModel w = collision_model();
  const std::vector<double> targets = {0.5};
  CHECK_THROWS_AS(build_isochrone(w, 9.0, targets, 8.0, {}),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_isochrone(w, -1.0, targets, 8.0, {}),
                  std::invalid_argument);
}

TEST_CASE("real trajectory reconstructed from crossings") {
  SECTION("single packet: every crossing is the same complex trajectory") {
    const GaussianPacket p{-8.0, 2.0, 1.0, 1.0, 1.0};
    const WaveModel w({p});
    IntegratorConfig cfg;
    cfg.dense_dt = 0.5;
    const auto real_path = propagate_real(w, -8.0, 0.0, 4.0, cfg);
    REQUIRE(real_path.status == PathStatus::completed);
    const auto report = real_from_crossings(w, real_path, cfg, 2);
    REQUIRE(report.records.size() >= 3);
    for (const auto& rec : report.records) {
      REQUIRE(rec.status == PathStatus::completed);
      // closed-form inversion with x_k - a - v0 t_k = 0 gives z0 = a always
      CHECK_THAT(std::abs(rec.z0 - Complex(-8.0, 0.0)), WithinAbs(0.0, 1e-7));
      CHECK(rec.residual < kEpsCross);
    }
  }

  SECTION("collision model: distinct complex trajectories trace one real one") {
    const WaveModel w = collision_model();
    IntegratorConfig cfg;
    cfg.dense_dt = 1.0;
    const auto real_path = propagate_real(w, -4.0, 0.0, 3.0, cfg);
    REQUIRE(real_path.status == PathStatus::completed);
    const auto report = real_from_crossings(w, real_path, cfg);
    REQUIRE(report.completed_count() >= 3);
    std::vector<Complex> z0s;
    for (const auto& rec : report.records) {
      if (rec.t == 0.0) {
        CHECK(rec.z0 == Complex(rec.x, 0.0));
        continue;
      }
      REQUIRE(rec.status == PathStatus::completed);
      CHECK(rec.residual < kEpsCross);
      z0s.push_back(rec.z0);
    }
    for (std::size_t a = 0; a < z0s.size(); ++a)
      for (std::size_t b = a + 1; b < z0s.size(); ++b)
        CHECK(std::abs(z0s[a] - z0s[b]) > 1e-3);  // pairwise distinct
  }
}
