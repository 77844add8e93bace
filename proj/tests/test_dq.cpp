#include <cmath>
#include <complex>

#include "doctest.h"
#include "vac/dq.hpp"

using namespace vac;

namespace {

// Small deterministic generator for property checks.
struct Lcg {
  unsigned long long s = 0x2545F4914F6CDD1Dull;
  double uniform(double lo, double hi) {
    s = s * 6364136223846793005ull + 1442695040888963407ull;
    return lo + (hi - lo) * (double((s >> 11) & ((1ull << 53) - 1)) / double(1ull << 53));
  }
};

}  // namespace

TEST_CASE("rotation examples") {
  const DqVec a = rotate({1.0, 0.0}, FrameAngle{0.0});
  CHECK(a.d == doctest::Approx(1.0));
  CHECK(a.q == doctest::Approx(0.0));

  const DqVec b = rotate({1.0, 0.0}, FrameAngle{kPi / 2.0});
  CHECK(b.d == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(b.q == doctest::Approx(1.0));

  const DqVec fwd = rotate({0.8, -0.3}, FrameAngle{0.41});
  const DqVec back = rotate(fwd, FrameAngle{-0.41});
  CHECK(back.d == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(back.q == doctest::Approx(-0.3).epsilon(1e-14));
}

TEST_CASE("rotation preserves magnitude") {
  Lcg rng;
  for (int k = 0; k < 500; ++k) {
    const DqVec v{rng.uniform(-500, 500), rng.uniform(-500, 500)};
    const double ang = rng.uniform(-10, 10);
    CHECK(rotate(v, FrameAngle{ang}).magnitude() ==
          doctest::Approx(v.magnitude()).epsilon(1e-13));
  }
}

TEST_CASE("frame angle wrapping") {
  CHECK(FrameAngle::wrapped(kPi).rad == doctest::Approx(kPi));
  CHECK(FrameAngle::wrapped(-kPi).rad == doctest::Approx(kPi));
  CHECK(FrameAngle::wrapped(3.0 * kPi).rad == doctest::Approx(kPi));
  CHECK(FrameAngle::wrapped(0.25).rad == doctest::Approx(0.25));
  CHECK(FrameAngle::wrapped(2.0 * kPi + 0.25).rad == doctest::Approx(0.25));
}

TEST_CASE("series branch to admittance") {
  const double w = 2.0 * kPi * 50.0;

  const Admittance2 pure_r = rl_to_admittance({1.0, 0.0}, w);
  CHECK(pure_r.g == doctest::Approx(1.0));
  CHECK(pure_r.b == doctest::Approx(0.0));

  const Admittance2 pure_l = rl_to_admittance({0.0, 1.0 / w}, w);
  CHECK(pure_l.g == doctest::Approx(0.0));
  CHECK(pure_l.b == doctest::Approx(-1.0));

  // regression fixture: the initial virtual gains of the reference system
  const Admittance2 y = rl_to_admittance({0.2255, 0.0032}, w);
  const double x = w * 0.0032;
  const double z2 = 0.2255 * 0.2255 + x * x;
  CHECK(y.g == doctest::Approx(0.2255 / z2).epsilon(1e-15));
  CHECK(y.b == doctest::Approx(-x / z2).epsilon(1e-15));
  CHECK(y.g == doctest::Approx(0.212436).epsilon(1e-5));
  CHECK(y.b == doctest::Approx(-0.947067).epsilon(1e-5));

  CHECK_THROWS_AS(rl_to_admittance({0.0, 0.0}, w), Error);
}

TEST_CASE("admittance to series branch and round trip") {
  const double w = 2.0 * kPi * 50.0;
  const RLParams r1 = admittance_to_rl({1.0, 0.0}, w);
  CHECK(r1.r == doctest::Approx(1.0));
  CHECK(r1.l == doctest::Approx(0.0));
  const RLParams r2 = admittance_to_rl({0.0, -1.0}, w);
  CHECK(r2.r == doctest::Approx(0.0));
  CHECK(r2.l == doctest::Approx(1.0 / w));
  CHECK_THROWS_AS(admittance_to_rl({0.0, 0.0}, w), Error);

  Lcg rng;
  for (int k = 0; k < 500; ++k) {
    const RLParams rl{rng.uniform(1e-3, 10.0), rng.uniform(1e-6, 0.1)};
    const RLParams back = admittance_to_rl(rl_to_admittance(rl, w), w);
    CHECK(back.r == doctest::Approx(rl.r).epsilon(1e-10));
    CHECK(back.l == doctest::Approx(rl.l).epsilon(1e-10));
  }
}

TEST_CASE("admittance algebra") {
  const Admittance2 identity{1.0, 0.0};
  const DqVec v{3.0, -2.0};
  const DqVec applied = adm_apply(identity, v);
  CHECK(applied.d == doctest::Approx(v.d));
  CHECK(applied.q == doctest::Approx(v.q));

  const Admittance2 y{2.0, -1.0};
  const DqVec u = adm_apply(adm_compose(y, adm_inverse(y)), {1.0, 1.0});
  CHECK(u.d == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(u.q == doctest::Approx(1.0).epsilon(1e-12));

  const Admittance2 sum = adm_add({2.0, -1.0}, {1.0, -1.0});
  CHECK(sum.g == doctest::Approx(3.0));
  CHECK(sum.b == doctest::Approx(-2.0));

  CHECK_THROWS_AS(adm_inverse({0.0, 0.0}), Error);
}

TEST_CASE("admittance multiplication commutes") {
  Lcg rng;
  for (int k = 0; k < 200; ++k) {
    const Admittance2 a{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const Admittance2 b{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const Admittance2 ab = adm_compose(a, b);
    const Admittance2 ba = adm_compose(b, a);
    CHECK(ab.g == doctest::Approx(ba.g).epsilon(1e-13));
    CHECK(ab.b == doctest::Approx(ba.b).epsilon(1e-13));
  }
}

TEST_CASE("per-unit base") {
  const PerUnitBase base{75e3, 400.0, 50.0};
  CHECK(base.z_base() == doctest::Approx(400.0 * 400.0 / 75e3));
  CHECK(base.v_d_nom() == doctest::Approx(400.0 * std::sqrt(2.0) / std::sqrt(3.0)));
  CHECK(base.v_d_nom() == doctest::Approx(326.598632371090413).epsilon(1e-14));
  CHECK(base.omega_n() == doctest::Approx(100.0 * kPi));
  // i_base carries s_base at nominal voltage
  CHECK(1.5 * base.v_d_nom() * base.i_base() == doctest::Approx(75e3));
  CHECK_THROWS_AS(PerUnitBase(0.0, 400.0, 50.0), Error);
  CHECK_THROWS_AS(PerUnitBase(75e3, -1.0, 50.0), Error);
}
