#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "vru/synthgen.hpp"
#include "vru/trajdata.hpp"

#include <numbers>
#include <sstream>

using namespace vru;
using namespace vru::test;

TEST_CASE("state model transitions")
{
  using S = MotionState;
  CHECK(is_valid_transition(S::Waiting, S::Starting));
  CHECK(is_valid_transition(S::Starting, S::Waiting));
  CHECK(is_valid_transition(S::Starting, S::Moving));
  CHECK(is_valid_transition(S::Moving, S::Stopping));
  CHECK(is_valid_transition(S::Stopping, S::Waiting));
  CHECK(is_valid_transition(S::Waiting, S::Stopping));
  CHECK(is_valid_transition(S::Moving, S::Moving));
  CHECK_FALSE(is_valid_transition(S::Waiting, S::Moving));
  CHECK_FALSE(is_valid_transition(S::Moving, S::Waiting));
  CHECK_FALSE(is_valid_transition(S::Starting, S::Stopping));

  // 4 self loops + 8 neighbour transitions
  int valid = 0;
  for (auto a : kAllStates) {
    for (auto b : kAllStates) {
      valid += is_valid_transition(a, b) ? 1 : 0;
    }
  }
  CHECK(valid == 12);

  const std::vector<S> ok{S::Waiting, S::Starting, S::Moving, S::Stopping, S::Waiting};
  const std::vector<S> bad{S::Waiting, S::Moving};
  CHECK(is_valid_label_sequence(ok));
  CHECK_FALSE(is_valid_label_sequence(bad));
}

TEST_CASE("trajectory validation")
{
  auto t = straight({0, 0}, {1, 0}, 10);
  CHECK_NOTHROW(t.validate(0.02));
  auto short_t = straight({0, 0}, {1, 0}, 1);
  CHECK_THROWS_AS(short_t.validate(), InvariantError);
  auto back = t;
  back.t[5] = back.t[4];
  CHECK_THROWS_AS(back.validate(), InvariantError);
  auto uneven = t;
  uneven.t[5] += 1e-4;
  CHECK_NOTHROW(uneven.validate());
  CHECK_THROWS_AS(uneven.validate(0.02), InvariantError);
  auto nan = t;
  nan.position[3].x() = std::nan("");
  CHECK_THROWS_AS(nan.validate(), InvariantError);
}

TEST_CASE("scene validation")
{
  auto s = scene_from(straight({0, 0}, {1, 0}, 20), MotionState::Moving, "m1");
  CHECK_NOTHROW(s.validate());
  s.labels.pop_back();
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("m1"), InvariantError);
  s.labels.push_back(MotionState::Moving);
  s.events.transition_start = 0.3;
  s.events.transition_end = 0.1;
  CHECK_THROWS_AS(s.validate(), InvariantError);
  s.events.transition_end = 5.0;  // outside the timestamps
  CHECK_THROWS_AS(s.validate(), InvariantError);
}

TEST_CASE("jsonl round trip and errors")
{
  std::vector<Scene> scenes{scene_from(straight({0, 0}, {1, 0}, 30), MotionState::Moving, "a"),
                            scene_from(straight({1, 2}, {0, 0}, 25), MotionState::Waiting, "b")};
  scenes[0].trajectory.position[3].y() = 0.1234567890123;
  scenes[1].events.heel_off = 0.2;
  std::stringstream io;
  write_scenes_jsonl(io, scenes);
  const auto back = read_scenes_jsonl(io);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "a");
  CHECK(back[1].id == "b");
  CHECK(back[0].trajectory.position == scenes[0].trajectory.position);
  CHECK(back[1].events == scenes[1].events);
  CHECK(back[1].labels == scenes[1].labels);

  SUBCASE("non-monotone timestamps name the scene")
  {
    auto bad = scenes;
    bad[1].trajectory.t[4] = bad[1].trajectory.t[2];
    std::stringstream s;
    write_scenes_jsonl(s, bad);
    CHECK_THROWS_WITH(read_scenes_jsonl(s), doctest::Contains("'b'"));
  }
  SUBCASE("short label list")
  {
    auto bad = scenes;
    bad[0].labels.resize(5);
    std::stringstream s;
    write_scenes_jsonl(s, bad);
    CHECK_THROWS_AS(read_scenes_jsonl(s), InvariantError);
  }
  SUBCASE("malformed line reports the line number")
  {
    std::stringstream s;
    write_scenes_jsonl(s, scenes);
    s.seekp(0, std::ios::end);
    s << "{not json\n";
    try {
      read_scenes_jsonl(s);
      FAIL("expected ParseError");
    } catch (const ParseError & e) {
      CHECK(e.line() == 3);
    }
  }
}

TEST_CASE("csv round trip")
{
  std::vector<Scene> scenes{scene_from(straight({0, 0}, {1, 0}, 30), MotionState::Moving, "a"),
                            scene_from(straight({1, 2}, {0, 0}, 25), MotionState::Waiting, "b")};
  scenes[0].events.transition_start = 0.1;
  std::stringstream rows, side;
  write_scenes_csv(rows, side, scenes);
  const auto back = read_scenes_csv(rows, side);
  REQUIRE(back.size() == 2);
  CHECK(back[0].trajectory.position == scenes[0].trajectory.position);
  CHECK(back[0].trajectory.t == scenes[0].trajectory.t);
  CHECK(back[0].events == scenes[0].events);
  CHECK(back[1].scene_class == MotionState::Waiting);
  CHECK(csv_sidecar_path("/x/data.csv") == std::filesystem::path("/x/data.events.csv"));
}

TEST_CASE("exponential smoothing")
{
  const std::vector<double> y{0.0, 1.0, 1.0};
  const auto s = smooth(y, 0.5);
  CHECK(s[0] == 0.0);
  CHECK(s[1] == 0.5);
  CHECK(s[2] == 0.75);
  CHECK_THROWS_AS(smooth(y, 0.0), ParameterError);

  for_all(20, 11, [](std::mt19937_64 & rng, int) {
    std::vector<double> v(100);
    for (auto & x : v) {
      x = uniform(rng, -3.0, 3.0);
    }
    CHECK(smooth(v, 1.0) == v);
    // independent recursion
    const auto out = smooth(v, 0.3);
    double prev = v[0];
    double max_in = 0.0, max_out = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double expect = k == 0 ? v[0] : 0.3 * v[k] + 0.7 * prev;
      CHECK(out[k] == doctest::Approx(expect).epsilon(1e-15));
      prev = expect;
      max_in = std::max(max_in, std::abs(v[k]));
      max_out = std::max(max_out, std::abs(out[k]));
    }
    CHECK(max_out <= max_in);
  });
}

TEST_CASE("ego velocity")
{
  EgoOptions raw;
  raw.alpha_lon = raw.alpha_lat = 1.0;

  SUBCASE("straight line along +x")
  {
    const auto kin = ego_velocity(straight({0, 0}, {1, 0}, 60), raw);
    for (std::size_t k = 0; k < kin.velocity.size(); ++k) {
      CHECK(kin.velocity.v_lon[k] == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(std::abs(kin.velocity.v_lat[k]) < 1e-12);
    }
  }
  SUBCASE("rotated by 90 degrees")
  {
    const auto a = ego_velocity(straight({0, 0}, {1, 0}, 60), raw);
    const auto b = ego_velocity(straight({0, 0}, {0, 1}, 60), raw);
    for (std::size_t k = 0; k < a.velocity.size(); ++k) {
      CHECK(b.velocity.v_lon[k] == doctest::Approx(a.velocity.v_lon[k]).epsilon(1e-12));
      CHECK(std::abs(b.velocity.v_lat[k] - a.velocity.v_lat[k]) < 1e-12);
    }
  }
  SUBCASE("circular arc keeps the speed")
  {
    const double v = 1.3, r = 4.0;
    const auto arc = sampled([&](double t) { return Eigen::Vector2d(r * std::cos(v * t / r), r * std::sin(v * t / r)); },
                             200);
    const auto kin = ego_velocity(arc, raw);
    // chord / dt = 2 r sin(w dt / 2) / dt
    const double chord_speed = 2.0 * r * std::sin(v * 0.02 / r / 2.0) / 0.02;
    for (std::size_t k = 1; k < kin.velocity.size(); ++k) {
      const double m = std::hypot(kin.velocity.v_lon[k], kin.velocity.v_lat[k]);
      CHECK(m == doctest::Approx(chord_speed).epsilon(1e-12));
    }
  }
  SUBCASE("rigid-transform invariance")
  {
    const auto gen = generate_scene(CorpusSpec{}, MotionState::Starting, 5, "s");
    const auto base = ego_velocity(gen.scene.trajectory);
    for_all(30, 12, [&](std::mt19937_64 & rng, int) {
      const auto moved = rigid(gen.scene.trajectory, uniform(rng, -3.2, 3.2), {uniform(rng, -50, 50), uniform(rng, -50, 50)});
      const auto kin = ego_velocity(moved);
      double worst = 0.0;
      for (std::size_t k = 0; k < kin.velocity.size(); ++k) {
        worst = std::max({worst, std::abs(kin.velocity.v_lon[k] - base.velocity.v_lon[k]),
                          std::abs(kin.velocity.v_lat[k] - base.velocity.v_lat[k])});
      }
      CHECK(worst < 1e-9);
    });
  }
  SUBCASE("heading is held below the speed floor")
  {
    // walk along +y, then stand still: the frame keeps pointing along +y
    auto t = sampled([](double t) { return Eigen::Vector2d(0.0, t < 1.0 ? 1.2 * t : 1.2); }, 150);
    const auto kin = ego_velocity(t);
    CHECK(kin.frames.back().heading == doctest::Approx(std::numbers::pi / 2).epsilon(1e-6));
  }
}

TEST_CASE("auto labeling")
{
  SUBCASE("linear ramp: start at the threshold crossing")
  {
    const double onset = 1.3, accel = 1.0, v_end = 1.4;
    const auto speed = [&](double t) { return std::clamp(accel * (t - onset), 0.0, v_end); };
    const auto pos = [&](double t) {
      const double t1 = onset + v_end / accel;
      if (t <= onset) return 0.0;
      if (t <= t1) return 0.5 * accel * (t - onset) * (t - onset);
      return 0.5 * accel * (t1 - onset) * (t1 - onset) + v_end * (t - t1);
    };
    (void)speed;
    auto s = scene_from(sampled([&](double t) { return Eigen::Vector2d(pos(t), 0.0); }, 300), MotionState::Starting);
    const auto r = auto_label(s);
    REQUIRE(r.events.transition_start);
    const double crossing = onset + 0.2 / accel;
    CHECK(std::abs(*r.events.transition_start - crossing) <= 0.02);
    REQUIRE(r.events.transition_end);
    CHECK(*r.events.transition_end > *r.events.transition_start);
    CHECK(is_valid_label_sequence(r.labels));
  }
  SUBCASE("standing and walking scenes get no events")
  {
    const auto w = auto_label(scene_from(straight({0, 0}, {0, 0}, 100), MotionState::Starting));
    CHECK(w.events.empty());
    CHECK(std::all_of(w.labels.begin(), w.labels.end(), [](auto l) { return l == MotionState::Waiting; }));
    const auto m = auto_label(scene_from(straight({0, 0}, {1.5, 0}, 100), MotionState::Stopping));
    CHECK(m.events.empty());
    CHECK(std::all_of(m.labels.begin(), m.labels.end(), [](auto l) { return l == MotionState::Moving; }));
  }
  SUBCASE("noise-free generator scenes: events within one sample")
  {
    CorpusSpec spec;
    spec.noise_sigma = 0.0;
    int stop_phase_misses = 0;
    const int cases = 200;
    for_all(cases, 13, [&](std::mt19937_64 & rng, int i) {
      const auto cls = i % 2 == 0 ? MotionState::Starting : MotionState::Stopping;
      const auto g = generate_scene(spec, cls, rng(), "g");
      const auto r = auto_label(g.scene);
      REQUIRE(r.events.transition_start);
      REQUIRE(r.events.transition_end);
      const double ds = std::abs(*r.events.transition_start - *g.scene.events.transition_start);
      if (cls == MotionState::Starting) {
        CHECK(ds <= 0.02);
      } else if (ds > 0.02) {
        ++stop_phase_misses;
      }
      CHECK(std::abs(*r.events.transition_end - *g.scene.events.transition_end) <= 0.02);
      CHECK(is_valid_label_sequence(r.labels));
    });
    // The begin of a stopping phase is the last gait peak before the speed drops; a shallow
    // peak can qualify on one time grid and not on the other.
    CHECK(stop_phase_misses <= cases / 2 / 20);
  }
}

TEST_CASE("label_from_events")
{
  SceneEvents ev;
  ev.transition_start = 1.0;
  ev.transition_end = 2.0;
  CHECK(label_from_events(MotionState::Starting, ev, 0.5) == MotionState::Waiting);
  CHECK(label_from_events(MotionState::Starting, ev, 1.0) == MotionState::Starting);
  CHECK(label_from_events(MotionState::Starting, ev, 2.0) == MotionState::Moving);
  CHECK(label_from_events(MotionState::Stopping, ev, 0.5) == MotionState::Moving);
  CHECK(label_from_events(MotionState::Stopping, ev, 1.5) == MotionState::Stopping);
  CHECK(label_from_events(MotionState::Stopping, ev, 2.5) == MotionState::Waiting);
  CHECK(label_from_events(MotionState::Moving, ev, 0.5) == MotionState::Moving);
}
