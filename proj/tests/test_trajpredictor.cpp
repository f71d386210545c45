#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

#include <algorithm>
#include <filesystem>
#include <numbers>

using namespace vru;
using namespace vru::test;

namespace
{

std::vector<Scene> of_class(std::span<const Scene> scenes, MotionState cls)
{
  std::vector<Scene> out;
  std::copy_if(scenes.begin(), scenes.end(), std::back_inserter(out),
               [&](const Scene & s) { return s.scene_class == cls; });
  return out;
}

}  // namespace

TEST_CASE("horizon grid")
{
  const auto g = horizon_grid();
  REQUIRE(g.size() == kHorizonSteps);
  CHECK(g.front() == doctest::Approx(0.02));
  CHECK(g.back() == doctest::Approx(2.5));
}

TEST_CASE("kinematic baseline")
{
  const auto g = horizon_grid();
  EgoFrame frame;
  auto p = kinematic_baseline_predict(1.0, 0.0, frame, g);
  CHECK(p.positions.back().x() == doctest::Approx(2.5));
  CHECK(p.positions.back().y() == doctest::Approx(0.0));

  frame.origin = {3.0, -2.0};
  p = kinematic_baseline_predict(0.0, 0.0, frame, g);
  for (const auto & x : p.positions) {
    CHECK(x == frame.origin);
  }

  frame.heading = std::numbers::pi / 2;
  p = kinematic_baseline_predict(1.0, 1.0, frame, g);
  const Eigen::Vector2d d = p.positions.back() - frame.origin;
  CHECK(d.x() == doctest::Approx(-2.5));
  CHECK(d.y() == doctest::Approx(2.5));
}

TEST_CASE("output targets")
{
  // straight walk at 1.2 m/s along 30 degrees: ego targets are (1.2 t, 0)
  const double a = std::numbers::pi / 6;
  const auto traj = straight({2, 1}, {1.2 * std::cos(a), 1.2 * std::sin(a)}, 300);
  const auto kin = ego_velocity(traj);
  const auto out = PolyConfig::default_output();
  const auto c = output_targets(traj, kin.frames[100], out, 100, 0.02);
  REQUIRE(c);
  const auto g = horizon_grid();
  const auto ego = reconstruct_series(*c, out, g, 0.02);
  for (Eigen::Index i = 0; i < ego.cols(); ++i) {
    CHECK(ego(0, i) == doctest::Approx(1.2 * g[static_cast<std::size_t>(i)]).epsilon(1e-9));
    CHECK(std::abs(ego(1, i)) < 1e-9);
  }
  const auto back = trajectory_from_coefficients(*c, out, kin.frames[100], 0.02, g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK((back.positions[i] - traj.position[100 + i + 1]).norm() < 1e-9);
  }
  CHECK_FALSE(output_targets(traj, kin.frames[200], out, 200, 0.02));
}

TEST_CASE("trained monolithic predictor")
{
  const auto & pred = small_monolithic();
  const auto & split = small_split();
  const double dt = 0.02;

  SUBCASE("equivariance under rigid transforms")
  {
    const auto & scene = split.test.front();
    const auto base_kin = ego_velocity(scene.trajectory, pred.ego);
    const std::size_t now = 80;
    const auto base = pred.predict(base_kin.velocity, base_kin.frames[now], now, dt);
    REQUIRE(base);
    for_all(20, 51, [&](std::mt19937_64 & rng, int) {
      const double angle = uniform(rng, -3.1, 3.1);
      const Eigen::Vector2d shift(uniform(rng, -100, 100), uniform(rng, -100, 100));
      const auto moved = rigid(scene.trajectory, angle, shift);
      const auto kin = ego_velocity(moved, pred.ego);
      const auto p = pred.predict(kin.velocity, kin.frames[now], now, dt);
      REQUIRE(p);
      const Eigen::Rotation2Dd rot(angle);
      double worst = 0.0;
      for (std::size_t i = 0; i < p->positions.size(); ++i) {
        worst = std::max(worst, (p->positions[i] - (rot * base->positions[i] + shift)).norm());
      }
      CHECK(worst < 1e-6);
    });
  }
  SUBCASE("determinism and availability")
  {
    const auto & scene = split.test.back();
    const auto kin = ego_velocity(scene.trajectory, pred.ego);
    const auto a = pred.predict(kin.velocity, kin.frames[60], 60, dt);
    const auto b = pred.predict(kin.velocity, kin.frames[60], 60, dt);
    REQUIRE(a);
    CHECK(a->positions == b->positions);
    CHECK(a->positions.size() == kHorizonSteps);
    CHECK_FALSE(pred.predict(kin.velocity, kin.frames[10], 10, dt));
  }
  SUBCASE("window boundaries stay continuous")
  {
    const auto out = pred.output_config;
    std::vector<double> boundaries, after, after2;
    for (std::size_t w = 1; w < out.windows.size(); ++w) {
      boundaries.push_back(out.windows[w].offset);
      after.push_back(out.windows[w].offset + dt);
      after2.push_back(out.windows[w].offset + 2 * dt);
    }
    std::vector<double> jumps;
    for (const auto & scene : split.test) {
      const auto kin = ego_velocity(scene.trajectory, pred.ego);
      for (const auto k : evaluation_steps(scene, pred.input_config, 10)) {
        const auto c = pred.predict_coefficients(kin.velocity, k, dt);
        REQUIRE(c);
        const auto at = reconstruct_series(*c, out, boundaries, dt);
        // the later window's value at the boundary, extrapolated from its first two samples
        const Eigen::MatrixXd later =
          2.0 * reconstruct_series(*c, out, after, dt) - reconstruct_series(*c, out, after2, dt);
        for (Eigen::Index i = 0; i < at.cols(); ++i) {
          jumps.push_back((at.col(i) - later.col(i)).norm());
        }
      }
    }
    REQUIRE_FALSE(jumps.empty());
    std::sort(jumps.begin(), jumps.end());
    // pieces are independent network outputs; single frames can jump further
    CHECK(jumps[jumps.size() / 2] < 0.1);
    CHECK(jumps[jumps.size() * 9 / 10] < 0.25);
  }
  SUBCASE("save and load")
  {
    const auto path = std::filesystem::temp_directory_path() / "vru_test_predictor.json";
    save_predictor(path, pred);
    const auto back = load_predictor(path);
    CHECK(back.mlp == pred.mlp);
    CHECK(back.output_config == pred.output_config);
    std::filesystem::remove(path);
  }
}

TEST_CASE("predictor trained on walking only")
{
  const auto & split = small_split();
  const auto moving_train = of_class(split.train, MotionState::Moving);
  const auto moving_test = of_class(split.test, MotionState::Moving);
  const auto cfg = small_config();
  const auto trained = train_predictor(moving_train, cfg.predictor_train());
  CHECK(trained.patterns > 0);

  const auto walk = straight({0, 0}, {1.4, 0.0}, 120);
  const auto kin = ego_velocity(walk, trained.predictor.ego);
  const auto p = trained.predictor.predict(kin.velocity, kin.frames[100], 100, 0.02);
  REQUIRE(p);
  const double ahead = (p->positions.back() - kin.frames[100].origin).x();
  CHECK(ahead == doctest::Approx(3.5).epsilon(0.5 / 3.5));

  const auto mlp = evaluate_asaee(moving_test, cfg.input, 5, polymlp_runner(trained.predictor));
  const auto kf = evaluate_asaee(moving_test, cfg.input, 5, cv_kf_runner(cfg.kf));
  REQUIRE(mlp.overall);
  REQUIRE(kf.overall);
  CHECK(*mlp.overall < *kf.overall + 2.0);

  const auto again = train_predictor(moving_train, cfg.predictor_train());
  CHECK(again.predictor.mlp == trained.predictor.mlp);

  CHECK_THROWS_AS(train_predictor(std::span<const Scene>{}, cfg.predictor_train()), std::runtime_error);
}
