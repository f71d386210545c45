#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "vru/baselines.hpp"

#include <Eigen/Eigenvalues>

using namespace vru;
using namespace vru::test;

namespace
{

bool spd(const Eigen::MatrixXd & p, double sym_tol = 1e-10)
{
  if ((p - p.transpose()).cwiseAbs().maxCoeff() > sym_tol) {
    return false;
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (p + p.transpose()));
  return es.eigenvalues().minCoeff() > 0.0;
}

double median(std::vector<double> v)
{
  std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("cv kalman filter")
{
  const double dt = 0.02;
  CvKfParams params;

  SUBCASE("noiseless constant velocity")
  {
    const auto traj = straight({1, 2}, {1.4, -0.3}, 60);
    const auto states = run_cv_kf(traj, params);
    REQUIRE(states.size() == 60);
    const auto & s = states[50];
    CHECK(std::abs(s.x[2] - 1.4) < 1e-3);
    CHECK(std::abs(s.x[3] + 0.3) < 1e-3);
    const auto p = cv_kf_predict_trajectory(states.back(), horizon_grid());
    const Eigen::Vector2d rel = p.positions.back() - states.back().x.head<2>();
    CHECK(rel.x() == doctest::Approx(1.4 * 2.5).epsilon(1e-3));
  }
  SUBCASE("huge measurement noise keeps the prediction")
  {
    auto s = cv_kf_init(params);
    s = cv_kf_step(s, {0, 0}, dt);
    s = cv_kf_step(s, {0.02, 0}, dt);
    s.r = 1e12;
    const auto next = cv_kf_step(s, {50, 50}, dt);
    const Eigen::Vector2d predicted = s.x.head<2>() + dt * s.x.tail<2>();
    CHECK((next.x.head<2>() - predicted).norm() < 1e-6);
  }
  SUBCASE("stationary target with q = 0 gives the sample mean")
  {
    CvKfParams p0;
    p0.q = 0.0;
    p0.init_vel_var = 1e-12;
    auto s = cv_kf_init(p0);
    std::mt19937_64 rng(71);
    std::normal_distribution<double> n(0.0, 0.02);
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    for (int k = 0; k < 200; ++k) {
      const Eigen::Vector2d z(3.0 + n(rng), -1.0 + n(rng));
      sum += z;
      s = cv_kf_step(s, z, dt);
    }
    CHECK((s.x.head<2>() - sum / 200.0).norm() < 1e-4);
  }
  SUBCASE("covariance stays SPD over random steps")
  {
    auto s = cv_kf_init(params);
    std::mt19937_64 rng(72);
    bool ok = true;
    for (int k = 0; k < 10000; ++k) {
      s = cv_kf_step(s, {uniform(rng, -10, 10), uniform(rng, -10, 10)}, uniform(rng, 0.005, 0.1));
      ok = ok && spd(s.P);
    }
    CHECK(ok);
  }
  SUBCASE("prediction helpers")
  {
    KfState s = cv_kf_init(params);
    CHECK_THROWS_AS(cv_kf_predict_trajectory(s, horizon_grid()), ParameterError);
    s.updates = 2;
    s.x << 1, 1, 1.4, 0;
    auto p = cv_kf_predict_trajectory(s, horizon_grid());
    CHECK(p.positions.back().x() == doctest::Approx(4.5));
    s.x.tail<2>().setZero();
    p = cv_kf_predict_trajectory(s, horizon_grid());
    CHECK(p.positions.back() == Eigen::Vector2d(1, 1));
    CHECK_THROWS_AS(cv_kf_step(s, {0, 0}, 0.0), ParameterError);
    CHECK_THROWS_AS(cv_kf_step(s, {std::nan(""), 0}, dt), ParameterError);
    const auto q = cv_process_noise(2.0, dt);
    CHECK(q(0, 0) == doctest::Approx(2.0 * std::pow(dt, 3) / 3.0));
    CHECK(q(0, 2) == doctest::Approx(2.0 * dt * dt / 2.0));
    CHECK(q(2, 2) == doctest::Approx(2.0 * dt));
  }
}

TEST_CASE("imm")
{
  const double dt = 0.02;
  ImmParams params;

  SUBCASE("identity transitions reduce to the CP filter")
  {
    ImmParams p = params;
    p.pi = Eigen::Matrix2d::Identity();
    p.mu0 = {1.0, 0.0};
    auto imm = imm_step(imm_init(p), {0.1, 0.2}, dt, p);  // the first measurement seeds both models
    CpState cp = imm.cp;
    std::mt19937_64 rng(73);
    for (int k = 0; k < 300; ++k) {
      const Eigen::Vector2d z(uniform(rng, -1, 1), uniform(rng, -1, 1));
      imm = imm_step(imm, z, dt, p);
      cp = cp_step(cp, z, dt, p.q_cp, p.r);
      CHECK(imm.cp.x == cp.x);
      CHECK(imm.cp.P == cp.P);
      CHECK(imm.mu[0] == 1.0);
    }
  }
  SUBCASE("probabilities sum to one and covariances stay SPD")
  {
    auto imm = imm_init(params);
    std::mt19937_64 rng(74);
    bool ok = true;
    Eigen::Vector2d pos = Eigen::Vector2d::Zero();
    for (int k = 0; k < 10000; ++k) {
      pos += Eigen::Vector2d(uniform(rng, -0.05, 0.05), uniform(rng, -0.05, 0.05));
      imm = imm_step(imm, pos, dt, params);
      ok = ok && std::abs(imm.mu.sum() - 1.0) < 1e-9 && spd(imm.cv.P) && spd(imm.cp.P);
    }
    CHECK(ok);
    CHECK((params.pi.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("standing and walking scenes")
  {
    CorpusSpec spec;
    std::vector<double> stand, walk;
    for (int i = 0; i < 5; ++i) {
      const auto w = generate_scene(spec, MotionState::Waiting, 900 + static_cast<std::uint64_t>(i), "w");
      const auto m = generate_scene(spec, MotionState::Moving, 950 + static_cast<std::uint64_t>(i), "m");
      const auto mw = run_imm_mu_cv(w.scene.trajectory, params);
      const auto mm = run_imm_mu_cv(m.scene.trajectory, params);
      for (std::size_t k = 50; k < mw.size(); ++k) {
        stand.push_back(1.0 - mw[k]);
      }
      for (std::size_t k = 50; k < mm.size(); ++k) {
        walk.push_back(mm[k]);
      }
    }
    CHECK(median(stand) > 0.95);
    CHECK(median(walk) > 0.99);
  }
  SUBCASE("classification")
  {
    ImmState s;
    s.mu = {0.0, 1.0};
    CHECK(imm_classify(s, 0.999) == MotionState::Moving);
    s.mu = {0.5, 0.5};
    CHECK(imm_classify(s, 0.989) == MotionState::Waiting);
  }
  SUBCASE("vanishing likelihood resets to the predicted probabilities")
  {
    auto imm = imm_init(params);
    imm = imm_step(imm, {0, 0}, dt, params);
    imm = imm_step(imm, {0, 0}, dt, params);
    const Eigen::Vector2d predicted = params.pi.transpose() * imm.mu;
    imm = imm_step(imm, {1e6, 1e6}, dt, params);
    CHECK(imm.likelihood_reset);
    CHECK((imm.mu - predicted).cwiseAbs().maxCoeff() < 1e-12);
  }
  ImmParams bad;
  bad.pi << 0.9, 0.2, 0.1, 0.9;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("imm threshold on the corpus")
{
  const auto & split = small_split();
  const ImmParams params;
  const auto r = evaluate_imm(split.train, split.test, params, PolyConfig::default_input(), 0.001);

  // independent scoring: mu_CV on every frame with a complete input window
  std::vector<double> score;
  std::vector<char> truth;
  for (const auto & scene : split.train) {
    const auto mu = run_imm_mu_cv(scene.trajectory, params);
    for (std::size_t k = 50; k < mu.size(); ++k) {
      score.push_back(mu[k]);
      truth.push_back(binary_truth(scene, k, ClassifierMode::TwoClassStart) ? 1 : 0);
    }
  }
  const double best = threshold_accuracy(score, truth, r.threshold);
  CHECK(best == doctest::Approx(r.train.accuracy).epsilon(1e-12));
  for (int g = 0; g <= 1000; g += 7) {
    CHECK(best >= threshold_accuracy(score, truth, g * 0.001));
  }
  CHECK(r.threshold < 1.0);
  CHECK(r.test.accuracy > 0.9);
}
