#include "vru/baselines.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>
#include <iostream>
#include <numbers>

namespace vru
{

void CvKfParams::validate() const
{
  if (!(q >= 0.0) || !(r > 0.0) || !(init_vel_var > 0.0)) {
    throw ParameterError("CV-KF needs q >= 0, r > 0 and a positive velocity prior");
  }
}

void ImmParams::validate() const
{
  if (!(q_cp >= 0.0) || !(q_cv >= 0.0) || !(r > 0.0) || !(embed_vel_var > 0.0) || !(init_vel_var > 0.0)) {
    throw ParameterError("IMM noise parameters out of range");
  }
  for (int i = 0; i < 2; ++i) {
    if (std::abs(pi.row(i).sum() - 1.0) > 1e-9 || (pi.row(i).array() < 0.0).any()) {
      throw ParameterError("IMM transition matrix rows must be probability vectors");
    }
  }
  if (std::abs(mu0.sum() - 1.0) > 1e-9 || (mu0.array() < 0.0).any()) {
    throw ParameterError("IMM initial model probabilities must sum to 1");
  }
}

Eigen::Matrix4d cv_process_noise(double q, double dt)
{
  const double a = q * dt * dt * dt / 3.0;
  const double b = q * dt * dt / 2.0;
  const double c = q * dt;
  Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
  Q(0, 0) = Q(1, 1) = a;
  Q(0, 2) = Q(2, 0) = Q(1, 3) = Q(3, 1) = b;
  Q(2, 2) = Q(3, 3) = c;
  return Q;
}

namespace
{

void check_step(const Eigen::Vector2d & z, double dt)
{
  if (!(dt > 0.0)) {
    throw ParameterError("filter step needs dt > 0");
  }
  if (!z.allFinite()) {
    throw ParameterError("non-finite measurement");
  }
}

Eigen::Matrix4d cv_transition(double dt)
{
  Eigen::Matrix4d F = Eigen::Matrix4d::Identity();
  F(0, 2) = F(1, 3) = dt;
  return F;
}

struct CvUpdate
{
  Eigen::Vector4d x;
  Eigen::Matrix4d P;
  double likelihood = 0.0;
};

double gaussian_likelihood(const Eigen::Vector2d & nu, const Eigen::Matrix2d & S)
{
  const double det = S.determinant();
  const double m = nu.dot(S.ldlt().solve(nu));
  return std::exp(-0.5 * m) / (2.0 * std::numbers::pi * std::sqrt(det));
}

// Predict + Joseph-form update; covariance is re-symmetrized to stay SPD numerically.
CvUpdate cv_predict_update(
  const Eigen::Vector4d & x, const Eigen::Matrix4d & P, const Eigen::Vector2d & z, double dt, double q, double r)
{
  const Eigen::Matrix4d F = cv_transition(dt);
  const Eigen::Vector4d xp = F * x;
  const Eigen::Matrix4d Pp = F * P * F.transpose() + cv_process_noise(q, dt);
  const Eigen::Vector2d nu = z - xp.head<2>();
  const Eigen::Matrix2d S = Pp.topLeftCorner<2, 2>() + r * Eigen::Matrix2d::Identity();
  const Eigen::Matrix<double, 4, 2> K = Pp.leftCols<2>() * S.inverse();
  Eigen::Matrix<double, 2, 4> H = Eigen::Matrix<double, 2, 4>::Zero();
  H(0, 0) = H(1, 1) = 1.0;
  const Eigen::Matrix4d I_KH = Eigen::Matrix4d::Identity() - K * H;
  CvUpdate u;
  u.x = xp + K * nu;
  u.P = I_KH * Pp * I_KH.transpose() + r * K * K.transpose();
  u.P = 0.5 * (u.P + u.P.transpose()).eval();
  u.likelihood = gaussian_likelihood(nu, S);
  return u;
}

struct CpUpdate
{
  CpState s;
  double likelihood = 0.0;
};

CpUpdate cp_predict_update(const CpState & state, const Eigen::Vector2d & z, double dt, double q, double r)
{
  const Eigen::Matrix2d Pp = state.P + q * dt * Eigen::Matrix2d::Identity();
  const Eigen::Vector2d nu = z - state.x;
  const Eigen::Matrix2d S = Pp + r * Eigen::Matrix2d::Identity();
  const Eigen::Matrix2d K = Pp * S.inverse();
  const Eigen::Matrix2d I_K = Eigen::Matrix2d::Identity() - K;
  CpUpdate u;
  u.s.x = state.x + K * nu;
  u.s.P = I_K * Pp * I_K.transpose() + r * K * K.transpose();
  u.s.P = 0.5 * (u.s.P + u.s.P.transpose()).eval();
  u.likelihood = gaussian_likelihood(nu, S);
  return u;
}

}  // namespace

KfState cv_kf_init(const CvKfParams & params)
{
  params.validate();
  KfState s;
  s.q = params.q;
  s.r = params.r;
  s.P = Eigen::Vector4d(params.r, params.r, params.init_vel_var, params.init_vel_var).asDiagonal();
  return s;
}

KfState cv_kf_step(const KfState & state, const Eigen::Vector2d & z, double dt)
{
  check_step(z, dt);
  KfState out = state;
  if (state.updates == 0) {
    out.x.head<2>() = z;
    out.x.tail<2>().setZero();
    out.updates = 1;
    return out;
  }
  const auto u = cv_predict_update(state.x, state.P, z, dt, state.q, state.r);
  out.x = u.x;
  out.P = u.P;
  ++out.updates;
  return out;
}

PredictedTrajectory cv_kf_predict_trajectory(const KfState & state, std::span<const double> t_pred)
{
  if (state.updates < 2) {
    throw ParameterError("CV-KF prediction needs at least two updates");
  }
  PredictedTrajectory out;
  const Eigen::Vector2d p = state.x.head<2>();
  const Eigen::Vector2d v = state.x.tail<2>();
  out.frame.origin = p;
  out.frame.heading = v.squaredNorm() > 0.0 ? std::atan2(v.y(), v.x()) : 0.0;
  out.t_pred.assign(t_pred.begin(), t_pred.end());
  for (double t : t_pred) {
    out.positions.emplace_back(p + v * t);
  }
  return out;
}

CpState cp_step(const CpState & state, const Eigen::Vector2d & z, double dt, double q_cp, double r)
{
  check_step(z, dt);
  return cp_predict_update(state, z, dt, q_cp, r).s;
}

ImmState imm_init(const ImmParams & params)
{
  params.validate();
  ImmState s;
  s.mu = params.mu0;
  s.cp.P = params.r * Eigen::Matrix2d::Identity();
  s.cv.q = params.q_cv;
  s.cv.r = params.r;
  s.cv.P = Eigen::Vector4d(params.r, params.r, params.init_vel_var, params.init_vel_var).asDiagonal();
  return s;
}

ImmState imm_step(const ImmState & state, const Eigen::Vector2d & z, double dt, const ImmParams & params)
{
  check_step(z, dt);
  ImmState out = state;
  out.likelihood_reset = false;
  if (state.updates == 0) {
    out.cp.x = z;
    out.cv.x.head<2>() = z;
    out.cv.x.tail<2>().setZero();
    out.cv.updates = 1;
    out.updates = 1;
    return out;
  }

  // Predicted model probabilities c_j and mixing weights mu_{i|j}.
  Eigen::Vector2d c = params.pi.transpose() * state.mu;
  Eigen::Matrix2d mix = Eigen::Matrix2d::Zero();
  for (int j = 0; j < 2; ++j) {
    for (int i = 0; i < 2; ++i) {
      mix(i, j) = c[j] > 0.0 ? params.pi(i, j) * state.mu[i] / c[j] : (i == j ? 1.0 : 0.0);
    }
  }

  // CV source lifted to / projected from the CP space.
  Eigen::Vector4d cp_as_cv;
  cp_as_cv << state.cp.x, 0.0, 0.0;
  Eigen::Matrix4d cp_as_cv_P = Eigen::Matrix4d::Zero();
  cp_as_cv_P.topLeftCorner<2, 2>() = state.cp.P;
  cp_as_cv_P(2, 2) = cp_as_cv_P(3, 3) = params.embed_vel_var;

  // Zero-weight sources are skipped so that a degenerate model set reproduces a single filter exactly.
  CpState cp0;
  cp0.x.setZero();
  cp0.P.setZero();
  const Eigen::Vector2d cp_src[2] = {state.cp.x, state.cv.x.head<2>()};
  const Eigen::Matrix2d cp_src_P[2] = {state.cp.P, state.cv.P.topLeftCorner<2, 2>()};
  for (int i = 0; i < 2; ++i) {
    if (mix(i, 0) != 0.0) {
      cp0.x += mix(i, 0) * cp_src[i];
    }
  }
  for (int i = 0; i < 2; ++i) {
    if (mix(i, 0) != 0.0) {
      const Eigen::Vector2d d = cp_src[i] - cp0.x;
      cp0.P += mix(i, 0) * (cp_src_P[i] + d * d.transpose());
    }
  }
  Eigen::Vector4d cv0 = Eigen::Vector4d::Zero();
  Eigen::Matrix4d cv0_P = Eigen::Matrix4d::Zero();
  const Eigen::Vector4d cv_src[2] = {cp_as_cv, state.cv.x};
  const Eigen::Matrix4d cv_src_P[2] = {cp_as_cv_P, state.cv.P};
  for (int i = 0; i < 2; ++i) {
    if (mix(i, 1) != 0.0) {
      cv0 += mix(i, 1) * cv_src[i];
    }
  }
  for (int i = 0; i < 2; ++i) {
    if (mix(i, 1) != 0.0) {
      const Eigen::Vector4d d = cv_src[i] - cv0;
      cv0_P += mix(i, 1) * (cv_src_P[i] + d * d.transpose());
    }
  }

  const auto cp_u = cp_predict_update(cp0, z, dt, params.q_cp, params.r);
  const auto cv_u = cv_predict_update(cv0, cv0_P, z, dt, params.q_cv, params.r);
  out.cp = cp_u.s;
  out.cv.x = cv_u.x;
  out.cv.P = cv_u.P;
  ++out.cv.updates;
  ++out.updates;

  const Eigen::Vector2d w(cp_u.likelihood * c[0], cv_u.likelihood * c[1]);
  const double total = w.sum();
  if (!(total > 1e-300) || !std::isfinite(total)) {
    std::clog << "imm: vanishing total likelihood, model probabilities reset to the prediction\n";
    out.mu = c / c.sum();
    out.likelihood_reset = true;
  } else {
    out.mu = w / total;
  }
  return out;
}

MotionState imm_classify(const ImmState & state, double threshold_cv)
{
  return state.mu[1] >= threshold_cv ? MotionState::Moving : MotionState::Waiting;
}

std::vector<KfState> run_cv_kf(const Trajectory & trajectory, const CvKfParams & params)
{
  std::vector<KfState> out;
  out.reserve(trajectory.size());
  KfState s = cv_kf_init(params);
  for (std::size_t k = 0; k < trajectory.size(); ++k) {
    const double dt = k == 0 ? 1.0 : trajectory.t[k] - trajectory.t[k - 1];
    s = cv_kf_step(s, trajectory.position[k], dt);
    out.push_back(s);
  }
  return out;
}

std::vector<double> run_imm_mu_cv(const Trajectory & trajectory, const ImmParams & params)
{
  std::vector<double> out;
  out.reserve(trajectory.size());
  ImmState s = imm_init(params);
  for (std::size_t k = 0; k < trajectory.size(); ++k) {
    const double dt = k == 0 ? 1.0 : trajectory.t[k] - trajectory.t[k - 1];
    s = imm_step(s, trajectory.position[k], dt, params);
    out.push_back(s.mu[1]);
  }
  return out;
}

}  // namespace vru
