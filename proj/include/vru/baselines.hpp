#pragma once

#include "vru/trajdata.hpp"
#include "vru/trajpredictor.hpp"

#include <Eigen/Core>

#include <span>

namespace vru
{

/// Constant-velocity filter on (x, y, vx, vy) with white-noise acceleration of intensity q
/// and isotropic position measurement noise of variance r.
struct KfState
{
  Eigen::Vector4d x = Eigen::Vector4d::Zero();
  Eigen::Matrix4d P = Eigen::Matrix4d::Identity();
  double q = 1.0;
  double r = 4e-4;
  int updates = 0;
};

struct CvKfParams
{
  double q = 1.0;           // m^2/s^3
  double r = 4e-4;          // m^2
  double init_vel_var = 4;  // (m/s)^2, velocity prior at the first measurement

  void validate() const;
};

KfState cv_kf_init(const CvKfParams & params);

/// First call seeds the position from the measurement; later calls predict + update.
/// Throws ParameterError on dt <= 0 or a non-finite measurement.
KfState cv_kf_step(const KfState & state, const Eigen::Vector2d & z, double dt);

/// Linear extrapolation of the current estimate. Throws ParameterError before 2 updates.
PredictedTrajectory cv_kf_predict_trajectory(const KfState & state, std::span<const double> t_pred);

/// Discrete white-noise-acceleration process noise of one axis pair.
Eigen::Matrix4d cv_process_noise(double q, double dt);

struct CpState
{
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  Eigen::Matrix2d P = Eigen::Matrix2d::Identity();
};

struct ImmParams
{
  double q_cp = 1e-3;  // position random walk, m^2/s
  double q_cv = 2.0;   // white-noise acceleration, m^2/s^3
  double r = 4e-4;
  Eigen::Matrix2d pi = (Eigen::Matrix2d() << 0.99, 0.01, 0.01, 0.99).finished();  // rows: from, cols: to
  double embed_vel_var = 0.25;  // velocity variance of a CP state lifted into CV space
  double init_vel_var = 4.0;
  Eigen::Vector2d mu0 = Eigen::Vector2d(0.5, 0.5);  // (CP, CV)

  void validate() const;
};

struct ImmState
{
  CpState cp;
  KfState cv;
  Eigen::Vector2d mu = Eigen::Vector2d(0.5, 0.5);  // (CP, CV)
  int updates = 0;
  bool likelihood_reset = false;  // set when the last step hit a vanishing total likelihood
};

ImmState imm_init(const ImmParams & params);

/// One IMM cycle: mixing, model-conditioned KF steps, probability update.
ImmState imm_step(const ImmState & state, const Eigen::Vector2d & z, double dt, const ImmParams & params);

/// Pure CP filter step with the same conventions as the IMM's CP branch.
CpState cp_step(const CpState & state, const Eigen::Vector2d & z, double dt, double q_cp, double r);

/// Moving iff mu_CV >= threshold_cv.
MotionState imm_classify(const ImmState & state, double threshold_cv);

/// CV-KF run over a whole trajectory; element k is the filter after measurement k.
std::vector<KfState> run_cv_kf(const Trajectory & trajectory, const CvKfParams & params);

/// IMM run over a whole trajectory; element k is mu_CV after measurement k.
std::vector<double> run_imm_mu_cv(const Trajectory & trajectory, const ImmParams & params);

}  // namespace vru
