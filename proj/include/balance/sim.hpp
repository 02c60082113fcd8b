#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "balance/control.hpp"
#include "balance/model.hpp"
#include "balance/scenario.hpp"
#include "balance/types.hpp"

namespace balance {

/// Non-finite state, or a constraint solve that failed, during integration.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, long step) : std::runtime_error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

struct SimState {
  RobotState robot;
  double t = 0.0;
  double quaternion_drift = 0.0;  ///< | |Q| - 1 | after the last step, before renormalising
};

/// Constrained frames, their anchors and the Baumgarte gains.
struct ContactSetup {
  std::vector<int> frames;
  std::vector<Pose> anchors;
  double k_pos = 100.0;
  double k_vel = 20.0;

  /// Anchors taken from the current pose of each frame.
  static ContactSetup capture(const RobotModel& model, const RobotState& state,
                              std::vector<int> frames, double k_pos = 100.0,
                              double k_vel = 20.0);
  void validate(const RobotModel& model) const;
};

struct ConstrainedAcceleration {
  VecX nu_dot;
  VecX wrench;  ///< 6 per frame, world-aligned (force, torque at the frame origin)
};

/// Solves M nu_dot = B tau - h + J'f together with
/// J nu_dot = -Jdot nu - 2 k_vel J nu - k_pos e, through the Schur complement.
/// One frame: throws RankError when J M^-1 J' is singular. Two frames: damped
/// least squares.
ConstrainedAcceleration constrained_forward_dynamics(const RobotModel& model,
                                                     const RobotState& state, const VecX& tau,
                                                     const ContactSetup& contact);

/// Position/orientation error of each frame against its anchor, stacked.
VecX constraint_pose_error(const RobotModel& model, const RobotState& state,
                           const ContactSetup& contact);

/// ||J nu|| over all constrained frames.
double constraint_velocity_residual(const RobotModel& model, const RobotState& state,
                                    const ContactSetup& contact);

/// One RK4 step with tau held constant; the quaternion is renormalised
/// afterwards.
SimState step(const RobotModel& model, const SimState& state, const VecX& tau,
              const ContactSetup& contact, double dt);

/// Throws SimulationError carrying `step` if any state entry is NaN or inf.
void require_finite(const SimState& state, long step);

struct TrajectoryLog {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;
  std::vector<double> series(const std::string& name) const;
  void write_csv(std::ostream& out) const;
  void write_csv(const std::string& path) const;
};

/// Called after every control evaluation, before the integration step.
using StepObserver =
    std::function<void(long step, const SimState&, const ControlOutput&, const ControllerState&)>;

/// Everything needed to run a configured scenario.
struct ScenarioSetup {
  VecX posture;
  SimState initial;
  ControllerState controller_state;
  ContactSetup contact;
  BalanceController controller;
};

ScenarioSetup prepare_scenario(const RobotModel& model, const ScenarioConfig& config);

/// Runs the closed loop for config.duration seconds.
TrajectoryLog run_scenario(const RobotModel& model, const ScenarioConfig& config,
                           const StepObserver& observer = {});

}  // namespace balance
