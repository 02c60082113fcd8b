#include "balance/centroidal.hpp"

#include <spdlog/spdlog.h>

#include "balance/linalg.hpp"

namespace balance {

namespace {

Mat6 com_transform_of(const Vec3& com, const Vec3& base_position) {
  Mat6 x = Mat6::Identity();
  x.block<3, 3>(0, 3) = -skew(com - base_position);
  return x;
}

Mat6 inverse_com_transform(const Mat6& x) {
  Mat6 inv = Mat6::Identity();
  inv.block<3, 3>(0, 3) = -x.block<3, 3>(0, 3);
  return inv;
}

CentroidalTransform assemble_transform(const MatX& m, const Vec3& com, const Vec3& base_position) {
  const int dim = static_cast<int>(m.rows());
  const int n = dim - 6;
  CentroidalTransform t;
  t.com = com;
  t.com_transform = com_transform_of(com, base_position);
  const MatX mb_inv_mbj = m.topLeftCorner<6, 6>().llt().solve(m.topRightCorner(6, n));

  t.matrix = MatX::Identity(dim, dim);
  t.matrix.topLeftCorner<6, 6>() = t.com_transform;
  t.matrix.topRightCorner(6, n) = t.com_transform * mb_inv_mbj;

  t.inverse = MatX::Identity(dim, dim);
  t.inverse.topLeftCorner<6, 6>() = inverse_com_transform(t.com_transform);
  t.inverse.topRightCorner(6, n) = -mb_inv_mbj;
  return t;
}

// d/dt of the locked inertia about the CoM, from link velocities.
Mat3 centroidal_inertia_rate(const RobotModel& model, const Kinematics& kin) {
  const double m = model.total_mass();
  Vec3 com_velocity = Vec3::Zero();
  std::vector<Vec3> link_com_velocity(model.links().size());
  for (std::size_t l = 0; l < model.links().size(); ++l) {
    const Vec6& v = kin.link_velocity[l];
    link_com_velocity[l] = v.tail<3>() + v.head<3>().cross(kin.link_com[l]);
    com_velocity += model.links()[l].mass * link_com_velocity[l];
  }
  com_velocity /= m;

  Mat3 rate = Mat3::Zero();
  for (std::size_t l = 0; l < model.links().size(); ++l) {
    const Link& link = model.links()[l];
    const Mat3& r = kin.link_pose[l].rotation;
    const Mat3 iw = r * link.inertia * r.transpose();
    const Mat3 w = skew(kin.link_velocity[l].head<3>());
    const Vec3 offset = kin.link_com[l] - kin.com;
    const Vec3 offset_rate = link_com_velocity[l] - com_velocity;
    rate += w * iw - iw * w;
    rate += link.mass * (2.0 * offset.dot(offset_rate) * Mat3::Identity() -
                         offset_rate * offset.transpose() - offset * offset_rate.transpose());
  }
  return rate;
}

}  // namespace

CentroidalTransform centroidal_transform(const RobotModel& model, const RobotState& state) {
  const Kinematics kin = compute_kinematics(model, state);
  return assemble_transform(mass_matrix(model, state, kin), kin.com, state.base_position);
}

TransformedDynamics transformed_dynamics(const RobotModel& model, const RobotState& state,
                                         const std::vector<int>& frames) {
  TransformedDynamics d;
  d.dof = model.dof();
  d.mass = model.total_mass();
  d.kinematics = compute_kinematics(model, state);
  const Kinematics& kin = d.kinematics;
  const int n = d.dof;

  d.mass_matrix = mass_matrix(model, state, kin);
  d.bias = bias_forces(model, state, kin);
  d.transform = assemble_transform(d.mass_matrix, kin.com, state.base_position);
  const MatX& t_inv = d.transform.inverse;

  d.mass_bar = t_inv.transpose() * d.mass_matrix * t_inv;
  const VecX nu = state.velocity();
  d.velocity_bar = d.transform.matrix * nu;

  const Mat6 mb_bar = d.mass_bar.topLeftCorner<6, 6>();
  d.centroidal_inertia = mb_bar.bottomRightCorner<3, 3>();
  d.centroidal_inertia_rate = centroidal_inertia_rate(model, kin);
  d.momentum = mb_bar * d.velocity_bar.head<6>();

  d.gravity_bar = VecX::Zero(6 + n);
  d.gravity_bar(2) = d.mass * kGravity;

  // Momentum rate at zero acceleration: the base rows of h, moved to the
  // CoM, minus the weight.
  const Mat6 x_inv_t = inverse_com_transform(d.transform.com_transform).transpose();
  const Vec6 momentum_bias = x_inv_t * d.bias.head<6>() - d.gravity_bar.head<6>();
  const Mat3& inertia = d.centroidal_inertia;
  const Vec3 omega_c = d.velocity_bar.segment<3>(3);
  d.transform_rate = VecX::Zero(6 + n);
  d.transform_rate.head<3>() = momentum_bias.head<3>() / d.mass;
  d.transform_rate.segment<3>(3) =
      inertia.llt().solve(momentum_bias.tail<3>() - d.centroidal_inertia_rate * omega_c);

  d.bias_bar = t_inv.transpose() * d.bias - d.mass_bar * d.transform_rate;

  for (int frame : frames) {
    ContactTerms c;
    c.frame = frame;
    c.pose = frame_pose(model, kin, frame);
    c.jacobian = frame_jacobian(model, state, kin, frame);
    c.drift = jacobian_dot_nu(model, state, kin, frame);
    c.jacobian_bar = c.jacobian * t_inv;
    c.drift_bar = c.drift - c.jacobian_bar * d.transform_rate;
    d.contacts.push_back(std::move(c));
  }
  return d;
}

MatX transformed_coriolis(const RobotModel& model, const RobotState& state) {
  const double h = 1e-6;
  const CentroidalTransform t = centroidal_transform(model, state);
  const MatX t_rate = (centroidal_transform(model, advance(state, h)).matrix -
                       centroidal_transform(model, advance(state, -h)).matrix) /
                      (2 * h);
  const MatX t_inv_rate = -t.inverse * t_rate * t.inverse;
  return t.inverse.transpose() *
         (mass_matrix(model, state) * t_inv_rate + coriolis_matrix(model, state) * t.inverse);
}

Vec6 momentum(const RobotModel& model, const RobotState& state) {
  const CentroidalTransform t = centroidal_transform(model, state);
  const MatX m = mass_matrix(model, state);
  const MatX m_bar = t.inverse.transpose() * m * t.inverse;
  const VecX nu_bar = t.matrix * state.velocity();
  return m_bar.topLeftCorner<6, 6>() * nu_bar.head<6>();
}

SpatialVector momentum_from_links(const RobotModel& model, const RobotState& state) {
  const Kinematics kin = compute_kinematics(model, state);
  SpatialVector h{Vec3::Zero(), Vec3::Zero(), SpatialRole::momentum};
  for (std::size_t l = 0; l < model.links().size(); ++l) {
    const Link& link = model.links()[l];
    const Vec3 omega = kin.link_velocity[l].head<3>();
    const Vec3 v = kin.link_velocity[l].tail<3>() + omega.cross(kin.link_com[l]);
    const Mat3& r = kin.link_pose[l].rotation;
    h.linear += link.mass * v;
    h.angular += r * link.inertia * r.transpose() * omega +
                 (kin.link_com[l] - kin.com).cross(link.mass * v);
  }
  return h;
}

Mat6X centroidal_momentum_matrix(const RobotModel& model, const RobotState& state) {
  const CentroidalTransform t = centroidal_transform(model, state);
  const MatX m = mass_matrix(model, state);
  const Mat6 mb_bar = (t.inverse.transpose() * m * t.inverse).topLeftCorner<6, 6>();
  return mb_bar * t.matrix.topRows<6>();
}

MatX constrained_cmm(const RobotModel& model, const RobotState& state, int support_frame) {
  return constrained_cmm(transformed_dynamics(model, state, {support_frame}));
}

MatX constrained_cmm(const TransformedDynamics& dyn, std::size_t contact) {
  const ContactTerms& c = dyn.contacts.at(contact);
  const Mat6 jb = c.base_block();
  const double cond = condition_number(jb);
  if (!std::isfinite(cond)) {
    throw RankError("support Jacobian base block is singular", 5);
  }
  if (cond > kSupportConditionWarning) {
    spdlog::warn("support Jacobian base block is ill-conditioned (cond = {:.3e})", cond);
  }
  return -dyn.base_mass() * jb.partialPivLu().solve(c.joint_block());
}

RobotState embed_on_support(const RobotModel& model, int support_frame, const Pose& anchor,
                            const VecX& q, const VecX& qdot) {
  RobotState s = RobotState::zero(model);
  s.joint_positions = q;
  const Kinematics local = compute_kinematics(model, s);
  const Pose base = anchor * frame_pose(model, local, support_frame).inverse();
  s.base_position = base.position;
  s.base_orientation = Eigen::Quaterniond(base.rotation).normalized();
  s.joint_velocities = qdot;
  const MatX jac = frame_jacobian(model, s, compute_kinematics(model, s), support_frame);
  const Vec6 base_velocity =
      -jac.leftCols<6>().partialPivLu().solve(jac.rightCols(model.dof()) * qdot);
  s.base_linear_velocity = base_velocity.head<3>();
  s.base_angular_velocity = base_velocity.tail<3>();
  return s;
}

}  // namespace balance
