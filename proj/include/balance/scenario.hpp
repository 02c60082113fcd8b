#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "balance/control.hpp"
#include "balance/types.hpp"

namespace balance {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gain written either as a scalar (times identity) or as a full matrix.
struct GainEntry {
  std::optional<double> scalar;
  MatX matrix;

  static GainEntry of(double value) { return GainEntry{value, {}}; }
  MatX expand(int size) const;
  bool operator==(const GainEntry& other) const;
};

enum class ControllerKind { classical, modified, two_feet_qp };

std::string to_string(ControllerKind kind);
std::string to_string(ContactMode mode);

struct ScenarioConfig {
  std::string name = "scenario";
  std::string model;                   ///< path as written in the file
  std::filesystem::path base_dir;      ///< directory relative paths resolve against
  ContactMode contact = ContactMode::one_foot;
  ControllerKind controller = ControllerKind::modified;
  GainMode qp_gain_mode = GainMode::modified;  ///< postural gain flavour for two_feet_qp
  std::vector<std::string> supports;   ///< empty: left_sole (+ right_sole)

  GainEntry kp = GainEntry::of(5.0);
  GainEntry ki = GainEntry::of(2.0);
  GainEntry kp_joint = GainEntry::of(10.0);
  GainEntry kd_joint = GainEntry::of(3.0);

  Reference::Type reference = Reference::Type::hold;
  int axis = 1;
  double amplitude = 0.05;
  double frequency = 0.3;

  std::vector<double> posture;         ///< q_j^d; empty means zeros
  std::vector<double> perturbation;    ///< explicit q_j(0) - q_j^d
  double random_magnitude = 0.0;       ///< used when no explicit vector is given
  std::uint64_t seed = 0;

  double duration = 10.0;
  double dt = 1e-3;
  double log_rate = 100.0;             ///< rows per second

  FrictionParams friction;
  double k_pos = 100.0;
  double k_vel = 20.0;

  std::filesystem::path model_path() const;
  std::vector<std::string> support_frames() const;
  GainMode gain_mode() const;
  GainSet gains(int dof) const;
  /// Initial joint offset, drawn from `seed` when random.
  VecX initial_offset(int dof) const;
  VecX desired_posture(int dof) const;
  /// Throws ConfigError on out-of-range values.
  void validate() const;

  bool operator==(const ScenarioConfig& other) const;
};

ScenarioConfig parse_scenario(const std::string& text,
                              const std::filesystem::path& base_dir = ".");
ScenarioConfig load_scenario(const std::filesystem::path& path);
std::string serialize_scenario(const ScenarioConfig& config);

}  // namespace balance
