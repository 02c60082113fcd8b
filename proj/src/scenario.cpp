#include "balance/scenario.hpp"

#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <toml.hpp>

namespace balance {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

double as_double(const toml::node& node, const std::string& key) {
  if (auto v = node.value<double>()) return *v;
  fail("'" + key + "' must be a number");
}

double read_double(const toml::table& t, const std::string& key, double fallback) {
  const toml::node* node = t.get(key);
  return node ? as_double(*node, key) : fallback;
}

std::string read_string(const toml::table& t, const std::string& key, const std::string& fallback) {
  const toml::node* node = t.get(key);
  if (!node) return fallback;
  if (auto v = node->value<std::string>()) return *v;
  fail("'" + key + "' must be a string");
}

std::vector<double> read_vector(const toml::table& t, const std::string& key) {
  std::vector<double> out;
  const toml::node* node = t.get(key);
  if (!node) return out;
  const toml::array* arr = node->as_array();
  if (!arr) fail("'" + key + "' must be an array of numbers");
  for (const toml::node& e : *arr) out.push_back(as_double(e, key));
  return out;
}

GainEntry read_gain(const toml::table& t, const std::string& key, const GainEntry& fallback) {
  const toml::node* node = t.get(key);
  if (!node) return fallback;
  if (auto v = node->value<double>()) return GainEntry::of(*v);
  const toml::array* rows = node->as_array();
  if (!rows || rows->empty()) fail("gain '" + key + "' must be a number or a matrix");
  GainEntry g;
  const int n = static_cast<int>(rows->size());
  if (!(*rows)[0].is_array()) {
    // flat list: diagonal entries
    g.matrix = MatX::Zero(n, n);
    for (int i = 0; i < n; ++i) g.matrix(i, i) = as_double((*rows)[i], key);
    return g;
  }
  g.matrix = MatX(n, n);
  for (int i = 0; i < n; ++i) {
    const toml::array* row = (*rows)[i].as_array();
    if (!row || static_cast<int>(row->size()) != n) fail("gain '" + key + "' must be square");
    for (int j = 0; j < n; ++j) g.matrix(i, j) = as_double((*row)[j], key);
  }
  return g;
}

void check_keys(const toml::table& t, const std::set<std::string>& allowed,
                const std::string& where) {
  for (const auto& [key, value] : t) {
    if (!allowed.count(std::string(key.str()))) {
      fail("unknown key '" + std::string(key.str()) + "' in " + where);
    }
  }
}

const toml::table* sub_table(const toml::table& t, const std::string& key) {
  const toml::node* node = t.get(key);
  if (!node) return nullptr;
  if (const toml::table* tab = node->as_table()) return tab;
  fail("'" + key + "' must be a table");
}

toml::array to_array(const std::vector<double>& v) {
  toml::array a;
  for (double x : v) a.push_back(x);
  return a;
}

void put_gain(toml::table& t, const std::string& key, const GainEntry& g) {
  if (g.scalar) {
    t.insert(key, *g.scalar);
    return;
  }
  toml::array rows;
  if (g.matrix.isDiagonal(0.0)) {
    for (int i = 0; i < g.matrix.rows(); ++i) rows.push_back(g.matrix(i, i));
    t.insert(key, std::move(rows));
    return;
  }
  for (int i = 0; i < g.matrix.rows(); ++i) {
    toml::array row;
    for (int j = 0; j < g.matrix.cols(); ++j) row.push_back(g.matrix(i, j));
    rows.push_back(std::move(row));
  }
  t.insert(key, std::move(rows));
}

const char* kAxes = "xyz";

}  // namespace

MatX GainEntry::expand(int size) const {
  if (scalar) return *scalar * MatX::Identity(size, size);
  if (matrix.rows() != size) {
    throw ConfigError("gain matrix is " + std::to_string(matrix.rows()) + "x" +
                      std::to_string(matrix.cols()) + ", expected " + std::to_string(size));
  }
  return matrix;
}

bool GainEntry::operator==(const GainEntry& other) const {
  if (scalar || other.scalar) return scalar == other.scalar;
  return matrix.rows() == other.matrix.rows() && matrix.cols() == other.matrix.cols() &&
         matrix == other.matrix;
}

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::classical: return "classical";
    case ControllerKind::modified: return "modified";
    case ControllerKind::two_feet_qp: return "two_feet_qp";
  }
  return "unknown";
}

std::string to_string(ContactMode mode) {
  return mode == ContactMode::one_foot ? "one_foot" : "two_feet";
}

std::filesystem::path ScenarioConfig::model_path() const {
  const std::filesystem::path p(model);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<std::string> ScenarioConfig::support_frames() const {
  if (!supports.empty()) return supports;
  if (contact == ContactMode::one_foot) return {"left_sole"};
  return {"left_sole", "right_sole"};
}

GainMode ScenarioConfig::gain_mode() const {
  switch (controller) {
    case ControllerKind::classical: return GainMode::classical;
    case ControllerKind::modified: return GainMode::modified;
    case ControllerKind::two_feet_qp: return qp_gain_mode;
  }
  return GainMode::modified;
}

GainSet ScenarioConfig::gains(int dof) const {
  GainSet g;
  g.mode = gain_mode();
  g.kp = kp.expand(6);
  g.ki = ki.expand(6);
  // A scalar K_i in classical mode means the linear block only.
  if (g.mode == GainMode::classical && ki.scalar) g.ki.bottomRightCorner<3, 3>().setZero();
  g.kp_joint = kp_joint.expand(dof);
  g.kd_joint = kd_joint.expand(dof);
  try {
    g.validate(dof);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("gains: ") + e.what());
  }
  return g;
}

VecX ScenarioConfig::initial_offset(int dof) const {
  if (!perturbation.empty()) {
    if (static_cast<int>(perturbation.size()) != dof) {
      throw ConfigError("perturbation has " + std::to_string(perturbation.size()) +
                        " entries, model has " + std::to_string(dof) + " joints");
    }
    return Eigen::Map<const VecX>(perturbation.data(), dof);
  }
  VecX v = VecX::Zero(dof);
  if (random_magnitude > 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int i = 0; i < dof; ++i) v(i) = uni(rng);
    v *= random_magnitude / v.norm();
  }
  return v;
}

VecX ScenarioConfig::desired_posture(int dof) const {
  if (posture.empty()) return VecX::Zero(dof);
  if (static_cast<int>(posture.size()) != dof) {
    throw ConfigError("posture has " + std::to_string(posture.size()) + " entries, model has " +
                      std::to_string(dof) + " joints");
  }
  return Eigen::Map<const VecX>(posture.data(), dof);
}

void ScenarioConfig::validate() const {
  if (model.empty()) fail("'model' is required");
  if (!std::filesystem::exists(model_path())) {
    fail("model file not found: " + model_path().string());
  }
  if (!(dt > 0.0)) fail("dt must be positive");
  if (!(duration >= 0.0)) fail("duration must be nonnegative");
  if (!(log_rate > 0.0)) fail("log_rate must be positive");
  if (!(amplitude >= 0.0)) fail("amplitude must be nonnegative");
  if (!(frequency >= 0.0)) fail("frequency must be nonnegative");
  if (axis < 0 || axis > 2) fail("axis must be x, y or z");
  if (!(k_pos >= 0.0) || !(k_vel >= 0.0)) fail("Baumgarte gains must be nonnegative");
  if (random_magnitude < 0.0) fail("random_magnitude must be nonnegative");
  const std::size_t expected = contact == ContactMode::one_foot ? 1 : 2;
  if (support_frames().size() != expected) fail("supports do not match the contact mode");
  if ((controller == ControllerKind::two_feet_qp) != (contact == ContactMode::two_feet)) {
    fail("two_feet contact requires the two_feet_qp controller and vice versa");
  }
  if (contact == ContactMode::two_feet &&
      (!perturbation.empty() || random_magnitude > 0.0)) {
    fail("initial perturbations are only supported with one foot on the ground");
  }
  try {
    friction_cone(friction);
  } catch (const std::invalid_argument& e) {
    fail(std::string("friction: ") + e.what());
  }
}

bool ScenarioConfig::operator==(const ScenarioConfig& o) const {
  return name == o.name && model == o.model && contact == o.contact &&
         controller == o.controller && qp_gain_mode == o.qp_gain_mode && supports == o.supports &&
         kp == o.kp && ki == o.ki && kp_joint == o.kp_joint && kd_joint == o.kd_joint &&
         reference == o.reference && axis == o.axis && amplitude == o.amplitude &&
         frequency == o.frequency && posture == o.posture && perturbation == o.perturbation &&
         random_magnitude == o.random_magnitude && seed == o.seed && duration == o.duration &&
         dt == o.dt && log_rate == o.log_rate && friction.mu == o.friction.mu &&
         friction.half_length == o.friction.half_length &&
         friction.half_width == o.friction.half_width && friction.fz_min == o.friction.fz_min &&
         k_pos == o.k_pos && k_vel == o.k_vel;
}

ScenarioConfig parse_scenario(const std::string& text, const std::filesystem::path& base_dir) {
  toml::table doc;
  try {
    doc = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
    fail(msg.str());
  }
  check_keys(doc,
             {"name", "model", "contact", "controller", "supports", "posture", "duration", "dt",
              "log_rate", "gains", "reference", "perturbation", "friction", "baumgarte"},
             "scenario");

  ScenarioConfig c;
  c.base_dir = base_dir;
  c.name = read_string(doc, "name", c.name);
  c.model = read_string(doc, "model", "");
  const std::string contact = read_string(doc, "contact", "one_foot");
  if (contact == "one_foot") {
    c.contact = ContactMode::one_foot;
  } else if (contact == "two_feet") {
    c.contact = ContactMode::two_feet;
  } else {
    fail("unknown contact mode '" + contact + "'");
  }
  const std::string controller = read_string(doc, "controller", "modified");
  if (controller == "classical") {
    c.controller = ControllerKind::classical;
  } else if (controller == "modified") {
    c.controller = ControllerKind::modified;
  } else if (controller == "two_feet_qp") {
    c.controller = ControllerKind::two_feet_qp;
  } else {
    fail("unknown controller '" + controller + "'");
  }
  if (const toml::node* s = doc.get("supports")) {
    const toml::array* arr = s->as_array();
    if (!arr) fail("'supports' must be an array of frame names");
    for (const toml::node& e : *arr) {
      auto v = e.value<std::string>();
      if (!v) fail("'supports' must be an array of frame names");
      c.supports.push_back(*v);
    }
  }
  c.posture = read_vector(doc, "posture");
  c.duration = read_double(doc, "duration", c.duration);
  c.dt = read_double(doc, "dt", c.dt);
  c.log_rate = read_double(doc, "log_rate", c.log_rate);

  if (const toml::table* g = sub_table(doc, "gains")) {
    check_keys(*g, {"kp", "ki", "kp_joint", "kd_joint", "mode"}, "[gains]");
    c.kp = read_gain(*g, "kp", c.kp);
    c.ki = read_gain(*g, "ki", c.ki);
    c.kp_joint = read_gain(*g, "kp_joint", c.kp_joint);
    c.kd_joint = read_gain(*g, "kd_joint", c.kd_joint);
    try {
      c.qp_gain_mode = gain_mode_from_string(read_string(*g, "mode", "modified"));
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
  }
  if (const toml::table* r = sub_table(doc, "reference")) {
    check_keys(*r, {"type", "axis", "amplitude", "frequency"}, "[reference]");
    const std::string type = read_string(*r, "type", "hold");
    if (type == "hold") {
      c.reference = Reference::Type::hold;
    } else if (type == "com_sine") {
      c.reference = Reference::Type::com_sine;
    } else {
      fail("unknown reference type '" + type + "'");
    }
    const std::string axis = read_string(*r, "axis", "y");
    if (axis.size() != 1 || std::string(kAxes).find(axis[0]) == std::string::npos) {
      fail("reference axis must be x, y or z");
    }
    c.axis = static_cast<int>(std::string(kAxes).find(axis[0]));
    c.amplitude = read_double(*r, "amplitude", c.amplitude);
    c.frequency = read_double(*r, "frequency", c.frequency);
  }
  if (const toml::table* p = sub_table(doc, "perturbation")) {
    check_keys(*p, {"joints", "random_magnitude", "seed"}, "[perturbation]");
    c.perturbation = read_vector(*p, "joints");
    c.random_magnitude = read_double(*p, "random_magnitude", 0.0);
    if (const toml::node* s = p->get("seed")) {
      auto v = s->value<std::int64_t>();
      if (!v || *v < 0) fail("'seed' must be a nonnegative integer");
      c.seed = static_cast<std::uint64_t>(*v);
    }
  }
  if (const toml::table* f = sub_table(doc, "friction")) {
    check_keys(*f, {"mu", "half_length", "half_width", "fz_min"}, "[friction]");
    c.friction.mu = read_double(*f, "mu", c.friction.mu);
    c.friction.half_length = read_double(*f, "half_length", c.friction.half_length);
    c.friction.half_width = read_double(*f, "half_width", c.friction.half_width);
    c.friction.fz_min = read_double(*f, "fz_min", c.friction.fz_min);
  }
  if (const toml::table* b = sub_table(doc, "baumgarte")) {
    check_keys(*b, {"k_pos", "k_vel"}, "[baumgarte]");
    c.k_pos = read_double(*b, "k_pos", c.k_pos);
    c.k_vel = read_double(*b, "k_vel", c.k_vel);
  }
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open scenario file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario(buffer.str(), path.parent_path().empty() ? "." : path.parent_path());
}

std::string serialize_scenario(const ScenarioConfig& c) {
  toml::table doc;
  doc.insert("name", c.name);
  doc.insert("model", c.model);
  doc.insert("contact", to_string(c.contact));
  doc.insert("controller", to_string(c.controller));
  if (!c.supports.empty()) {
    toml::array s;
    for (const auto& name : c.supports) s.push_back(name);
    doc.insert("supports", std::move(s));
  }
  if (!c.posture.empty()) doc.insert("posture", to_array(c.posture));
  doc.insert("duration", c.duration);
  doc.insert("dt", c.dt);
  doc.insert("log_rate", c.log_rate);

  toml::table gains;
  put_gain(gains, "kp", c.kp);
  put_gain(gains, "ki", c.ki);
  put_gain(gains, "kp_joint", c.kp_joint);
  put_gain(gains, "kd_joint", c.kd_joint);
  gains.insert("mode", to_string(c.qp_gain_mode));
  doc.insert("gains", std::move(gains));

  toml::table ref;
  ref.insert("type", c.reference == Reference::Type::hold ? "hold" : "com_sine");
  ref.insert("axis", std::string(1, kAxes[c.axis]));
  ref.insert("amplitude", c.amplitude);
  ref.insert("frequency", c.frequency);
  doc.insert("reference", std::move(ref));

  toml::table pert;
  if (!c.perturbation.empty()) pert.insert("joints", to_array(c.perturbation));
  pert.insert("random_magnitude", c.random_magnitude);
  pert.insert("seed", static_cast<std::int64_t>(c.seed));
  doc.insert("perturbation", std::move(pert));

  toml::table fr;
  fr.insert("mu", c.friction.mu);
  fr.insert("half_length", c.friction.half_length);
  fr.insert("half_width", c.friction.half_width);
  fr.insert("fz_min", c.friction.fz_min);
  doc.insert("friction", std::move(fr));

  toml::table bg;
  bg.insert("k_pos", c.k_pos);
  bg.insert("k_vel", c.k_vel);
  doc.insert("baumgarte", std::move(bg));

  std::ostringstream out;
  out << doc << '\n';
  return out.str();
}

}  // namespace balance
