#include "ctrlid/scenarios.hpp"

#include "ctrlid/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

namespace ctrlid {

double example_prc(double theta) {
  return -std::sin(theta) * std::exp(3.0 * (std::cos(theta - 0.9 * std::numbers::pi) - 1.0));
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string_view to_string(AnchorSampler sampler) {
  switch (sampler) {
    case AnchorSampler::uniform: return "uniform";
    case AnchorSampler::lattice: return "lattice";
    case AnchorSampler::user: return "user";
  }
  return "unknown";
}

AnchorSampler parse_sampler(std::string_view name) {
  if (name == "uniform") return AnchorSampler::uniform;
  if (name == "lattice") return AnchorSampler::lattice;
  if (name == "user") return AnchorSampler::user;
  throw InvalidArgument("unknown anchor sampler '" + std::string(name) + "'");
}

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"linear_2x2", "bloch", "prc", "prc_noise"};
  return names;
}

const std::vector<std::string>& override_keys() {
  static const std::vector<std::string> keys{
      "seed",          "ts",         "dt",           "basis",         "order",
      "drift_basis",   "drift_order", "num_anchors", "num_perturbations", "sampler",
      "noise",         "trials",     "study_n",      "input_bound",   "oracle_derivatives",
      "validation_points", "free_run_samples", "drift_records", "epsilon", "omega",    "frequency_slope"};
  return keys;
}

namespace {

double parse_real(const std::string& key, const std::string& text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last || !std::isfinite(value)) {
    throw InvalidArgument("override " + key + "='" + text + "' is not a finite number");
  }
  return value;
}

long long parse_integer(const std::string& key, const std::string& text) {
  long long value = 0;
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(text.data(), last, value);
  if (res.ec != std::errc() || res.ptr != last) {
    throw InvalidArgument("override " + key + "='" + text + "' is not an integer");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw InvalidArgument("override " + key + "='" + text + "' is not a boolean");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<int>(parse_integer(key, item)));
  if (out.empty()) throw InvalidArgument("override " + key + " is an empty list");
  return out;
}

ScenarioSettings defaults_for(std::string_view name) {
  ScenarioSettings s;
  s.name = std::string(name);
  if (name == "linear_2x2") {
    s.A = (Matrix(2, 2) << 1, 4, 5, -1).finished();
    s.B = (Matrix(2, 2) << 2, 1, 0.6, 1).finished();
    s.sampling_time = 1e-3;
    s.integrator_step = 1e-5;
    s.basis = BasisFamily::monomial;
    s.order = 0;
    s.drift_basis = BasisFamily::monomial;
    s.drift_order = 1;
    s.num_anchors = 1;
    s.sampler = AnchorSampler::user;
  } else if (name == "bloch") {
    s.epsilon = 0.6;
    s.omega = 1.4;
    s.sampling_time = 1e-4;
    s.integrator_step = 1e-5;
    s.basis = BasisFamily::monomial;
    s.order = 2;
    s.num_anchors = 20;
    s.sampler = AnchorSampler::uniform;
    s.validation_points = 1000;
  } else if (name == "prc" || name == "prc_noise") {
    s.frequency_slope = 0.1;
    s.sampling_time = 1e-4;
    s.integrator_step = 1e-5;
    s.basis = BasisFamily::fourier;
    s.order = 6;
    s.num_anchors = 35;
    s.sampler = AnchorSampler::lattice;
    s.validation_points = 10000;
    if (name == "prc_noise") {
      s.noise = 1.0;
      s.trials = 20;
      s.study_perturbations = {5, 25, 100, 200};
    }
  } else {
    std::string known;
    for (const auto& n : scenario_names()) known += (known.empty() ? "" : ", ") + n;
    throw InvalidArgument("unknown scenario '" + std::string(name) + "' (known: " + known + ")");
  }
  return s;
}

void apply_override(ScenarioSettings& s, const std::string& key, const std::string& value,
                    bool& order_set) {
  if (key == "seed") {
    const auto v = parse_integer(key, value);
    if (v < 0) throw InvalidArgument("override seed must be nonnegative");
    s.seed = static_cast<std::uint64_t>(v);
  } else if (key == "ts") {
    s.sampling_time = parse_real(key, value);
  } else if (key == "dt") {
    s.integrator_step = parse_real(key, value);
  } else if (key == "basis") {
    s.basis = parse_basis_family(value);
  } else if (key == "order") {
    s.order = static_cast<int>(parse_integer(key, value));
    order_set = true;
  } else if (key == "drift_basis") {
    s.drift_basis = parse_basis_family(value);
  } else if (key == "drift_order") {
    s.drift_order = static_cast<int>(parse_integer(key, value));
  } else if (key == "num_anchors") {
    s.num_anchors = static_cast<int>(parse_integer(key, value));
    if (s.sampler == AnchorSampler::user && s.num_anchors != 1) s.sampler = AnchorSampler::uniform;
  } else if (key == "num_perturbations") {
    s.num_perturbations = static_cast<int>(parse_integer(key, value));
  } else if (key == "sampler") {
    s.sampler = parse_sampler(value);
  } else if (key == "noise") {
    s.noise = parse_real(key, value);
  } else if (key == "trials") {
    s.trials = static_cast<int>(parse_integer(key, value));
  } else if (key == "study_n") {
    s.study_perturbations = parse_int_list(key, value);
  } else if (key == "input_bound") {
    s.input_bound = parse_real(key, value);
  } else if (key == "oracle_derivatives") {
    s.oracle_derivatives = parse_bool(key, value);
  } else if (key == "validation_points") {
    s.validation_points = static_cast<int>(parse_integer(key, value));
  } else if (key == "free_run_samples") {
    s.free_run_samples = static_cast<int>(parse_integer(key, value));
  } else if (key == "drift_records") {
    s.drift_records = parse_bool(key, value);
  } else if (key == "epsilon") {
    s.epsilon = parse_real(key, value);
  } else if (key == "omega") {
    s.omega = parse_real(key, value);
  } else if (key == "frequency_slope") {
    s.frequency_slope = parse_real(key, value);
  } else {
    throw InvalidArgument("unknown override key '" + key + "'");
  }
}

void check_settings(const ScenarioSettings& s) {
  auto fail = [](const std::string& msg) { throw InvalidArgument(msg); };
  if (!(s.sampling_time > 0.0)) fail("ts must be positive");
  if (!(s.integrator_step > 0.0) || s.integrator_step > s.sampling_time) {
    fail("dt must satisfy 0 < dt <= ts");
  }
  if (std::abs(std::round(s.sampling_time / s.integrator_step) * s.integrator_step -
               s.sampling_time) > 1e-12) {
    fail("ts must be a whole number of dt steps");
  }
  if (s.order < 0 || s.drift_order < 0) fail("basis orders must be nonnegative");
  if (s.num_anchors < 1) fail("num_anchors must be at least 1");
  if (s.num_perturbations < 0) fail("num_perturbations must be nonnegative");
  if (!(s.noise >= 0.0)) fail("noise must be nonnegative");
  if (s.trials < 1) fail("trials must be at least 1");
  if (!(s.input_bound > 0.0)) fail("input_bound must be positive");
  if (s.validation_points < 0) fail("validation_points must be nonnegative");
  if (s.free_run_samples < 0 || (s.free_run_samples > 0 && s.free_run_samples < 3)) {
    fail("free_run_samples must be 0 or at least 3");
  }
  for (std::size_t i = 0; i < s.study_perturbations.size(); ++i) {
    if (s.study_perturbations[i] < 1) fail("study_n values must be positive");
    if (i > 0 && s.study_perturbations[i] <= s.study_perturbations[i - 1]) {
      fail("study_n values must ascend");
    }
  }
  if (s.name == "prc_noise" && s.study_perturbations.empty()) fail("study_n must be non-empty");
}

}  // namespace

Scenario load_scenario(std::string_view name, const Overrides& overrides) {
  ScenarioSettings s = defaults_for(name);
  bool order_set = false;
  for (const auto& [key, value] : overrides) apply_override(s, key, value, order_set);
  // Bloch's Fourier variant uses five harmonics unless told otherwise.
  if (s.name == "bloch" && s.basis == BasisFamily::fourier && !order_set) s.order = 5;
  check_settings(s);

  PlanOptions plan;
  plan.num_anchors = s.num_anchors;
  plan.sampler = s.sampler;
  plan.sampling_time = s.sampling_time;
  plan.integrator_step = s.integrator_step;
  plan.noise_amplitude = s.noise;
  plan.seed = s.seed;
  plan.derivative_mode =
      s.oracle_derivatives ? DerivativeMode::exact : DerivativeMode::forward_difference;

  ReferenceValues reference;
  std::optional<AffineSystem> system;

  if (s.name == "linear_2x2") {
    system = make_linear_system(s.A, s.B);
    if (s.sampler == AnchorSampler::user) plan.user_anchors = {Eigen::Vector2d(0.0, -0.25)};
    if (s.num_perturbations == 0) {
      plan.inputs = {Eigen::Vector2d(1, 2), Eigen::Vector2d(2, 4), Eigen::Vector2d(3, 8)};
    }
    reference.recovered_gain = (Matrix(2, 2) << 2.0002, 1.0003, 0.6005, 1.0002).finished();
    reference.delta_u = (Matrix(2, 2) << -1, -2, -2, -6).finished();
    reference.delta_xdot = (Matrix(2, 2) << -4.0007, -10.0018, -2.6009, -7.2021).finished();
  } else if (s.name == "bloch") {
    system = make_bloch_system(s.epsilon, s.omega);
    if (s.num_perturbations == 0) {
      for (int k = 0; k <= 3; ++k) plan.inputs.push_back(Eigen::Vector2d(k, 0));
      for (int k = 0; k <= 3; ++k) plan.inputs.push_back(Eigen::Vector2d(0, k));
    }
  } else {
    const double slope = s.frequency_slope;
    system = make_phase_oscillator(example_prc, [slope](double t) { return slope * t; }, s.noise);
    const int N = s.num_perturbations > 0 ? s.num_perturbations : 2;
    plan.num_perturbations = N;
    plan.input_scale = s.input_bound / double(N);
  }
  if (s.num_perturbations > 0 && s.name != "prc" && s.name != "prc_noise") {
    plan.num_perturbations = s.num_perturbations;
    plan.input_scale = 1.0;
  }

  BasisSpec basis{s.basis, s.order, system->state_domain(), {}};
  BasisSpec drift_basis{s.drift_basis, s.drift_order, system->state_domain(), {}};
  basis.validate();
  drift_basis.validate();
  if (plan.sampler == AnchorSampler::lattice && system->state_dim() != 1) {
    throw InvalidArgument("the lattice sampler needs a 1-D state");
  }

  return Scenario{std::move(s), std::move(*system), std::move(plan), std::move(basis),
                  std::move(drift_basis), std::move(reference)};
}

std::string canonical_settings(const ScenarioSettings& s) {
  std::ostringstream out;
  auto line = [&out](const char* key, const std::string& v) { out << key << '=' << v << '\n'; };
  auto matrix = [](const Matrix& M) {
    std::string text = std::to_string(M.rows()) + "x" + std::to_string(M.cols());
    for (Index i = 0; i < M.rows(); ++i)
      for (Index j = 0; j < M.cols(); ++j) text += ";" + format_double(M(i, j));
    return text;
  };
  line("name", s.name);
  line("seed", std::to_string(s.seed));
  line("ts", format_double(s.sampling_time));
  line("dt", format_double(s.integrator_step));
  line("basis", std::string(to_string(s.basis)));
  line("order", std::to_string(s.order));
  line("drift_basis", std::string(to_string(s.drift_basis)));
  line("drift_order", std::to_string(s.drift_order));
  line("num_anchors", std::to_string(s.num_anchors));
  line("num_perturbations", std::to_string(s.num_perturbations));
  line("sampler", std::string(to_string(s.sampler)));
  line("noise", format_double(s.noise));
  line("trials", std::to_string(s.trials));
  std::string study;
  for (int N : s.study_perturbations) study += (study.empty() ? "" : ",") + std::to_string(N);
  line("study_n", study);
  line("input_bound", format_double(s.input_bound));
  line("oracle_derivatives", s.oracle_derivatives ? "true" : "false");
  line("validation_points", std::to_string(s.validation_points));
  line("free_run_samples", std::to_string(s.free_run_samples));
  line("drift_records", s.drift_records ? "true" : "false");
  line("A", matrix(s.A));
  line("B", matrix(s.B));
  line("epsilon", format_double(s.epsilon));
  line("omega", format_double(s.omega));
  line("frequency_slope", format_double(s.frequency_slope));
  return out.str();
}

std::uint64_t scenario_checksum(const ScenarioSettings& settings) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_settings(settings)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ctrlid
