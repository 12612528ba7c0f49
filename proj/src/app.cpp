#include "ctrlid/app.hpp"

#include "ctrlid/recovery.hpp"
#include "ctrlid/seed.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>

namespace ctrlid::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

json to_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(number(v[i]));
  return out;
}

json to_json(const Matrix& M) {
  json out = json::array();
  for (Index i = 0; i < M.rows(); ++i) out.push_back(to_json(Vector(M.row(i).transpose())));
  return out;
}

json to_json(const LeastSquaresSolution& s, Index rows, Index cols) {
  return json{{"rows", rows},
              {"cols", cols},
              {"rank", s.rank},
              {"condition_number", number(s.condition_number)},
              {"residual_norm", number(s.residual_norm)}};
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

std::string entry_id(Index j, Index s) {
  return "g" + std::to_string(j + 1) + std::to_string(s + 1);
}

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << v;
  return out.str();
}

// RFC 4180 with LF line endings; numbers use the shortest round-trip form.
class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) { row(header); }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      const auto& f = fields[i];
      if (f.find_first_of(",\"\n") != std::string::npos) {
        out_ << '"';
        for (char c : f) {
          if (c == '"') out_ << '"';
          out_ << c;
        }
        out_ << '"';
      } else {
        out_ << f;
      }
    }
    out_ << '\n';
  }

  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

std::string csv_number(double v) { return std::isfinite(v) ? format_double(v) : ""; }

json control_diagnostics(const ControlFieldRun& run) {
  json rows = json::array();
  const auto& diag = run.field.diagnostics();
  for (std::size_t j = 0; j < diag.size(); ++j) {
    json d = to_json(diag[j], static_cast<Index>(run.samples.size()),
                     diag[j].coefficients.size());
    d["output"] = j + 1;
    rows.push_back(std::move(d));
  }
  return rows;
}

json field_coefficients(const RecoveredControlField& field) {
  json entries = json::array();
  for (Index j = 0; j < field.state_dim(); ++j) {
    for (Index s = 0; s < field.input_dim(); ++s) {
      const auto labels = feature_labels(field.entry_basis(j, s));
      const Vector c = field.entry_coefficients(j, s);
      json coeffs = json::array();
      for (Index k = 0; k < c.size(); ++k) {
        coeffs.push_back({{"feature", labels[static_cast<std::size_t>(k)]}, {"value", number(c[k])}});
      }
      entries.push_back({{"entry", entry_id(j, s)},
                         {"output", j + 1},
                         {"input", s + 1},
                         {"coefficients", std::move(coeffs)}});
    }
  }
  return entries;
}

json validation_json(const ValidationReport& report, Index m) {
  json entries = json::array();
  for (Index j = 0; j < report.rmse.rows(); ++j) {
    for (Index s = 0; s < m; ++s) {
      entries.push_back({{"entry", entry_id(j, s)},
                         {"rmse", number(report.rmse(j, s))},
                         {"max_abs", number(report.max_abs(j, s))}});
    }
  }
  json conds = json::array();
  for (double c : report.condition_numbers) conds.push_back(number(c));
  return json{{"schema_version", kSchemaVersion},
              {"sample_count", report.sample_count()},
              {"out_of_domain", report.out_of_domain},
              {"entries", std::move(entries)},
              {"condition_numbers", std::move(conds)}};
}

std::string field_samples_csv(const ValidationReport& report, Index n, Index m) {
  std::vector<std::string> header;
  for (Index d = 0; d < n; ++d) header.push_back("x" + std::to_string(d + 1));
  header.insert(header.end(), {"entry_id", "true_value", "recovered_value"});
  CsvWriter csv(header);
  for (Index p = 0; p < report.sample_count(); ++p) {
    const Vector& x = report.sample_points[static_cast<std::size_t>(p)];
    for (Index j = 0; j < n; ++j) {
      for (Index s = 0; s < m; ++s) {
        std::vector<std::string> row;
        for (Index d = 0; d < n; ++d) row.push_back(csv_number(x[d]));
        row.push_back(entry_id(j, s));
        row.push_back(csv_number(report.true_values(p, j * m + s)));
        row.push_back(csv_number(report.recovered_values(p, j * m + s)));
        csv.row(row);
      }
    }
  }
  return csv.str();
}

std::string trajectories_csv(const Scenario& scenario, const ExperimentPlan& plan) {
  const AffineSystem& sys = scenario.system;
  const Index n = sys.state_dim();
  const Index m = sys.input_dim();
  std::vector<std::string> header{"t"};
  for (Index d = 0; d < n; ++d) header.push_back("x" + std::to_string(d + 1));
  for (Index s = 0; s < m; ++s) header.push_back("u" + std::to_string(s + 1));
  header.push_back("experiment_id");
  CsvWriter csv(header);
  const AffineSystem noisy = sys.with_noise(plan.noise_amplitude);
  for (std::size_t j = 0; j < plan.anchors.size(); ++j) {
    const auto& inputs = plan.input_sets[j];
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto traj = integrate(
          noisy, plan.anchors[j], ControlSignal::constant(inputs[i], plan.sampling_time, plan.t0),
          plan.t0, plan.t0 + plan.sampling_time, plan.integrator_step,
          experiment_seed(plan.seed, int(j), int(i)));
      const std::string id = std::to_string(j) + ":" + std::to_string(i);
      for (Index k = 0; k < traj.size(); ++k) {
        std::vector<std::string> row{csv_number(traj.times[static_cast<std::size_t>(k)])};
        for (Index d = 0; d < n; ++d) row.push_back(csv_number(traj.states(k, d)));
        for (Index s = 0; s < m; ++s) row.push_back(csv_number(traj.inputs(k, s)));
        row.push_back(id);
        csv.row(row);
      }
    }
  }
  return csv.str();
}

json overrides_from_json(const json& node, Overrides& out) {
  if (!node.is_object()) throw ConfigError("config 'overrides' must be an object");
  for (const auto& [key, value] : node.items()) {
    std::string text;
    if (value.is_boolean()) {
      text = value.get<bool>() ? "true" : "false";
    } else if (value.is_number_integer()) {
      text = value.dump();
    } else if (value.is_number_float()) {
      text = format_double(value.get<double>());
    } else if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_array()) {
      for (const auto& item : value) {
        if (!item.is_number_integer()) throw ConfigError("config list '" + key + "' must hold integers");
        text += (text.empty() ? "" : ",") + item.dump();
      }
    } else {
      throw ConfigError("config value for '" + key + "' has an unsupported type");
    }
    out.emplace(key, text);
  }
  return node;
}

}  // namespace

Scenario resolve_config(const RunConfig& config) {
  std::optional<std::string> name = config.scenario;
  Overrides merged;
  if (config.config_path) {
    std::ifstream in(*config.config_path);
    if (!in) throw ConfigError("cannot read config file " + config.config_path->string());
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + config.config_path->string() + " is not valid JSON: " +
                        e.what());
    }
    if (doc.contains("scenario")) {
      if (!doc["scenario"].is_string()) throw ConfigError("config 'scenario' must be a string");
      const auto from_file = doc["scenario"].get<std::string>();
      if (name && *name != from_file) {
        throw ConfigError("--scenario " + *name + " contradicts config scenario " + from_file);
      }
      name = from_file;
    }
    if (doc.contains("overrides")) overrides_from_json(doc["overrides"], merged);
  }
  if (!name) throw ConfigError("no scenario given (use --scenario or --config)");
  for (const auto& [k, v] : config.overrides) merged[k] = v;
  try {
    return load_scenario(*name, merged);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

json effective_config(const Scenario& scenario) {
  const ScenarioSettings& s = scenario.settings;
  json overrides{
      {"seed", s.seed},
      {"ts", s.sampling_time},
      {"dt", s.integrator_step},
      {"basis", std::string(to_string(s.basis))},
      {"order", s.order},
      {"drift_basis", std::string(to_string(s.drift_basis))},
      {"drift_order", s.drift_order},
      {"num_anchors", s.num_anchors},
      {"num_perturbations", s.num_perturbations},
      {"sampler", std::string(to_string(s.sampler))},
      {"noise", s.noise},
      {"trials", s.trials},
      {"input_bound", s.input_bound},
      {"oracle_derivatives", s.oracle_derivatives},
      {"validation_points", s.validation_points},
      {"free_run_samples", s.free_run_samples},
      {"drift_records", s.drift_records},
      {"epsilon", s.epsilon},
      {"omega", s.omega},
      {"frequency_slope", s.frequency_slope},
  };
  if (!s.study_perturbations.empty()) overrides["study_n"] = s.study_perturbations;
  return json{{"schema_version", kSchemaVersion},
              {"scenario", s.name},
              {"checksum", hex(scenario_checksum(s))},
              {"overrides", std::move(overrides)}};
}

void run_scenario(const Scenario& scenario, const ArtifactSink& sink) {
  const ScenarioSettings& s = scenario.settings;
  const AffineSystem& system = scenario.system;
  const Index n = system.state_dim();
  const Index m = system.input_dim();
  sink({"effective_config.json", dump(effective_config(scenario))});

  const ExperimentPlan plan = scenario.build();
  json diagnostics{{"schema_version", kSchemaVersion},
                   {"scenario", s.name},
                   {"checksum", hex(scenario_checksum(s))},
                   {"derivative_mode", s.oracle_derivatives ? "exact" : "forward_difference"},
                   {"anchors", plan.anchors.size()},
                   {"experiments", plan.experiment_count()}};

  if (scenario.is_noise_study()) {
    const auto study = noise_convergence_study(system, plan, scenario.basis,
                                               s.study_perturbations, s.trials, s.seed,
                                               StudyOptions{s.input_bound, 0});
    CsvWriter csv({"N", "median_error", "q25", "q75", "trials"});
    json rows = json::array();
    for (std::size_t i = 0; i < study.rows.size(); ++i) {
      const auto& r = study.rows[i];
      csv.row({std::to_string(r.perturbations), csv_number(r.median_error), csv_number(r.q25),
               csv_number(r.q75), std::to_string(r.trials)});
      rows.push_back({{"N", r.perturbations},
                      {"median_error", number(r.median_error)},
                      {"q25", number(r.q25)},
                      {"q75", number(r.q75)},
                      {"mean_error", number(r.mean_error)},
                      {"trials", r.trials},
                      {"errors", to_json(Vector(study.errors.row(Index(i)).transpose()))}});
    }
    sink({"convergence.csv", csv.str()});
    sink({"convergence.json", dump(json{{"schema_version", kSchemaVersion},
                                        {"noise_amplitude", s.noise},
                                        {"input_bound", s.input_bound},
                                        {"rows", std::move(rows)}})});
    diagnostics["study"] = {{"N_values", s.study_perturbations}, {"trials", s.trials}};
    sink({"diagnostics.json", dump(diagnostics)});
    return;
  }

  const ControlFieldRun run = run_control_recovery(system, plan, scenario.basis);
  diagnostics["differences"] = run.samples.size();
  diagnostics["control"] = control_diagnostics(run);

  if (s.name == "linear_2x2") {
    const ConstantGainFit fit = fit_constant_b(run.samples);
    Matrix delta_u(Index(run.samples.size()), m);
    Matrix delta_xdot(n, Index(run.samples.size()));
    for (std::size_t i = 0; i < run.samples.size(); ++i) {
      delta_u.row(Index(i)) = run.samples[i].delta_u.transpose();
      delta_xdot.col(Index(i)) = run.samples[i].delta_xdot;
    }
    json doc{{"schema_version", kSchemaVersion},
             {"sampling_time", s.sampling_time},
             {"B_hat", to_json(fit.gain)},
             {"B_true", to_json(s.B)},
             {"abs_error", to_json(Matrix((fit.gain - s.B).cwiseAbs()))},
             {"delta_u", to_json(delta_u)},
             {"delta_xdot", to_json(delta_xdot)}};
    if (scenario.reference.recovered_gain) doc["B_reference"] = to_json(*scenario.reference.recovered_gain);
    sink({"recovered_B.json", dump(doc)});
    sink({"trajectories.csv", trajectories_csv(scenario, plan)});

    const auto drift = recover_drift_field(system, plan, run.field, scenario.drift_basis,
                                           DriftPhaseOptions{s.free_run_samples, s.drift_records},
                                           run.records);
    json drift_doc{{"schema_version", kSchemaVersion},
                   {"basis", std::string(to_string(scenario.drift_basis.family))},
                   {"order", scenario.drift_basis.order},
                   {"features", feature_labels(scenario.drift_basis)},
                   {"coefficients", to_json(drift.coefficients())},
                   {"A_true", to_json(s.A)}};
    if (scenario.drift_basis.family == BasisFamily::monomial && scenario.drift_basis.order == 1) {
      const Matrix A_hat = drift.coefficients().rightCols(n);
      drift_doc["A_hat"] = to_json(A_hat);
      drift_doc["abs_error"] = to_json(Matrix((A_hat - s.A).cwiseAbs()));
    }
    sink({"recovered_A.json", dump(drift_doc)});
    json drift_diag = json::array();
    for (std::size_t j = 0; j < drift.diagnostics().size(); ++j) {
      const auto& d = drift.diagnostics()[j];
      json e = to_json(d, -1, d.coefficients.size());
      e.erase("rows");
      e["output"] = j + 1;
      drift_diag.push_back(std::move(e));
    }
    diagnostics["drift"] = std::move(drift_diag);
  } else {
    json doc{{"schema_version", kSchemaVersion},
             {"basis", std::string(to_string(scenario.basis.family))},
             {"order", scenario.basis.order},
             {"entries", field_coefficients(run.field)}};
    ValidationReport report;
    if (s.name == "bloch") {
      report = validate_field(run.field, system, s.validation_points,
                              derive_seed(s.seed, {0x76616cULL}));
      sink({"recovered_g.json", dump(doc)});
    } else {
      std::vector<Vector> grid;
      const int points = std::max(1, s.validation_points);
      for (int i = 0; i < points; ++i) {
        grid.push_back(Vector::Constant(1, 2.0 * std::numbers::pi * i / points));
      }
      report = validate_field(run.field, system, grid);
      json anchors = json::array();
      for (const auto& sample : run.samples) {
        if (sample.delta_u[0] == 0.0) continue;
        anchors.push_back({{"theta", sample.anchor_state[0]},
                           {"pointwise_estimate", sample.delta_xdot[0] / sample.delta_u[0]}});
      }
      doc["samples"] = std::move(anchors);
      sink({"recovered_prc.json", dump(doc)});
    }
    sink({"validation_report.json", dump(validation_json(report, m))});
    sink({"field_samples.csv", field_samples_csv(report, n, m)});
  }
  sink({"diagnostics.json", dump(diagnostics)});
}

std::vector<Artifact> run_scenario(const Scenario& scenario) {
  std::vector<Artifact> out;
  run_scenario(scenario, [&out](const Artifact& a) { out.push_back(a); });
  return out;
}

fs::path write_atomic(const fs::path& dir, const Artifact& artifact) {
  const fs::path target = dir / artifact.filename;
  const fs::path tmp = dir / (artifact.filename + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(artifact.content.data(), std::streamsize(artifact.content.size()));
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot move " + tmp.string() + " to " + target.string() + ": " + ec.message());
  }
  return target;
}

std::vector<fs::path> emit_reports(const std::vector<Artifact>& artifacts, const fs::path& dir) {
  std::vector<fs::path> written;
  for (const auto& a : artifacts) written.push_back(write_atomic(dir, a));
  return written;
}

int main(int argc, char** argv) {
  CLI::App cli{"Recover the control vector field of an input-affine system from "
               "repeated perturbation experiments."};
  cli.require_subcommand(1);
  auto* run = cli.add_subcommand("run", "Run a built-in scenario or a saved config");

  RunConfig config;
  std::string scenario;
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> sets;
  bool oracle = false;
  Overrides flag_values;

  auto* scenario_opt =
      run->add_option("--scenario", scenario, "Scenario: linear_2x2, bloch, prc, prc_noise");
  auto* config_opt =
      run->add_option("--config", config_path, "Config JSON (e.g. a previous effective_config.json)");
  run->add_option("--out", out_dir, "Output directory")->required();

  struct Flag {
    const char* name;
    const char* key;
    const char* help;
  };
  const Flag flags[] = {
      {"--seed", "seed", "Root seed for anchors, inputs and noise"},
      {"--ts", "ts", "Sampling time t_s in seconds"},
      {"--dt", "dt", "Integrator step in seconds"},
      {"--basis", "basis", "Basis family: fourier, legendre, monomial"},
      {"--order", "order", "Basis truncation order L"},
      {"--num-anchors", "num_anchors", "Number of anchor states (M+1)"},
      {"--num-perturbations", "num_perturbations", "Perturbation experiments per anchor (N)"},
      {"--noise", "noise", "Noise amplitude (eta uniform on [-noise, noise])"},
      {"--trials", "trials", "Trials per N in the noise study"},
  };
  std::vector<std::string> flag_text(std::size(flags));
  for (std::size_t i = 0; i < std::size(flags); ++i) {
    run->add_option(flags[i].name, flag_text[i], flags[i].help);
  }
  run->add_flag("--oracle-derivatives", oracle,
                "Use exact derivatives at t0 instead of forward differences (test mode)");
  run->add_option("--set", sets, "Extra override key=value (repeatable)");
  scenario_opt->excludes(config_opt);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return 2;
  }

  if (!scenario.empty()) config.scenario = scenario;
  if (!config_path.empty()) config.config_path = config_path;
  config.out_dir = out_dir;
  for (std::size_t i = 0; i < std::size(flags); ++i) {
    if (run->count(flags[i].name) > 0) config.overrides[flags[i].key] = flag_text[i];
  }
  if (oracle) config.overrides["oracle_derivatives"] = "true";
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "config error: --set expects key=value, got '" << kv << "'\n";
      return 2;
    }
    config.overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
  }

  std::optional<Scenario> resolved;
  try {
    resolved.emplace(resolve_config(config));
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec || !fs::is_directory(config.out_dir)) {
    std::cerr << "config error: cannot create output directory " << config.out_dir << '\n';
    return 2;
  }

  std::vector<fs::path> written;
  try {
    run_scenario(*resolved, [&](const Artifact& a) { written.push_back(write_atomic(config.out_dir, a)); });
  } catch (const std::exception& e) {
    json report{{"schema_version", kSchemaVersion}, {"stage", "run"}, {"message", e.what()},
                {"anchor_index", nullptr}, {"input_index", nullptr}};
    if (const auto* stage = dynamic_cast<const StageError*>(&e)) {
      report["stage"] = stage->stage();
      if (stage->anchor_index()) report["anchor_index"] = *stage->anchor_index();
      if (stage->input_index()) report["input_index"] = *stage->input_index();
    }
    try {
      write_atomic(config.out_dir, {"error_report.json", dump(report)});
    } catch (const std::exception& io) {
      std::cerr << "could not write error report: " << io.what() << '\n';
    }
    std::cerr << "run failed: " << e.what() << '\n';
    return 1;
  }
  for (const auto& p : written) std::cout << p.string() << '\n';
  return 0;
}

}  // namespace ctrlid::app
