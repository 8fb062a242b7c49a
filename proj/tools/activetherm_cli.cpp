// activetherm: run active thermal-perception experiments.
//
// Exit codes: 0 success, 2 invalid configuration or arguments, 3 numerical
// failure during a run, 4 file I/O error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "activetherm/errors.hpp"
#include "activetherm/experiment.hpp"

namespace at = activetherm;
namespace ex = activetherm::experiment;

namespace {

enum Exit { kOk = 0, kInvalid = 2, kNumerical = 3, kIo = 4 };

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

ex::ExperimentConfig load_config(const Common& c) {
  ex::ExperimentConfig cfg = c.config_path.empty() ? ex::ExperimentConfig{} : ex::ExperimentConfig::load(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;
  cfg.validate();
  return cfg;
}

int cmd_run(const Common& c, bool trace_states) {
  const ex::ExperimentConfig cfg = load_config(c);
  const at::perception::Scenario scenario = ex::build_scenario(cfg);
  const ex::RunResult result = ex::run(cfg, scenario, trace_states);
  const std::filesystem::path dir = cfg.output_dir;
  ex::write_run_outputs(cfg, result, dir);
  if (cfg.groundtruth.save_table && cfg.groundtruth.table_path.empty()) {
    std::filesystem::path tmp = dir / "groundtruth.bin";
    tmp += ".tmp";
    at::groundtruth::save_table(scenario.truth, tmp);
    std::filesystem::rename(tmp, dir / "groundtruth.bin");
  }
  const auto& recs = result.trace.records;
  std::printf("%zu cycles, %zu prediction steps, %.2f s\n", recs.size(), result.trace.predict_steps,
              result.wall_seconds);
  if (!recs.empty()) {
    const auto& r = recs.back();
    std::printf("final: max_err_ext %.4g avg_err_ext %.4g max_err_int %.4g avg_err_int %.4g avg_cov %.4g\n",
                r.max_err_ext, r.avg_err_ext, r.max_err_int, r.avg_err_int, r.avg_cov);
  }
  std::printf("outputs in %s\n", dir.string().c_str());
  return kOk;
}

int cmd_gen_schedule(const Common& c) {
  const ex::ExperimentConfig cfg = load_config(c);
  const ex::PartModel part = ex::build_part(cfg);
  const std::string doc = part.schedule.to_json().dump(2) + "\n";
  if (c.out_dir.empty()) {
    std::cout << doc;
    return kOk;
  }
  const std::filesystem::path dir = c.out_dir;
  std::filesystem::create_directories(dir);
  ex::write_file_atomic(dir / "schedule.json", doc);
  std::filesystem::path tmp = dir / "control_points.csv";
  tmp += ".tmp";
  part.points.write_csv(tmp);
  std::filesystem::rename(tmp, dir / "control_points.csv");
  std::printf("%zu layers, %zu control points written to %s\n", part.schedule.layers.size(), part.points.size(),
              dir.string().c_str());
  return kOk;
}

int cmd_compare(const Common& c) {
  const ex::ExperimentConfig cfg = load_config(c);
  const ex::CompareReport report = ex::compare_policies(cfg);
  ex::write_compare_outputs(cfg, report, cfg.output_dir);
  const nlohmann::json doc = report.to_json();
  for (const auto& p : doc["policies"])
    std::printf("%-16s mean final avg_cov %.4g (std %.3g)\n", p["policy"].get<std::string>().c_str(),
                p["mean_final_avg_cov"].get<double>(), p["std_final_avg_cov"].get<double>());
  for (const auto& p : doc["paired"])
    std::printf("%s < %s in %.0f%% of %zu seeds\n", p["policy"].get<std::string>().c_str(),
                p["versus"].get<std::string>().c_str(), 100.0 * p["win_fraction"].get<double>(), report.rows.size());
  return kOk;
}

int cmd_inspect(const std::string& path, std::optional<at::Step> step, const std::string& csv) {
  const at::groundtruth::GroundTruthField field = at::groundtruth::load_table(path);
  const auto& steps = field.stored_steps();
  std::printf("points %zu\nstored steps %zu", field.point_count(), steps.size());
  if (!steps.empty())
    std::printf(" (%lld .. %lld)", static_cast<long long>(steps.front()), static_cast<long long>(steps.back()));
  std::printf("\nlayers %zu, active window %zu%s\n", field.deposition().layers.size(),
              field.deposition().active_window, field.respect_active_window() ? " (respected)" : "");
  std::printf("dt %g s, substeps %d, ambient %g\n", field.dt(), field.substeps(), field.ambient_temp());
  if (step) {
    const Eigen::Index r = field.row(*step);
    std::size_t active = 0;
    double lo = 0.0, hi = 0.0;
    for (Eigen::Index i = 0; i < field.temps().cols(); ++i) {
      const double t = field.temps()(r, i);
      if (std::isnan(t)) continue;
      lo = active ? std::min(lo, t) : t;
      hi = active ? std::max(hi, t) : t;
      ++active;
    }
    std::printf("step %lld: %zu active points, temperature %g .. %g\n", static_cast<long long>(*step), active, lo, hi);
    if (!csv.empty()) at::groundtruth::write_step_csv(field, *step, csv);
  } else if (!csv.empty()) {
    throw at::InvalidArgument("--csv needs --step");
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active perception of a temperature field during layer-by-layer deposition"};
  app.require_subcommand(1);

  Common common;
  bool trace_states = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "experiment configuration (JSON); defaults when omitted");
    sub->add_option("--seed", common.seed, "override the configured seed");
    sub->add_option("--out", common.out_dir, "output directory");
  };

  CLI::App* run = app.add_subcommand("run", "run one experiment and write its trace, summary and plot data");
  add_common(run);
  run->add_flag("--trace-states", trace_states, "also write the filter state after every cycle");

  CLI::App* gen = app.add_subcommand("gen-schedule", "emit the layer schedule of the configured part");
  add_common(gen);

  CLI::App* cmp = app.add_subcommand("compare-policies", "run every configured policy over several seeds");
  add_common(cmp);

  std::string table_path, csv_path;
  std::optional<at::Step> inspect_step;
  CLI::App* inspect = app.add_subcommand("inspect-table", "describe a ground-truth lookup table");
  inspect->add_option("table", table_path, "lookup table file")->required();
  inspect->add_option("--step", inspect_step, "report one stored step");
  inspect->add_option("--csv", csv_path, "export --step as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*run) return cmd_run(common, trace_states);
    if (*gen) return cmd_gen_schedule(common);
    if (*cmp) return cmd_compare(common);
    if (*inspect) return cmd_inspect(table_path, inspect_step, csv_path);
  } catch (const at::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const at::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const at::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
  return kInvalid;
}
