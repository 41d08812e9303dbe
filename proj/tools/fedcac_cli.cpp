// Command-line front end: single runs, hyperparameter sweeps and the
// diagnostic probes, all driven by a key=value config file plus overrides.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fedcac/config.hpp"
#include "fedcac/errors.hpp"
#include "fedcac/io.hpp"
#include "fedcac/orchestrator.hpp"

namespace fs = std::filesystem;
using namespace fedcac;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
  std::optional<std::int64_t> seed;
  std::optional<int> workers;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Configuration file")->required();
  cmd->add_option("--set", args.sets, "Override a config key, key=value; repeatable");
  cmd->add_option("--out", args.out, "Output directory (overrides the config's `out`)");
  cmd->add_option("--seed", args.seed, "Root seed (overrides the config's `seed`)");
  cmd->add_option("--workers", args.workers, "Client-phase thread cap");
  cmd->add_flag("--force", args.force, "Overwrite existing output files");
}

CliConfig load(const CommonArgs& args) {
  CliConfig config = parse_config_file(args.config_path);
  for (const auto& kv : args.sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!args.out.empty()) config.out_dir = args.out;
  if (args.seed) config.run.seed = static_cast<std::uint64_t>(*args.seed);
  if (args.workers) config.run.workers = *args.workers;
  return config;
}

std::string output_path(const CliConfig& config, const std::string& name, bool force) {
  const fs::path path = fs::path(config.out_dir) / name;
  if (fs::exists(path) && !force) {
    throw IoError(path.string() + " exists; pass --force to overwrite");
  }
  return path.string();
}

void write_summary(const CliConfig& config, double best_accuracy, const std::string& path) {
  nlohmann::json summary;
  summary["best_accuracy"] = best_accuracy;
  summary["config"] = config_echo(config);
  atomic_write_text(path, summary.dump(2) + "\n");
}

int cmd_run(const CommonArgs& args) {
  CliConfig config = load(args);
  const std::string history_path = output_path(config, "history.jsonl", args.force);
  const std::string summary_path = output_path(config, "summary.json", args.force);
  RunResult result = fedcac::run(config.run);
  write_history_jsonl(result.history, history_path);
  write_summary(config, result.best_accuracy, summary_path);
  std::cout << "best_accuracy " << format_double(result.best_accuracy) << "\n";
  return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& param,
              const std::vector<double>& values, std::vector<std::int64_t> seeds) {
  if (param != "tau" && param != "beta" && param != "alpha") {
    throw ConfigError("sweep parameter must be tau, beta or alpha");
  }
  if (values.empty()) throw ConfigError("sweep needs at least one value");

  CliConfig base = load(args);
  if (seeds.empty()) seeds.push_back(static_cast<std::int64_t>(base.run.seed));
  const std::string sweep_path = output_path(base, "sweep.csv", args.force);

  std::ostringstream csv;
  csv << "value,best_accuracy,std\n";
  for (double value : values) {
    std::vector<double> best;
    for (std::int64_t seed : seeds) {
      CliConfig config = base;
      if (param == "tau") config.run.tau = value;
      else if (param == "beta") config.run.beta = value;
      else config.run.partition.alpha = value;
      config.run.seed = static_cast<std::uint64_t>(seed);
      best.push_back(fedcac::run(config.run).best_accuracy);
    }
    double mean = 0.0;
    for (double b : best) mean += b;
    mean /= static_cast<double>(best.size());
    double var = 0.0;
    for (double b : best) var += (b - mean) * (b - mean);
    var /= static_cast<double>(best.size());
    csv << format_double(value) << ',' << format_double(mean) << ','
        << format_double(std::sqrt(var)) << '\n';
    std::cout << param << "=" << format_double(value) << " best_accuracy "
              << format_double(mean) << "\n";
  }
  atomic_write_text(sweep_path, csv.str());
  return 0;
}

int cmd_probe(const CommonArgs& args, const std::string& probe) {
  CliConfig config = load(args);

  if (probe == "angles") {
    const std::string path = output_path(config, "angles.csv", args.force);
    const auto angles = gradient_angle_probe(config.run, config.probe_client_a,
                                             config.probe_client_b);
    std::ostringstream csv;
    csv << "round,angle_degrees\n";
    for (std::size_t i = 0; i < angles.size(); ++i) {
      csv << (i + 1) << ',';
      if (angles[i]) csv << format_double(*angles[i]);
      csv << '\n';
    }
    atomic_write_text(path, csv.str());
    return 0;
  }

  if (probe == "heatmap") {
    const std::string path = output_path(config, "heatmap.csv", args.force);
    std::string layer = config.probe_layer;
    if (layer.empty()) {
      layer = "fc" + std::to_string(config.run.model.layer_widths.size() - 2) + ".weight";
    }
    std::optional<ClientState> final_state;
    fedcac::run(config.run, [&](const RoundObservation& obs) {
      if (obs.round == config.run.rounds) {
        final_state = (*obs.clients)[static_cast<std::size_t>(config.probe_client)];
      }
    });
    export_sensitivity_heatmap(*final_state, layer, path);
    return 0;
  }

  if (probe == "overlap_study") {
    const std::string path = output_path(config, "overlap_study.csv", args.force);
    const auto rows = overlap_similarity_study(config.run);
    std::ostringstream csv;
    csv << "pair_type,mean_overlap\n";
    for (const auto& row : rows) {
      csv << row.pair_type << ',' << format_double(row.mean_overlap) << '\n';
    }
    atomic_write_text(path, csv.str());
    return 0;
  }

  if (probe == "partition_viz") {
    const std::string path = output_path(config, "partition_viz.csv", args.force);
    Dataset dataset = generate_blobs(config.run.data.num_classes, config.run.data.dims,
                                     config.run.data.samples_per_class,
                                     config.run.data.separation,
                                     derive_seed(config.run.seed, SeedPurpose::Data));
    PartitionSpec part = config.run.partition;
    part.num_clients = config.run.num_clients;
    part.seed = derive_seed(config.run.seed, SeedPurpose::Partition);
    export_partition_viz(make_partition(dataset, part), path);
    return 0;
  }

  throw ConfigError("unknown probe '" + probe + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized federated learning simulator (FedCAC and baselines)"};
  app.require_subcommand(1);

  CommonArgs run_args;
  CLI::App* run_cmd = app.add_subcommand("run", "Execute one experiment");
  add_common(run_cmd, run_args);

  CommonArgs sweep_args;
  std::string sweep_param;
  std::vector<double> sweep_values;
  std::vector<std::int64_t> sweep_seeds;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Run once per parameter value");
  add_common(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--param", sweep_param, "Parameter to sweep: tau, beta or alpha")
      ->required();
  sweep_cmd->add_option("--values", sweep_values, "Values to sweep over")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep_seeds, "Seeds to average over")->delimiter(',');

  CommonArgs probe_args;
  std::string probe_name;
  CLI::App* probe_cmd = app.add_subcommand("probe", "Write a diagnostic CSV artifact");
  add_common(probe_cmd, probe_args);
  probe_cmd->add_option("--probe", probe_name,
                        "angles, heatmap, overlap_study or partition_viz")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(run_args);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_args, sweep_param, sweep_values, sweep_seeds);
    return cmd_probe(probe_args, probe_name);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
