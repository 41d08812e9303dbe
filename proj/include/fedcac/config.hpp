#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "fedcac/orchestrator.hpp"

namespace fedcac {

// Everything a CLI invocation needs: the run configuration plus the output
// directory and probe parameters. Loaded from a flat `key = value` file with
// dotted sections; unknown keys are rejected.
struct CliConfig {
  RunConfig run;
  std::string out_dir = "out";
  std::vector<int> hidden_widths = {32};  // model.layer_widths is derived
  int probe_client_a = 0;
  int probe_client_b = 1;
  int probe_client = 0;
  std::string probe_layer;  // empty selects the output layer's weight matrix

  // Rebuilds run.model.layer_widths from data dims/classes and hidden_widths.
  void finalize();
};

CliConfig parse_config_file(const std::string& path);

// Applies one `key=value` override; throws ConfigError for unknown keys or
// unparsable values.
void apply_override(CliConfig& config, const std::string& key, const std::string& value);

// Every known key with its resolved value, typed; embedded in summary.json.
nlohmann::json config_echo(const CliConfig& config);

// Shortest round-trip decimal form of a double (what JSON output uses).
std::string format_double(double v);

}  // namespace fedcac
