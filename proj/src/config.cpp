#include "fedcac/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fedcac/errors.hpp"

namespace fedcac {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + value + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  if (trim(value).empty()) return out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(static_cast<int>(parse_int(key, trim(item))));
  }
  return out;
}

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::FedCac: return "fedcac";
    case Algorithm::FedAvg: return "fedavg";
    case Algorithm::Separate: return "separate";
    case Algorithm::FedPer: return "fedper";
  }
  return "?";
}

std::string selector_name(Selector s) {
  switch (s) {
    case Selector::Sensitivity: return "sensitivity";
    case Selector::Random: return "random";
    case Selector::SensitivityReverse: return "sensitivity_reverse";
  }
  return "?";
}

std::string collaboration_name(const RunConfig& run) {
  switch (run.collaboration) {
    case CollaborationMode::TimeVarying: return "time_varying";
    case CollaborationMode::None: return "none";
    case CollaborationMode::FixedNumber: return "fixed:" + std::to_string(run.fixed_k);
  }
  return "?";
}

// one entry per config key: how to set it from text and how to echo it
struct KeyHandler {
  std::function<void(CliConfig&, const std::string&, const std::string&)> set;
  std::function<nlohmann::json(const CliConfig&)> get;
};

const std::map<std::string, KeyHandler>& key_table() {
  static const std::map<std::string, KeyHandler> table = {
      {"algorithm",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          if (v == "fedcac") c.run.algorithm = Algorithm::FedCac;
          else if (v == "fedavg") c.run.algorithm = Algorithm::FedAvg;
          else if (v == "separate") c.run.algorithm = Algorithm::Separate;
          else if (v == "fedper") c.run.algorithm = Algorithm::FedPer;
          else throw ConfigError("key '" + k + "': unknown algorithm '" + v + "'");
        },
        [](const CliConfig& c) { return nlohmann::json(algorithm_name(c.run.algorithm)); }}},
      {"selector",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          if (v == "sensitivity") c.run.selector = Selector::Sensitivity;
          else if (v == "random") c.run.selector = Selector::Random;
          else if (v == "sensitivity_reverse") c.run.selector = Selector::SensitivityReverse;
          else throw ConfigError("key '" + k + "': unknown selector '" + v + "'");
        },
        [](const CliConfig& c) { return nlohmann::json(selector_name(c.run.selector)); }}},
      {"collaboration",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          if (v == "time_varying") {
            c.run.collaboration = CollaborationMode::TimeVarying;
          } else if (v == "none") {
            c.run.collaboration = CollaborationMode::None;
          } else if (v.rfind("fixed:", 0) == 0) {
            c.run.collaboration = CollaborationMode::FixedNumber;
            c.run.fixed_k = static_cast<int>(parse_int(k, v.substr(6)));
          } else {
            throw ConfigError("key '" + k + "': expected time_varying, none or fixed:<k>");
          }
        },
        [](const CliConfig& c) { return nlohmann::json(collaboration_name(c.run)); }}},
      {"noncritical_mode",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          if (v == "all") c.run.noncritical_mode = NoncriticalMode::All;
          else if (v == "as_critical") c.run.noncritical_mode = NoncriticalMode::AsCritical;
          else throw ConfigError("key '" + k + "': expected all or as_critical");
        },
        [](const CliConfig& c) {
          return nlohmann::json(c.run.noncritical_mode == NoncriticalMode::All ? "all"
                                                                               : "as_critical");
        }}},
      {"clients",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.num_clients = static_cast<int>(parse_int(k, v));
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.num_clients); }}},
      {"rounds",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.rounds = static_cast<int>(parse_int(k, v));
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.rounds); }}},
      {"epochs",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.epochs = static_cast<int>(parse_int(k, v));
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.epochs); }}},
      {"tau",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.tau = parse_real(k, v);
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.tau); }}},
      {"beta",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.beta = parse_real(k, v);
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.beta); }}},
      {"lr",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.lr = parse_real(k, v);
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.lr); }}},
      {"batch_size",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.batch_size = static_cast<int>(parse_int(k, v));
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.batch_size); }}},
      {"seed",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.seed = static_cast<std::uint64_t>(parse_int(k, v));
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.seed); }}},
      {"workers",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.workers = static_cast<int>(parse_int(k, v));
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.workers); }}},
      {"out",
       {[](CliConfig& c, const std::string&, const std::string& v) { c.out_dir = v; },
        [](const CliConfig& c) { return nlohmann::json(c.out_dir); }}},
      {"data.classes",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.data.num_classes = static_cast<int>(parse_int(k, v));
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.data.num_classes); }}},
      {"data.dims",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.data.dims = static_cast<int>(parse_int(k, v));
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.data.dims); }}},
      {"data.samples_per_class",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.data.samples_per_class = static_cast<int>(parse_int(k, v));
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.data.samples_per_class); }}},
      {"data.separation",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.data.separation = parse_real(k, v);
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.data.separation); }}},
      {"partition.mode",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          if (v == "pathological") c.run.partition.mode = PartitionMode::Pathological;
          else if (v == "dirichlet") c.run.partition.mode = PartitionMode::Dirichlet;
          else throw ConfigError("key '" + k + "': expected pathological or dirichlet");
        },
        [](const CliConfig& c) {
          return nlohmann::json(c.run.partition.mode == PartitionMode::Pathological
                                    ? "pathological"
                                    : "dirichlet");
        }}},
      {"partition.classes_per_client",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.partition.classes_per_client = static_cast<int>(parse_int(k, v));
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.partition.classes_per_client); }}},
      {"partition.alpha",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.partition.alpha = parse_real(k, v);
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.partition.alpha); }}},
      {"partition.train_per_client",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.partition.train_per_client = static_cast<int>(parse_int(k, v));
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.partition.train_per_client); }}},
      {"partition.test_per_client",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.partition.test_per_client = static_cast<int>(parse_int(k, v));
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.partition.test_per_client); }}},
      {"model.hidden",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.hidden_widths = parse_int_list(k, v);
        },
        [](const CliConfig& c) { return nlohmann::json(c.hidden_widths); }}},
      {"model.activation",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          if (v == "relu") c.run.model.activation = Activation::Relu;
          else if (v == "tanh") c.run.model.activation = Activation::Tanh;
          else throw ConfigError("key '" + k + "': expected relu or tanh");
        },
        [](const CliConfig& c) {
          return nlohmann::json(c.run.model.activation == Activation::Relu ? "relu" : "tanh");
        }}},
      {"model.use_norm_layer",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.run.model.use_norm_layer = parse_bool(k, v);
        },
        [](const CliConfig& c) { return nlohmann::json(c.run.model.use_norm_layer); }}},
      {"probe.client_a",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.probe_client_a = static_cast<int>(parse_int(k, v));
        },
        [](const CliConfig& c) { return nlohmann::json(c.probe_client_a); }}},
      {"probe.client_b",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.probe_client_b = static_cast<int>(parse_int(k, v));
        },
        [](const CliConfig& c) { return nlohmann::json(c.probe_client_b); }}},
      {"probe.client",
       {[](CliConfig& c, const std::string& k, const std::string& v) {
          c.probe_client = static_cast<int>(parse_int(k, v));
        },
        [](const CliConfig& c) { return nlohmann::json(c.probe_client); }}},
      {"probe.layer",
       {[](CliConfig& c, const std::string&, const std::string& v) { c.probe_layer = v; },
        [](const CliConfig& c) { return nlohmann::json(c.probe_layer); }}},
  };
  return table;
}

}  // namespace

void CliConfig::finalize() {
  run.model.layer_widths.clear();
  run.model.layer_widths.push_back(run.data.dims);
  for (int w : hidden_widths) run.model.layer_widths.push_back(w);
  run.model.layer_widths.push_back(run.data.num_classes);
}

CliConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  CliConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    apply_override(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  config.finalize();
  return config;
}

void apply_override(CliConfig& config, const std::string& key, const std::string& value) {
  const auto& table = key_table();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(config, key, value);
  config.finalize();
}

nlohmann::json config_echo(const CliConfig& config) {
  nlohmann::json out;
  for (const auto& [key, handler] : key_table()) {
    out[key] = handler.get(config);
  }
  return out;
}

std::string format_double(double v) { return nlohmann::json(v).dump(); }

}  // namespace fedcac
