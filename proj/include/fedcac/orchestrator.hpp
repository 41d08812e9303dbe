#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedcac/client.hpp"
#include "fedcac/dataset.hpp"
#include "fedcac/mask.hpp"
#include "fedcac/mlp.hpp"
#include "fedcac/server.hpp"

namespace fedcac {

enum class Algorithm { FedCac, FedAvg, Separate, FedPer };
enum class CollaborationMode { TimeVarying, None, FixedNumber };
enum class NoncriticalMode { All, AsCritical };

struct BlobSpec {
  int num_classes = 8;
  int dims = 16;
  int samples_per_class = 2000;
  double separation = 3.0;
};

struct RunConfig {
  Algorithm algorithm = Algorithm::FedCac;
  Selector selector = Selector::Sensitivity;
  CollaborationMode collaboration = CollaborationMode::TimeVarying;
  int fixed_k = 1;  // FixedNumber only
  NoncriticalMode noncritical_mode = NoncriticalMode::All;
  int num_clients = 16;
  int rounds = 60;
  int epochs = 5;
  double tau = 0.5;
  double beta = 30.0;
  double lr = 0.1;
  int batch_size = 100;
  BlobSpec data;
  PartitionSpec partition;  // num_clients and seed are filled in by run()
  MlpSpec model;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct RoundMetrics {
  int round = 0;
  double mean_accuracy = 0.0;
  std::vector<double> per_client_accuracy;
  std::optional<double> threshold;
  std::optional<double> mean_collab_size;
};

struct RunResult {
  std::vector<RoundMetrics> history;
  double best_accuracy = 0.0;
  // serialized mask traffic per round, summed over clients (fedcac only)
  std::vector<std::size_t> mask_bytes_per_round;
  // what shipping every client model at 32 bits per element would cost
  std::size_t model_bytes_fp32_per_round = 0;
};

// Snapshot handed to the observer after training/aggregation and before the
// next round's models are installed.
struct RoundObservation {
  int round = 0;
  const std::vector<ClientState>* clients = nullptr;  // post-training states
  const std::vector<ParameterSet>* round_start_models = nullptr;
  const std::vector<double>* accuracies = nullptr;
  const RoundPlan* plan = nullptr;           // fedcac rounds only
  const ParameterSet* global_model = nullptr;  // fedavg / fedper rounds
};

using RoundObserver = std::function<void(const RoundObservation&)>;

// Test/probe hooks: planted shards and per-client seed overrides replace the
// config-driven partition and the derived client seeds.
struct RunOverrides {
  const std::vector<ClientShard>* shards = nullptr;
  const std::vector<std::uint64_t>* client_seeds = nullptr;
};

RunResult run(const RunConfig& config, const RoundObserver& observer = {},
              const RunOverrides& overrides = {});

// Angle in degrees between two flat vectors; absent when either has zero norm.
std::optional<double> angle_degrees(std::span<const double> a, std::span<const double> b);

// Angle between two clients' round updates (end - start, gradient layers only).
std::optional<double> update_angle_degrees(const ParameterSet& start_a, const ParameterSet& end_a,
                                           const ParameterSet& start_b, const ParameterSet& end_b);

// Per-round angle between the local updates of two clients under the given
// config; entries are absent for rounds where an update has zero norm.
std::vector<std::optional<double>> gradient_angle_probe(const RunConfig& config,
                                                        int client_a, int client_b);

struct OverlapStudyRow {
  std::string pair_type;  // same_distribution | class_overlap | disjoint
  double mean_overlap = 0.0;
};

// Runs config.rounds rounds over twelve planted clients (two duplicated-shard
// pairs, two partially-overlapping-class pairs, two disjoint-class pairs) and
// reports the mean final-round mask overlap per pair type. Needs >= 8 classes.
std::vector<OverlapStudyRow> overlap_similarity_study(const RunConfig& config);

// CSV of one layer's sensitivity, reshaped to the layer's matrix shape
// (row per output unit). Throws ConfigError for an unknown layer name.
void export_sensitivity_heatmap(const ClientState& state, const std::string& layer_name,
                                const std::string& path);

// One JSON object per round, LF-terminated.
void write_history_jsonl(const std::vector<RoundMetrics>& history, const std::string& path);

}  // namespace fedcac
