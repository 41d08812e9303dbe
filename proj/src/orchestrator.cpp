#include "fedcac/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "fedcac/errors.hpp"
#include "fedcac/io.hpp"
#include "fedcac/rng.hpp"

namespace fedcac {

namespace {

void validate_config(const RunConfig& config) {
  if (config.rounds < 1) throw ConfigError("rounds must be >= 1");
  if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (config.num_clients < 1) throw ConfigError("need at least one client");
  if (config.algorithm == Algorithm::FedCac && config.num_clients < 2) {
    throw ConfigError("fedcac needs at least two clients");
  }
  if (config.tau < 0.0 || config.tau > 1.0) throw ConfigError("tau must lie in [0, 1]");
  if (config.beta < 1.0 || config.beta > static_cast<double>(config.rounds)) {
    throw ConfigError("beta must lie in [1, rounds]");
  }
  if (config.lr < 0.0) throw ConfigError("learning rate must be non-negative");
  if (config.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (config.workers < 1) throw ConfigError("workers must be >= 1");
  if (config.algorithm == Algorithm::FedCac &&
      config.collaboration == CollaborationMode::FixedNumber &&
      (config.fixed_k < 1 || config.fixed_k > config.num_clients - 1)) {
    throw ConfigError("fixed collaborator count must lie in [1, N-1]");
  }
  if (config.model.layer_widths.size() < 2) {
    throw ConfigError("model needs at least input and output widths");
  }
}

// Runs fn(0..n-1) on up to `workers` threads; any exception is rethrown on
// the caller's thread. Results must go into per-index slots so the outcome
// does not depend on scheduling.
void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int count = std::min(workers, n);
  pool.reserve(static_cast<std::size_t>(count));
  for (int w = 0; w < count; ++w) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::string final_linear_weight_name(const MlpSpec& spec) {
  return "fc" + std::to_string(spec.layer_widths.size() - 2) + ".weight";
}

// Layer indices of the output classifier (weight and bias).
std::vector<std::size_t> final_linear_indices(const ParameterSet& model, const MlpSpec& spec) {
  const std::string weight_name = final_linear_weight_name(spec);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (model.layers[i].name == weight_name) return {i, i + 1};
  }
  throw InternalError("model has no output linear layer");
}

double checked_accuracy_mean(const std::vector<double>& acc) {
  double sum = 0.0;
  for (double a : acc) sum += a;
  return sum / static_cast<double>(acc.size());
}

}  // namespace

RunResult run(const RunConfig& config, const RoundObserver& observer,
              const RunOverrides& overrides) {
  validate_config(config);
  const MlpSpec& spec = config.model;

  std::vector<ClientShard> shards;
  if (overrides.shards) {
    shards = *overrides.shards;
  } else {
    if (spec.input_width() != config.data.dims) {
      throw ConfigError("model input width must equal the data dimension");
    }
    if (spec.num_classes() != config.data.num_classes) {
      throw ConfigError("model output width must equal the number of classes");
    }
    Dataset dataset = generate_blobs(config.data.num_classes, config.data.dims,
                                     config.data.samples_per_class, config.data.separation,
                                     derive_seed(config.seed, SeedPurpose::Data));
    PartitionSpec part = config.partition;
    part.num_clients = config.num_clients;
    part.seed = derive_seed(config.seed, SeedPurpose::Partition);
    shards = make_partition(dataset, part);
  }
  const int n_clients = static_cast<int>(shards.size());
  if (overrides.client_seeds &&
      overrides.client_seeds->size() != static_cast<std::size_t>(n_clients)) {
    throw ConfigError("client seed override count does not match the client count");
  }

  std::vector<ClientState> clients(static_cast<std::size_t>(n_clients));
  for (int i = 0; i < n_clients; ++i) {
    auto& state = clients[static_cast<std::size_t>(i)];
    state.client_id = i;
    state.shard = std::move(shards[static_cast<std::size_t>(i)]);
    state.rng_seed = overrides.client_seeds
                         ? (*overrides.client_seeds)[static_cast<std::size_t>(i)]
                         : derive_seed(config.seed, SeedPurpose::Client,
                                       static_cast<std::uint64_t>(i));
    Rng init_rng(derive_seed(state.rng_seed, SeedPurpose::ModelInit));
    state.model = build_mlp(spec, init_rng);
  }

  RunResult result;
  result.model_bytes_fp32_per_round =
      static_cast<std::size_t>(n_clients) * 4 * clients[0].model.total_count();

  const bool is_fedcac = config.algorithm == Algorithm::FedCac;

  for (int t = 1; t <= config.rounds; ++t) {
    std::vector<ParameterSet> round_start(static_cast<std::size_t>(n_clients));
    for (int i = 0; i < n_clients; ++i) {
      round_start[static_cast<std::size_t>(i)] = clients[static_cast<std::size_t>(i)].model;
    }

    std::vector<double> accuracy(static_cast<std::size_t>(n_clients), 0.0);
    LocalTrainOptions opts;
    opts.epochs = config.epochs;
    opts.lr = config.lr;
    opts.batch_size = config.batch_size;
    opts.tau = config.tau;
    opts.selector = config.selector;
    opts.round = t;
    opts.compute_mask = is_fedcac;

    parallel_for(n_clients, config.workers, [&](int i) {
      auto& state = clients[static_cast<std::size_t>(i)];
      local_train(state, spec, opts);
      accuracy[static_cast<std::size_t>(i)] = evaluate(state, spec);
    });

    RoundMetrics metrics;
    metrics.round = t;
    metrics.per_client_accuracy = accuracy;
    metrics.mean_accuracy = checked_accuracy_mean(accuracy);

    RoundPlan plan;
    bool has_plan = false;
    ParameterSet global_model;
    bool has_global = false;
    std::vector<ParameterSet> next_models;

    if (is_fedcac) {
      std::vector<ParameterSet> models(static_cast<std::size_t>(n_clients));
      for (int i = 0; i < n_clients; ++i) {
        models[static_cast<std::size_t>(i)] = clients[static_cast<std::size_t>(i)].model;
      }

      // exchange masks through the wire format, as a real deployment would
      std::vector<CriticalMask> wire_masks(static_cast<std::size_t>(n_clients));
      std::size_t mask_bytes = 0;
      for (int i = 0; i < n_clients; ++i) {
        const auto payload = serialize_mask(*clients[static_cast<std::size_t>(i)].mask);
        mask_bytes += payload.size();
        wire_masks[static_cast<std::size_t>(i)] = deserialize_mask(payload);
      }
      result.mask_bytes_per_round.push_back(mask_bytes);

      plan.round = t;
      plan.overlap = pairwise_overlap(wire_masks);
      switch (config.collaboration) {
        case CollaborationMode::TimeVarying: {
          const ThresholdInfo info = compute_threshold(plan.overlap, t, config.beta);
          plan.o_avg = info.o_avg;
          plan.o_max = info.o_max;
          plan.threshold = info.threshold;
          plan.has_threshold = true;
          plan.collaborators = select_collaborators(plan.overlap, info.threshold);
          metrics.threshold = info.threshold;
          break;
        }
        case CollaborationMode::None:
          plan.collaborators.assign(static_cast<std::size_t>(n_clients), {});
          break;
        case CollaborationMode::FixedNumber:
          plan.collaborators = fixed_number_collaborators(plan.overlap, config.fixed_k);
          break;
      }
      double collab_total = 0.0;
      for (const auto& set : plan.collaborators) collab_total += static_cast<double>(set.size());
      metrics.mean_collab_size = collab_total / static_cast<double>(n_clients);

      plan.global_model = aggregate_global(models);
      plan.custom_models.resize(static_cast<std::size_t>(n_clients));
      parallel_for(n_clients, config.workers, [&](int i) {
        plan.custom_models[static_cast<std::size_t>(i)] =
            aggregate_custom(models, plan.collaborators[static_cast<std::size_t>(i)], i);
      });
      has_plan = true;

      next_models.resize(static_cast<std::size_t>(n_clients));
      for (int i = 0; i < n_clients; ++i) {
        auto& state = clients[static_cast<std::size_t>(i)];
        const auto& custom = plan.custom_models[static_cast<std::size_t>(i)];
        next_models[static_cast<std::size_t>(i)] =
            config.noncritical_mode == NoncriticalMode::AsCritical
                ? custom
                : local_init(state, plan.global_model, custom);
      }
    } else if (config.algorithm == Algorithm::FedAvg ||
               config.algorithm == Algorithm::FedPer) {
      std::vector<ParameterSet> models(static_cast<std::size_t>(n_clients));
      for (int i = 0; i < n_clients; ++i) {
        models[static_cast<std::size_t>(i)] = clients[static_cast<std::size_t>(i)].model;
      }
      global_model = aggregate_global(models);
      has_global = true;

      next_models.resize(static_cast<std::size_t>(n_clients));
      if (config.algorithm == Algorithm::FedAvg) {
        for (auto& m : next_models) m = global_model;
      } else {
        // fedper: share everything except the output classifier
        const auto keep = final_linear_indices(global_model, spec);
        for (int i = 0; i < n_clients; ++i) {
          ParameterSet next = global_model;
          for (std::size_t idx : keep) {
            next.layers[idx].values =
                clients[static_cast<std::size_t>(i)].model.layers[idx].values;
          }
          next_models[static_cast<std::size_t>(i)] = std::move(next);
        }
      }
    }

    result.history.push_back(metrics);

    if (observer) {
      RoundObservation obs;
      obs.round = t;
      obs.clients = &clients;
      obs.round_start_models = &round_start;
      obs.accuracies = &accuracy;
      obs.plan = has_plan ? &plan : nullptr;
      obs.global_model = has_global ? &global_model : nullptr;
      observer(obs);
    }

    if (!next_models.empty()) {
      for (int i = 0; i < n_clients; ++i) {
        clients[static_cast<std::size_t>(i)].model =
            std::move(next_models[static_cast<std::size_t>(i)]);
      }
    }
  }

  result.best_accuracy = 0.0;
  for (const auto& m : result.history) {
    result.best_accuracy = std::max(result.best_accuracy, m.mean_accuracy);
  }
  return result;
}

std::optional<double> angle_degrees(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("vectors have different lengths");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  c = std::clamp(c, -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

std::optional<double> update_angle_degrees(const ParameterSet& start_a, const ParameterSet& end_a,
                                           const ParameterSet& start_b, const ParameterSet& end_b) {
  const auto sa = flatten_weight_layers(start_a);
  const auto ea = flatten_weight_layers(end_a);
  const auto sb = flatten_weight_layers(start_b);
  const auto eb = flatten_weight_layers(end_b);
  std::vector<double> da(sa.size()), db(sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) da[i] = ea[i] - sa[i];
  for (std::size_t i = 0; i < sb.size(); ++i) db[i] = eb[i] - sb[i];
  return angle_degrees(da, db);
}

std::vector<std::optional<double>> gradient_angle_probe(const RunConfig& config,
                                                        int client_a, int client_b) {
  if (client_a == client_b) throw ConfigError("probe needs two distinct clients");
  if (client_a < 0 || client_b < 0 || client_a >= config.num_clients ||
      client_b >= config.num_clients) {
    throw ConfigError("probe client id out of range");
  }
  std::vector<std::optional<double>> angles;
  angles.reserve(static_cast<std::size_t>(config.rounds));
  run(config, [&](const RoundObservation& obs) {
    const auto& starts = *obs.round_start_models;
    const auto& states = *obs.clients;
    angles.push_back(update_angle_degrees(starts[static_cast<std::size_t>(client_a)],
                                          states[static_cast<std::size_t>(client_a)].model,
                                          starts[static_cast<std::size_t>(client_b)],
                                          states[static_cast<std::size_t>(client_b)].model));
  });
  return angles;
}

std::vector<OverlapStudyRow> overlap_similarity_study(const RunConfig& config) {
  if (config.data.num_classes < 8) {
    throw ConfigError("the overlap study needs at least 8 classes");
  }
  Dataset dataset = generate_blobs(config.data.num_classes, config.data.dims,
                                   config.data.samples_per_class, config.data.separation,
                                   derive_seed(config.seed, SeedPurpose::Data));
  Rng pool_rng(derive_seed(config.seed, SeedPurpose::Partition));
  ClassPools pools(dataset, pool_rng);

  const int train_n = config.partition.train_per_client;
  const int test_n = config.partition.test_per_client;
  std::vector<ClientShard> shards;
  auto plant = [&](const std::vector<int>& classes) {
    const int id = static_cast<int>(shards.size());
    shards.push_back(draw_shard_for_classes(dataset, classes, train_n, test_n, id, pools));
  };
  auto plant_duplicate = [&](const std::vector<int>& classes) {
    plant(classes);
    ClientShard copy = shards.back();
    copy.client_id = static_cast<int>(shards.size());
    shards.push_back(std::move(copy));
  };

  // clients 0-3: duplicated shards; 4-7: one shared class per pair;
  // 8-11: disjoint class sets within each pair
  plant_duplicate({0, 1});
  plant_duplicate({2, 3});
  plant({4, 5});
  plant({5, 6});
  plant({6, 7});
  plant({7, 4});
  plant({0, 2});
  plant({1, 3});
  plant({4, 6});
  plant({5, 7});

  RunConfig study = config;
  study.algorithm = Algorithm::FedCac;
  study.num_clients = static_cast<int>(shards.size());
  if (study.beta > static_cast<double>(study.rounds)) {
    study.beta = static_cast<double>(study.rounds);
  }

  std::vector<CriticalMask> final_masks;
  RunOverrides overrides;
  overrides.shards = &shards;
  run(study, [&](const RoundObservation& obs) {
    if (obs.round != study.rounds) return;
    final_masks.clear();
    for (const auto& state : *obs.clients) final_masks.push_back(*state.mask);
  }, overrides);

  const std::vector<std::pair<int, int>> same_pairs = {{0, 1}, {2, 3}};
  const std::vector<std::pair<int, int>> overlap_pairs = {{4, 5}, {6, 7}};
  const std::vector<std::pair<int, int>> disjoint_pairs = {{8, 9}, {10, 11}};
  auto mean_over = [&](const std::vector<std::pair<int, int>>& pairs) {
    double sum = 0.0;
    for (const auto& [a, b] : pairs) {
      sum += overlap_ratio(final_masks[static_cast<std::size_t>(a)],
                           final_masks[static_cast<std::size_t>(b)]);
    }
    return sum / static_cast<double>(pairs.size());
  };

  return {
      {"same_distribution", mean_over(same_pairs)},
      {"class_overlap", mean_over(overlap_pairs)},
      {"disjoint", mean_over(disjoint_pairs)},
  };
}

void export_sensitivity_heatmap(const ClientState& state, const std::string& layer_name,
                                const std::string& path) {
  if (!state.last_sensitivity.has_value()) {
    throw ConfigError("client has no sensitivity map yet; train first");
  }
  const ParamLayer* layer = state.model.find_layer(layer_name);
  if (!layer) throw ConfigError("unknown layer '" + layer_name + "'");
  std::size_t index = 0;
  for (; index < state.model.layers.size(); ++index) {
    if (&state.model.layers[index] == layer) break;
  }
  const auto& values = state.last_sensitivity->layers[index].values;

  const std::size_t rows = layer->shape[0];
  const std::size_t cols = values.size() / rows;
  std::ostringstream out;
  char buf[32];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", values[r * cols + c]);
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
  atomic_write_text(path, out.str());
}

void write_history_jsonl(const std::vector<RoundMetrics>& history, const std::string& path) {
  std::ostringstream out;
  for (const auto& m : history) {
    nlohmann::json row;
    row["round"] = m.round;
    row["mean_accuracy"] = m.mean_accuracy;
    row["per_client_accuracy"] = m.per_client_accuracy;
    if (m.threshold.has_value()) row["threshold"] = *m.threshold;
    if (m.mean_collab_size.has_value()) row["mean_collab_size"] = *m.mean_collab_size;
    out << row.dump() << '\n';
  }
  atomic_write_text(path, out.str());
}

}  // namespace fedcac
