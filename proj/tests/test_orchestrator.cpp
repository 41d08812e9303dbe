#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fedcac/errors.hpp"
#include "fedcac/orchestrator.hpp"
#include "fedcac/rng.hpp"

using namespace fedcac;

namespace {

// small, fast base configuration shared by the round-loop tests
RunConfig small_config() {
  RunConfig config;
  config.num_clients = 4;
  config.rounds = 4;
  config.epochs = 2;
  config.tau = 0.5;
  config.beta = 2.0;
  config.lr = 0.05;
  config.batch_size = 20;
  config.seed = 11;
  config.data = {4, 6, 300, 2.0};
  config.partition.mode = PartitionMode::Pathological;
  config.partition.classes_per_client = 2;
  config.partition.train_per_client = 40;
  config.partition.test_per_client = 20;
  config.model.layer_widths = {6, 8, 4};
  return config;
}

std::vector<double> mean_history(const RunResult& result) {
  std::vector<double> out;
  for (const auto& m : result.history) out.push_back(m.mean_accuracy);
  return out;
}

double value_mean(const ParameterSet& model) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& layer : model.layers) {
    for (double v : layer.values) sum += v;
    n += layer.size();
  }
  return sum / static_cast<double>(n);
}

}  // namespace

TEST_CASE("run: tau = 0 reduces to the fedavg variant bit for bit") {
  RunConfig fedcac_config = small_config();
  fedcac_config.tau = 0.0;
  fedcac_config.model.use_norm_layer = true;  // forced-critical statistics included
  fedcac_config.rounds = 5;

  RunConfig fedavg_config = fedcac_config;
  fedavg_config.algorithm = Algorithm::FedAvg;

  RunResult a = run(fedcac_config);
  RunResult b = run(fedavg_config);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t t = 0; t < a.history.size(); ++t) {
    CHECK(a.history[t].mean_accuracy == b.history[t].mean_accuracy);
    CHECK(a.history[t].per_client_accuracy == b.history[t].per_client_accuracy);
  }
  CHECK(a.best_accuracy == b.best_accuracy);
}

TEST_CASE("run: tau = 1 collapses to the fedavg variant (identical masks)") {
  // with every mask all-ones the overlap matrix is flat at 1, the threshold
  // never exceeds it, every client collaborates with everyone, and the
  // all-critical re-initialization installs the uniform mean
  RunConfig fedcac_config = small_config();
  fedcac_config.tau = 1.0;
  fedcac_config.beta = 1.0;
  fedcac_config.rounds = 5;

  RunConfig fedavg_config = fedcac_config;
  fedavg_config.algorithm = Algorithm::FedAvg;

  RunResult a = run(fedcac_config, [&](const RoundObservation& obs) {
    REQUIRE(obs.plan != nullptr);
    for (std::size_t i = 0; i < obs.plan->collaborators.size(); ++i) {
      CHECK(obs.plan->collaborators[i].size() == obs.clients->size() - 1);
      CHECK(content_digest(obs.plan->custom_models[i]) ==
            content_digest(obs.plan->global_model));
    }
  });
  RunResult b = run(fedavg_config);
  CHECK(mean_history(a) == mean_history(b));
}

TEST_CASE("run: separate never exchanges anything") {
  RunConfig config = small_config();
  config.algorithm = Algorithm::Separate;

  std::map<int, std::vector<std::uint64_t>> trained, starts;
  run(config, [&](const RoundObservation& obs) {
    CHECK(obs.plan == nullptr);
    CHECK(obs.global_model == nullptr);
    for (const auto& state : *obs.clients) {
      trained[obs.round].push_back(content_digest(state.model));
    }
    for (const auto& model : *obs.round_start_models) {
      starts[obs.round].push_back(content_digest(model));
    }
  });
  for (int t = 2; t <= config.rounds; ++t) CHECK(starts[t] == trained[t - 1]);
}

TEST_CASE("run: fedavg replaces every model with the uniform mean") {
  RunConfig config = small_config();
  config.algorithm = Algorithm::FedAvg;

  std::map<int, std::uint64_t> global;
  std::map<int, std::vector<std::uint64_t>> starts;
  run(config, [&](const RoundObservation& obs) {
    REQUIRE(obs.global_model != nullptr);
    global[obs.round] = content_digest(*obs.global_model);
    for (const auto& model : *obs.round_start_models) {
      starts[obs.round].push_back(content_digest(model));
    }
    // conservation: the mean of the global model equals the mean of the
    // client-model means up to rounding
    double client_mean = 0.0;
    for (const auto& state : *obs.clients) client_mean += value_mean(state.model);
    client_mean /= static_cast<double>(obs.clients->size());
    CHECK(value_mean(*obs.global_model) == doctest::Approx(client_mean).epsilon(1e-12));
  });
  for (int t = 2; t <= config.rounds; ++t) {
    for (std::uint64_t digest : starts[t]) CHECK(digest == global[t - 1]);
  }
}

TEST_CASE("run: fedper shares all layers except the output classifier") {
  RunConfig config = small_config();
  config.algorithm = Algorithm::FedPer;

  std::map<int, ParameterSet> global;
  std::map<int, std::vector<ParameterSet>> trained;
  std::map<int, std::vector<ParameterSet>> starts;
  run(config, [&](const RoundObservation& obs) {
    REQUIRE(obs.global_model != nullptr);
    global[obs.round] = *obs.global_model;
    for (const auto& state : *obs.clients) trained[obs.round].push_back(state.model);
    starts[obs.round] = *obs.round_start_models;
  });

  const std::size_t n_layers = global[1].layers.size();
  for (int t = 2; t <= config.rounds; ++t) {
    for (std::size_t i = 0; i < starts[t].size(); ++i) {
      for (std::size_t li = 0; li < n_layers; ++li) {
        const auto& got = starts[t][i].layers[li].values;
        const bool is_final = li >= n_layers - 2;
        const auto& want = is_final ? trained[t - 1][i].layers[li].values
                                    : global[t - 1].layers[li].values;
        CHECK(got == want);
      }
    }
  }
}

TEST_CASE("run: collaboration 'none' keeps every customized model personal") {
  RunConfig config = small_config();
  config.collaboration = CollaborationMode::None;

  run(config, [&](const RoundObservation& obs) {
    REQUIRE(obs.plan != nullptr);
    for (const auto& set : obs.plan->collaborators) CHECK(set.empty());
    for (std::size_t i = 0; i < obs.clients->size(); ++i) {
      CHECK(content_digest(obs.plan->custom_models[i]) ==
            content_digest((*obs.clients)[i].model));
    }
  });
}

TEST_CASE("run: fixed-number collaboration keeps k collaborators every round") {
  RunConfig config = small_config();
  config.collaboration = CollaborationMode::FixedNumber;
  config.fixed_k = 2;

  RunResult result = run(config, [&](const RoundObservation& obs) {
    for (const auto& set : obs.plan->collaborators) CHECK(set.size() == 2);
  });
  for (const auto& m : result.history) {
    REQUIRE(m.mean_collab_size.has_value());
    CHECK(*m.mean_collab_size == 2.0);
    CHECK_FALSE(m.threshold.has_value());
  }
}

TEST_CASE("run: as_critical mode installs the customized model wholesale") {
  RunConfig config = small_config();
  config.noncritical_mode = NoncriticalMode::AsCritical;

  std::map<int, std::vector<std::uint64_t>> customs;
  std::map<int, std::vector<std::uint64_t>> starts;
  run(config, [&](const RoundObservation& obs) {
    for (const auto& u : obs.plan->custom_models) {
      customs[obs.round].push_back(content_digest(u));
    }
    for (const auto& model : *obs.round_start_models) {
      starts[obs.round].push_back(content_digest(model));
    }
  });
  for (int t = 2; t <= config.rounds; ++t) CHECK(starts[t] == customs[t - 1]);
}

TEST_CASE("run: schedule empties collaborator sets past beta and records metrics") {
  RunConfig config = small_config();
  config.rounds = 6;
  config.beta = 3.0;
  config.num_clients = 6;

  RunResult result = run(config, [&](const RoundObservation& obs) {
    if (obs.round <= 3) return;
    for (const auto& set : obs.plan->collaborators) CHECK(set.empty());
    for (std::size_t i = 0; i < obs.clients->size(); ++i) {
      CHECK(content_digest(obs.plan->custom_models[i]) ==
            content_digest((*obs.clients)[i].model));
    }
  });
  for (const auto& m : result.history) {
    REQUIRE(m.threshold.has_value());
    REQUIRE(m.mean_collab_size.has_value());
    if (m.round > 3) CHECK(*m.mean_collab_size == 0.0);
    // the uniform objective: the mean is exactly the mean of the per-client values
    double sum = 0.0;
    for (double a : m.per_client_accuracy) sum += a;
    CHECK(m.mean_accuracy == sum / static_cast<double>(m.per_client_accuracy.size()));
  }
}

TEST_CASE("run: deterministic and independent of the worker count") {
  RunConfig config = small_config();
  config.model.use_norm_layer = true;
  RunResult a = run(config);
  RunResult b = run(config);
  CHECK(mean_history(a) == mean_history(b));

  RunConfig threaded = config;
  threaded.workers = 4;
  RunResult c = run(threaded);
  CHECK(mean_history(a) == mean_history(c));
  for (std::size_t t = 0; t < a.history.size(); ++t) {
    CHECK(a.history[t].per_client_accuracy == c.history[t].per_client_accuracy);
  }

  RunConfig reseeded = config;
  reseeded.seed = 12;
  RunResult d = run(reseeded);
  CHECK(mean_history(a) != mean_history(d));
}

TEST_CASE("run: mask traffic is one bit per parameter plus headers") {
  RunConfig config = small_config();
  config.rounds = 2;
  config.model.layer_widths = {6, 256, 4};  // big enough that headers stay marginal
  RunResult result = run(config);
  REQUIRE(result.mask_bytes_per_round.size() == static_cast<std::size_t>(config.rounds));

  // per client: 4-byte layer count, 4 bytes per layer, ceil(len/8) per layer
  const MlpSpec& spec = config.model;
  Rng probe(0);
  ParameterSet model = build_mlp(spec, probe);
  std::size_t expected_per_client = 4 + 4 * model.layers.size();
  for (const auto& layer : model.layers) expected_per_client += (layer.size() + 7) / 8;
  for (std::size_t bytes : result.mask_bytes_per_round) {
    CHECK(bytes == expected_per_client * static_cast<std::size_t>(config.num_clients));
  }
  const double ratio = static_cast<double>(result.mask_bytes_per_round[0]) /
                       static_cast<double>(result.model_bytes_fp32_per_round);
  CHECK(ratio >= 1.0 / 32.0);
  CHECK(ratio < 0.04);
}

TEST_CASE("run: invalid configurations are rejected") {
  RunConfig config = small_config();
  config.tau = 1.5;
  CHECK_THROWS_AS(run(config), ConfigError);
  config = small_config();
  config.beta = 100.0;  // beta must stay within [1, rounds]
  CHECK_THROWS_AS(run(config), ConfigError);
  config = small_config();
  config.num_clients = 1;
  CHECK_THROWS_AS(run(config), ConfigError);
  config = small_config();
  config.model.layer_widths = {6, 8, 5};  // classes mismatch
  CHECK_THROWS_AS(run(config), ConfigError);
}

TEST_CASE("angle_degrees: orthogonal vectors measure 90 degrees") {
  const std::vector<double> a = {1.0, 0.0, 0.0};
  const std::vector<double> b = {0.0, 1.0, 0.0};
  auto angle = angle_degrees(a, b);
  REQUIRE(angle.has_value());
  CHECK(*angle == doctest::Approx(90.0).epsilon(1e-12));

  const std::vector<double> zero = {0.0, 0.0, 0.0};
  CHECK_FALSE(angle_degrees(a, zero).has_value());

  const std::vector<double> opposite = {-1.0, 0.0, 0.0};
  CHECK(*angle_degrees(a, opposite) == doctest::Approx(180.0).epsilon(1e-12));
}

TEST_CASE("gradient_angle_probe: identical shards and seeds give zero angles") {
  RunConfig config = small_config();
  config.num_clients = 2;
  config.rounds = 3;

  // plant one shard used by both clients, trained with identical seeds
  Dataset data = generate_blobs(config.data.num_classes, config.data.dims,
                                config.data.samples_per_class, config.data.separation,
                                derive_seed(config.seed, SeedPurpose::Data));
  Rng pool_rng(derive_seed(config.seed, SeedPurpose::Partition));
  ClassPools pools(data, pool_rng);
  ClientShard shard = draw_shard_for_classes(data, {0, 1}, 40, 20, 0, pools);
  ClientShard copy = shard;
  copy.client_id = 1;
  std::vector<ClientShard> shards = {shard, copy};
  std::vector<std::uint64_t> seeds = {77, 77};

  RunOverrides overrides;
  overrides.shards = &shards;
  overrides.client_seeds = &seeds;

  std::vector<std::optional<double>> angles;
  std::vector<double> pair_overlaps;
  run(config, [&](const RoundObservation& obs) {
    const auto& starts = *obs.round_start_models;
    const auto& states = *obs.clients;
    angles.push_back(update_angle_degrees(starts[0], states[0].model,
                                          starts[1], states[1].model));
    pair_overlaps.push_back(overlap_ratio(*states[0].mask, *states[1].mask));
  }, overrides);

  REQUIRE(angles.size() == 3);
  for (const auto& angle : angles) {
    REQUIRE(angle.has_value());
    CHECK(*angle < 1e-6);
  }
  // identical data and seeds make identical masks: overlap is exactly 1
  for (double o : pair_overlaps) CHECK(o == 1.0);
}

TEST_CASE("gradient_angle_probe: zero learning rate yields absent angles") {
  RunConfig config = small_config();
  config.lr = 0.0;
  config.rounds = 2;
  auto angles = gradient_angle_probe(config, 0, 1);
  REQUIRE(angles.size() == 2);
  for (const auto& angle : angles) CHECK_FALSE(angle.has_value());
}

TEST_CASE("gradient_angle_probe: validates its arguments") {
  RunConfig config = small_config();
  CHECK_THROWS_AS(gradient_angle_probe(config, 1, 1), ConfigError);
  CHECK_THROWS_AS(gradient_angle_probe(config, 0, 9), ConfigError);
}

TEST_CASE("overlap_similarity_study: duplicated shards overlap the most") {
  RunConfig config = small_config();
  config.data.num_classes = 8;
  config.data.samples_per_class = 400;
  config.model.layer_widths = {6, 8, 8};
  config.rounds = 5;
  config.beta = 5.0;
  config.partition.train_per_client = 60;
  config.partition.test_per_client = 20;

  auto rows = overlap_similarity_study(config);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].pair_type == "same_distribution");
  CHECK(rows[1].pair_type == "class_overlap");
  CHECK(rows[2].pair_type == "disjoint");
  CHECK(rows[0].mean_overlap > rows[2].mean_overlap);
  for (const auto& row : rows) {
    CHECK(row.mean_overlap >= 0.5);
    CHECK(row.mean_overlap <= 1.0);
  }
}

TEST_CASE("export_sensitivity_heatmap: zero drift exports an all-zero grid") {
  RunConfig config = small_config();
  config.lr = 0.0;
  config.rounds = 1;
  config.beta = 1.0;

  std::optional<ClientState> final_state;
  run(config, [&](const RoundObservation& obs) {
    final_state = (*obs.clients)[0];
  });

  const std::string path = "heatmap_test_out.csv";
  export_sensitivity_heatmap(*final_state, "fc1.weight", path);
  std::ifstream in(path);
  std::string line;
  std::size_t cells = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      CHECK(std::stod(cell) == 0.0);
      ++cells;
    }
  }
  std::remove(path.c_str());
  CHECK(cells == 8 * 4);  // full layer, row per output unit

  CHECK_THROWS_AS(export_sensitivity_heatmap(*final_state, "fc9.weight", path), ConfigError);
}

TEST_CASE("export_sensitivity_heatmap: a client's own classes dominate the rows") {
  for (std::uint64_t seed : {1, 2, 3}) {
    RunConfig config;
    config.algorithm = Algorithm::Separate;
    config.num_clients = 2;
    config.rounds = 5;
    config.epochs = 5;
    config.beta = 5.0;
    config.lr = 0.05;
    config.batch_size = 50;
    config.data = {4, 8, 400, 1.5};
    config.partition.classes_per_client = 2;
    config.partition.train_per_client = 100;
    config.partition.test_per_client = 20;
    config.model.layer_widths = {8, 16, 4};
    config.seed = seed;

    std::optional<ClientState> final_state;
    run(config, [&](const RoundObservation& obs) {
      if (obs.round == config.rounds) final_state = (*obs.clients)[0];
    });

    const std::string path = "heatmap_rows_out.csv";
    export_sensitivity_heatmap(*final_state, "fc1.weight", path);
    std::ifstream in(path);
    std::vector<double> row_means;
    std::string line;
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string cell;
      double sum = 0.0;
      int cells = 0;
      while (std::getline(ss, cell, ',')) {
        sum += std::stod(cell);
        ++cells;
      }
      row_means.push_back(sum / cells);
    }
    std::remove(path.c_str());
    REQUIRE(row_means.size() == 4);

    std::set<int> present(final_state->shard.train.labels.begin(),
                          final_state->shard.train.labels.end());
    double present_mean = 0.0, absent_mean = 0.0;
    for (int cls = 0; cls < 4; ++cls) {
      (present.count(cls) ? present_mean : absent_mean) +=
          row_means[static_cast<std::size_t>(cls)] / 2.0;
    }
    CHECK(present_mean > absent_mean);
  }
}

TEST_CASE("write_history_jsonl: stable bytes, one object per round") {
  RunConfig config = small_config();
  config.rounds = 3;
  RunResult result = run(config);

  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  write_history_jsonl(result.history, "hist_a.jsonl");
  write_history_jsonl(result.history, "hist_b.jsonl");
  const std::string a = slurp("hist_a.jsonl");
  const std::string b = slurp("hist_b.jsonl");
  std::remove("hist_a.jsonl");
  std::remove("hist_b.jsonl");
  CHECK(a == b);
  CHECK(std::count(a.begin(), a.end(), '\n') == 3);
  CHECK(a.find("\"mean_accuracy\"") != std::string::npos);
  CHECK(a.find("\"threshold\"") != std::string::npos);
}
