#pragma once

#include <cstdint>
#include <optional>

#include "fedcac/dataset.hpp"
#include "fedcac/mask.hpp"
#include "fedcac/mlp.hpp"
#include "fedcac/params.hpp"

namespace fedcac {

struct ClientState {
  int client_id = 0;
  ParameterSet model;
  ClientShard shard;
  std::optional<CriticalMask> mask;              // absent until the first round ends
  std::optional<SensitivityMap> last_sensitivity;
  std::uint64_t rng_seed = 0;  // per-client base; init/shuffle/selector streams derive from it
};

// Masked re-initialization: critical positions come from the customized
// model, the rest from the global model. Requires state.mask.
ParameterSet local_init(const ClientState& state, const ParameterSet& global_model,
                        const ParameterSet& custom_model);

struct LocalTrainOptions {
  int epochs = 1;
  double lr = 0.1;
  int batch_size = 100;  // clamped to the shard size
  double tau = 0.5;
  Selector selector = Selector::Sensitivity;
  int round = 1;             // keys the shuffle/selector streams
  bool compute_mask = true;  // baselines that never exchange masks skip it
};

struct LocalTrainResult {
  ParameterSet model_end;
  SensitivityMap sensitivity;
  CriticalMask mask;
};

// E epochs of shuffled mini-batch SGD from the model recorded at entry
// (the round-start model), then sensitivity over the round's drift and a
// fresh critical mask. Updates state.model / state.mask in place.
LocalTrainResult local_train(ClientState& state, const MlpSpec& spec,
                             const LocalTrainOptions& opts);

// Top-1 accuracy on the client's test shard (running-statistics forward).
double evaluate(const ClientState& state, const MlpSpec& spec);

}  // namespace fedcac
