#include "fedcac/client.hpp"

#include <algorithm>
#include <numeric>

#include "fedcac/errors.hpp"
#include "fedcac/rng.hpp"

namespace fedcac {

ParameterSet local_init(const ClientState& state, const ParameterSet& global_model,
                        const ParameterSet& custom_model) {
  if (!state.mask.has_value()) {
    throw InternalError("local_init called before the client produced a mask");
  }
  require_same_structure(global_model, custom_model);
  const CriticalMask& mask = *state.mask;
  if (mask.layers.size() != global_model.layers.size()) {
    throw InternalError("mask does not match model structure");
  }
  ParameterSet out = global_model;
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    const auto& bits = mask.layers[i].bits;
    if (bits.size() != out.layers[i].values.size()) {
      throw InternalError("mask layer size does not match model layer size");
    }
    auto& v = out.layers[i].values;
    const auto& u = custom_model.layers[i].values;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (bits[j]) v[j] = u[j];
    }
  }
  return out;
}

LocalTrainResult local_train(ClientState& state, const MlpSpec& spec,
                             const LocalTrainOptions& opts) {
  if (state.shard.train.size() == 0) {
    throw DataError("client " + std::to_string(state.client_id) + " has an empty training shard");
  }
  if (opts.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (opts.batch_size < 1) throw ConfigError("batch size must be >= 1");

  const ParameterSet theta_start = state.model;
  const Dataset& train = state.shard.train;
  const std::size_t n = train.size();
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(opts.batch_size), n);

  Rng shuffle_rng(derive_seed(state.rng_seed, SeedPurpose::Shuffle,
                              static_cast<std::uint64_t>(opts.round)));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t count = std::min(batch, n - start);
      Batch mini;
      mini.features = Matrix(count, train.features.cols);
      mini.labels.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t row = static_cast<std::size_t>(order[start + i]);
        for (std::size_t c = 0; c < train.features.cols; ++c) {
          mini.features(i, c) = train.features(row, c);
        }
        mini.labels[i] = train.labels[row];
      }
      ForwardCache cache;
      LossGrad lg = loss_and_grad(state.model, spec, mini, &cache);
      sgd_step_inplace(state.model, lg.grad, opts.lr);
      if (spec.use_norm_layer) update_norm_stats(state.model, spec, cache);
    }
  }

  LocalTrainResult result;
  result.sensitivity = compute_sensitivity(theta_start, state.model);
  if (opts.compute_mask) {
    Rng selector_rng(derive_seed(state.rng_seed, SeedPurpose::SelectorDraw,
                                 static_cast<std::uint64_t>(opts.round)));
    result.mask = select_critical(result.sensitivity, opts.tau, opts.selector, &selector_rng);
    state.mask = result.mask;
  }
  state.last_sensitivity = result.sensitivity;
  result.model_end = state.model;
  return result;
}

double evaluate(const ClientState& state, const MlpSpec& spec) {
  const Dataset& test = state.shard.test;
  if (test.size() == 0) {
    throw DataError("client " + std::to_string(state.client_id) + " has an empty test shard");
  }
  Matrix logits = forward(state.model, spec, test.features, NormMode::Running);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    std::size_t arg = 0;
    for (std::size_t c = 1; c < logits.cols; ++c) {
      if (logits(r, c) > logits(r, arg)) arg = c;
    }
    if (static_cast<int>(arg) == test.labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace fedcac
