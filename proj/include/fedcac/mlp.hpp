#pragma once

#include <cstdint>
#include <vector>

#include "fedcac/matrix.hpp"
#include "fedcac/params.hpp"
#include "fedcac/rng.hpp"

namespace fedcac {

class Rng;

enum class Activation { Relu, Tanh };

// Feed-forward classifier: layer_widths = (input, hidden..., classes).
// When use_norm_layer is set, every hidden linear layer is followed by a
// per-feature batch-norm (learnable scale/shift plus running statistics)
// before the activation.
struct MlpSpec {
  std::vector<int> layer_widths;
  Activation activation = Activation::Relu;
  bool use_norm_layer = false;
  double norm_momentum = 0.1;
  double norm_epsilon = 1e-5;

  int input_width() const { return layer_widths.front(); }
  int num_classes() const { return layer_widths.back(); }
};

struct Batch {
  Matrix features;          // batch x input_width
  std::vector<int> labels;  // in [0, classes)

  std::size_t size() const { return labels.size(); }
};

// Batch: normalize with mini-batch statistics (training).
// Running: normalize with stored running statistics (inference).
enum class NormMode { Batch, Running };

struct NormCache {
  Matrix x_hat;                 // normalized pre-scale activations
  std::vector<double> inv_std;  // 1/sqrt(var + eps)
  std::vector<double> batch_mean;
  std::vector<double> batch_var;  // biased
};

struct ForwardCache {
  std::vector<Matrix> linear_inputs;    // input of each linear layer
  std::vector<Matrix> post_activation;  // unused slot for the output layer
  std::vector<Matrix> pre_activation;   // value fed into the activation
  std::vector<NormCache> norms;         // one per hidden layer when enabled
};

// Xavier-uniform weights, zero biases; norm scale 1, shift 0, running
// mean 0, running var 1.
ParameterSet build_mlp(const MlpSpec& spec, Rng& rng);

void validate_model(const ParameterSet& model, const MlpSpec& spec);

// Logits for a feature matrix. Throws ConfigError on a feature-width
// mismatch. `cache`, when given, records everything backward needs.
Matrix forward(const ParameterSet& model, const MlpSpec& spec, const Matrix& features,
               NormMode mode, ForwardCache* cache = nullptr);

// Mean cross-entropy with a log-sum-exp shift; finite for large logits.
double cross_entropy(const Matrix& logits, const std::vector<int>& labels);

struct LossGrad {
  double loss = 0.0;
  ParameterSet grad;  // same structure as model; Stats layers all zero
};

// Loss and analytic gradient of the batch-mode cross-entropy.
// Throws DataError when a label is outside [0, classes). `cache_out`, when
// given, receives the forward cache (batch statistics included).
LossGrad loss_and_grad(const ParameterSet& model, const MlpSpec& spec, const Batch& batch,
                       ForwardCache* cache_out = nullptr);

// v <- v - lr * g, element-wise; nothing else changes.
void sgd_step_inplace(ParameterSet& model, const ParameterSet& grad, double lr);
ParameterSet sgd_step(const ParameterSet& model, const ParameterSet& grad, double lr);

// Folds the cached batch statistics into the running statistics:
// running <- (1 - momentum) * running + momentum * batch.
void update_norm_stats(ParameterSet& model, const MlpSpec& spec, const ForwardCache& cache);

// |L(theta) - L(theta with parameter flat_index zeroed)| on the given batch,
// batch-mode loss. The model is left untouched.
double exact_sensitivity_oracle(const ParameterSet& model, const MlpSpec& spec,
                                const Batch& batch, std::size_t flat_index);

}  // namespace fedcac
