#include "fedcac/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedcac/errors.hpp"

namespace fedcac {

namespace {

int num_linear(const MlpSpec& spec) {
  return static_cast<int>(spec.layer_widths.size()) - 1;
}

bool has_norm(const MlpSpec& spec, int linear_idx) {
  return spec.use_norm_layer && linear_idx < num_linear(spec) - 1;
}

void check_spec(const MlpSpec& spec) {
  if (spec.layer_widths.size() < 2) {
    throw ConfigError("model needs at least an input and an output width");
  }
  for (int w : spec.layer_widths) {
    if (w <= 0) throw ConfigError("layer widths must be positive");
  }
  if (spec.norm_momentum <= 0.0 || spec.norm_momentum >= 1.0) {
    throw ConfigError("norm momentum must lie in (0, 1)");
  }
}

// y = x * W^T + b, W is (out x in)
Matrix linear_forward(const Matrix& x, const ParamLayer& weight, const ParamLayer& bias) {
  const std::size_t out_w = weight.shape[0];
  const std::size_t in_w = weight.shape[1];
  Matrix y(x.rows, out_w);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t o = 0; o < out_w; ++o) {
      double acc = bias.values[o];
      const double* wrow = &weight.values[o * in_w];
      const double* xrow = &x.data[r * in_w];
      for (std::size_t i = 0; i < in_w; ++i) acc += wrow[i] * xrow[i];
      y(r, o) = acc;
    }
  }
  return y;
}

double activate(double z, Activation act) {
  return act == Activation::Relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

double activate_grad(double z, Activation act) {
  if (act == Activation::Relu) return z > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(z);
  return 1.0 - t * t;
}

}  // namespace

ParameterSet build_mlp(const MlpSpec& spec, Rng& rng) {
  check_spec(spec);
  ParameterSet model;
  const int L = num_linear(spec);
  for (int i = 0; i < L; ++i) {
    const std::size_t in_w = static_cast<std::size_t>(spec.layer_widths[i]);
    const std::size_t out_w = static_cast<std::size_t>(spec.layer_widths[i + 1]);
    ParamLayer weight;
    weight.name = "fc" + std::to_string(i) + ".weight";
    weight.shape = {out_w, in_w};
    weight.values.resize(out_w * in_w);
    const double limit = std::sqrt(6.0 / static_cast<double>(in_w + out_w));
    for (double& v : weight.values) v = rng.uniform(-limit, limit);
    model.layers.push_back(std::move(weight));

    ParamLayer bias;
    bias.name = "fc" + std::to_string(i) + ".bias";
    bias.shape = {out_w};
    bias.values.assign(out_w, 0.0);
    model.layers.push_back(std::move(bias));

    if (has_norm(spec, i)) {
      const std::string base = "norm" + std::to_string(i);
      ParamLayer scale{base + ".scale", {out_w}, LayerKind::Weights, std::vector<double>(out_w, 1.0)};
      ParamLayer shift{base + ".shift", {out_w}, LayerKind::Weights, std::vector<double>(out_w, 0.0)};
      ParamLayer mean{base + ".running_mean", {out_w}, LayerKind::Stats, std::vector<double>(out_w, 0.0)};
      ParamLayer var{base + ".running_var", {out_w}, LayerKind::Stats, std::vector<double>(out_w, 1.0)};
      model.layers.push_back(std::move(scale));
      model.layers.push_back(std::move(shift));
      model.layers.push_back(std::move(mean));
      model.layers.push_back(std::move(var));
    }
  }
  return model;
}

void validate_model(const ParameterSet& model, const MlpSpec& spec) {
  Rng probe(0);
  ParameterSet reference = build_mlp(spec, probe);
  if (!model.same_structure(reference)) {
    throw ConfigError("model structure does not match the given spec");
  }
}

Matrix forward(const ParameterSet& model, const MlpSpec& spec, const Matrix& features,
               NormMode mode, ForwardCache* cache) {
  check_spec(spec);
  if (features.cols != static_cast<std::size_t>(spec.input_width())) {
    throw ConfigError("feature width " + std::to_string(features.cols) +
                      " does not match model input width " +
                      std::to_string(spec.input_width()));
  }

  const int L = num_linear(spec);
  if (cache) {
    cache->linear_inputs.assign(static_cast<std::size_t>(L), Matrix{});
    cache->pre_activation.assign(static_cast<std::size_t>(L), Matrix{});
    cache->norms.assign(static_cast<std::size_t>(L), NormCache{});
  }

  Matrix x = features;
  std::size_t layer_idx = 0;
  for (int i = 0; i < L; ++i) {
    const ParamLayer& weight = model.layers[layer_idx++];
    const ParamLayer& bias = model.layers[layer_idx++];
    if (cache) cache->linear_inputs[static_cast<std::size_t>(i)] = x;
    Matrix z = linear_forward(x, weight, bias);

    const bool hidden = i < L - 1;
    if (hidden && has_norm(spec, i)) {
      const ParamLayer& scale = model.layers[layer_idx++];
      const ParamLayer& shift = model.layers[layer_idx++];
      const ParamLayer& run_mean = model.layers[layer_idx++];
      const ParamLayer& run_var = model.layers[layer_idx++];
      const std::size_t f = z.cols;
      const double inv_b = 1.0 / static_cast<double>(z.rows);

      std::vector<double> mean(f, 0.0), var(f, 0.0);
      if (mode == NormMode::Batch) {
        for (std::size_t r = 0; r < z.rows; ++r)
          for (std::size_t c = 0; c < f; ++c) mean[c] += z(r, c);
        for (std::size_t c = 0; c < f; ++c) mean[c] *= inv_b;
        for (std::size_t r = 0; r < z.rows; ++r)
          for (std::size_t c = 0; c < f; ++c) {
            const double d = z(r, c) - mean[c];
            var[c] += d * d;
          }
        for (std::size_t c = 0; c < f; ++c) var[c] *= inv_b;
      } else {
        mean = run_mean.values;
        var = run_var.values;
      }

      std::vector<double> inv_std(f);
      for (std::size_t c = 0; c < f; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + spec.norm_epsilon);

      Matrix x_hat(z.rows, f);
      for (std::size_t r = 0; r < z.rows; ++r)
        for (std::size_t c = 0; c < f; ++c) x_hat(r, c) = (z(r, c) - mean[c]) * inv_std[c];

      for (std::size_t r = 0; r < z.rows; ++r)
        for (std::size_t c = 0; c < f; ++c)
          z(r, c) = scale.values[c] * x_hat(r, c) + shift.values[c];

      if (cache) {
        NormCache& nc = cache->norms[static_cast<std::size_t>(i)];
        nc.x_hat = std::move(x_hat);
        nc.inv_std = std::move(inv_std);
        nc.batch_mean = std::move(mean);
        nc.batch_var = std::move(var);
      }
    }

    if (hidden) {
      if (cache) cache->pre_activation[static_cast<std::size_t>(i)] = z;
      for (double& v : z.data) v = activate(v, spec.activation);
    }
    x = std::move(z);
  }
  return x;
}

double cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  if (logits.rows != labels.size()) {
    throw DataError("logit row count does not match label count");
  }
  const int classes = static_cast<int>(logits.cols);
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    if (labels[r] < 0 || labels[r] >= classes) {
      throw DataError("label " + std::to_string(labels[r]) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
    double hi = logits(r, 0);
    for (std::size_t c = 1; c < logits.cols; ++c) hi = std::max(hi, logits(r, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) sum += std::exp(logits(r, c) - hi);
    const double lse = hi + std::log(sum);
    total += lse - logits(r, static_cast<std::size_t>(labels[r]));
  }
  return total / static_cast<double>(logits.rows);
}

LossGrad loss_and_grad(const ParameterSet& model, const MlpSpec& spec, const Batch& batch,
                       ForwardCache* cache_out) {
  if (batch.size() == 0) throw DataError("empty batch");
  ForwardCache local_cache;
  ForwardCache& cache = cache_out ? *cache_out : local_cache;
  Matrix logits = forward(model, spec, batch.features, NormMode::Batch, &cache);
  const double loss = cross_entropy(logits, batch.labels);

  LossGrad out;
  out.loss = loss;
  out.grad = model;
  for (auto& layer : out.grad.layers) {
    std::fill(layer.values.begin(), layer.values.end(), 0.0);
  }

  const std::size_t b = batch.size();
  const double inv_b = 1.0 / static_cast<double>(b);

  // d = softmax(logits) - onehot(labels), averaged over the batch
  Matrix d(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    double hi = logits(r, 0);
    for (std::size_t c = 1; c < logits.cols; ++c) hi = std::max(hi, logits(r, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) sum += std::exp(logits(r, c) - hi);
    for (std::size_t c = 0; c < logits.cols; ++c) {
      d(r, c) = std::exp(logits(r, c) - hi) / sum * inv_b;
    }
    d(r, static_cast<std::size_t>(batch.labels[r])) -= inv_b;
  }

  const int L = num_linear(spec);

  // walk layer indices backwards, mirroring the forward layout
  std::vector<std::size_t> linear_at(static_cast<std::size_t>(L));
  {
    std::size_t idx = 0;
    for (int i = 0; i < L; ++i) {
      linear_at[static_cast<std::size_t>(i)] = idx;
      idx += 2;
      if (has_norm(spec, i)) idx += 4;
    }
  }

  for (int i = L - 1; i >= 0; --i) {
    const std::size_t base = linear_at[static_cast<std::size_t>(i)];
    const ParamLayer& weight = model.layers[base];
    const Matrix& x = cache.linear_inputs[static_cast<std::size_t>(i)];
    const std::size_t out_w = weight.shape[0];
    const std::size_t in_w = weight.shape[1];

    auto& grad_w = out.grad.layers[base].values;
    auto& grad_b = out.grad.layers[base + 1].values;
    for (std::size_t r = 0; r < d.rows; ++r) {
      for (std::size_t o = 0; o < out_w; ++o) {
        const double g = d(r, o);
        grad_b[o] += g;
        double* wrow = &grad_w[o * in_w];
        const double* xrow = &x.data[r * in_w];
        for (std::size_t c = 0; c < in_w; ++c) wrow[c] += g * xrow[c];
      }
    }

    if (i == 0) break;

    // propagate into the previous block: through this linear ...
    Matrix dx(d.rows, in_w, 0.0);
    for (std::size_t r = 0; r < d.rows; ++r) {
      for (std::size_t o = 0; o < out_w; ++o) {
        const double g = d(r, o);
        const double* wrow = &weight.values[o * in_w];
        double* dxrow = &dx.data[r * in_w];
        for (std::size_t c = 0; c < in_w; ++c) dxrow[c] += g * wrow[c];
      }
    }

    // ... then the previous activation ...
    const int prev = i - 1;
    const Matrix& pre = cache.pre_activation[static_cast<std::size_t>(prev)];
    for (std::size_t r = 0; r < dx.rows; ++r)
      for (std::size_t c = 0; c < dx.cols; ++c)
        dx(r, c) *= activate_grad(pre(r, c), spec.activation);

    // ... and the previous norm, when present
    if (has_norm(spec, prev)) {
      const std::size_t prev_base = linear_at[static_cast<std::size_t>(prev)];
      const ParamLayer& scale = model.layers[prev_base + 2];
      const NormCache& nc = cache.norms[static_cast<std::size_t>(prev)];
      auto& grad_scale = out.grad.layers[prev_base + 2].values;
      auto& grad_shift = out.grad.layers[prev_base + 3].values;
      const std::size_t f = dx.cols;
      const std::size_t rows = dx.rows;
      const double inv_rows = 1.0 / static_cast<double>(rows);

      std::vector<double> d_var(f, 0.0), d_mean(f, 0.0), sum_ghat(f, 0.0), sum_xmu(f, 0.0);
      Matrix ghat(rows, f);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < f; ++c) {
          const double g = dx(r, c);
          grad_scale[c] += g * nc.x_hat(r, c);
          grad_shift[c] += g;
          const double gh = g * scale.values[c];
          ghat(r, c) = gh;
          const double xmu = nc.x_hat(r, c) / nc.inv_std[c];
          sum_ghat[c] += gh;
          sum_xmu[c] += xmu;
          d_var[c] += gh * xmu;
        }
      }
      for (std::size_t c = 0; c < f; ++c) {
        d_var[c] *= -0.5 * nc.inv_std[c] * nc.inv_std[c] * nc.inv_std[c];
        d_mean[c] = -nc.inv_std[c] * sum_ghat[c] + d_var[c] * (-2.0 * inv_rows) * sum_xmu[c];
      }
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < f; ++c) {
          const double xmu = nc.x_hat(r, c) / nc.inv_std[c];
          dx(r, c) = ghat(r, c) * nc.inv_std[c] + d_var[c] * 2.0 * xmu * inv_rows +
                     d_mean[c] * inv_rows;
        }
      }
    }

    d = std::move(dx);
  }

  return out;
}

void sgd_step_inplace(ParameterSet& model, const ParameterSet& grad, double lr) {
  if (lr < 0.0) throw ConfigError("learning rate must be non-negative");
  require_same_structure(model, grad);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    auto& v = model.layers[i].values;
    const auto& g = grad.layers[i].values;
    for (std::size_t j = 0; j < v.size(); ++j) v[j] -= lr * g[j];
  }
}

ParameterSet sgd_step(const ParameterSet& model, const ParameterSet& grad, double lr) {
  ParameterSet out = model;
  sgd_step_inplace(out, grad, lr);
  return out;
}

void update_norm_stats(ParameterSet& model, const MlpSpec& spec, const ForwardCache& cache) {
  if (!spec.use_norm_layer) return;
  const int L = num_linear(spec);
  std::size_t idx = 0;
  for (int i = 0; i < L; ++i) {
    idx += 2;
    if (!has_norm(spec, i)) continue;
    idx += 2;  // scale, shift
    auto& run_mean = model.layers[idx++].values;
    auto& run_var = model.layers[idx++].values;
    const NormCache& nc = cache.norms[static_cast<std::size_t>(i)];
    const double m = spec.norm_momentum;
    for (std::size_t c = 0; c < run_mean.size(); ++c) {
      run_mean[c] = (1.0 - m) * run_mean[c] + m * nc.batch_mean[c];
      run_var[c] = (1.0 - m) * run_var[c] + m * nc.batch_var[c];
    }
  }
}

double exact_sensitivity_oracle(const ParameterSet& model, const MlpSpec& spec,
                                const Batch& batch, std::size_t flat_index) {
  if (flat_index >= model.total_count()) {
    throw InternalError("parameter index out of range");
  }
  Matrix base_logits = forward(model, spec, batch.features, NormMode::Batch);
  const double base_loss = cross_entropy(base_logits, batch.labels);

  ParameterSet probe = model;
  set_param(probe, flat_index, 0.0);
  Matrix probe_logits = forward(probe, spec, batch.features, NormMode::Batch);
  const double probe_loss = cross_entropy(probe_logits, batch.labels);

  return std::abs(base_loss - probe_loss);
}

}  // namespace fedcac
