#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fedcac {

// Weights carry gradients and take part in sensitivity ranking; Stats are
// normalization running statistics, which have no gradient and are always
// treated as critical when masks are built.
enum class LayerKind { Weights, Stats };

struct ParamLayer {
  std::string name;
  std::vector<std::size_t> shape;
  LayerKind kind = LayerKind::Weights;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

// A model's trainable state as an ordered list of named flat layers. Layer
// order, names, shapes and kinds are identical across all clients of a
// simulation; element-wise aggregation and masking rely on that.
struct ParameterSet {
  std::vector<ParamLayer> layers;

  std::size_t total_count() const;
  bool same_structure(const ParameterSet& other) const;

  const ParamLayer* find_layer(std::string_view name) const;
  ParamLayer* find_layer(std::string_view name);
};

// Throws InternalError when two sets cannot be combined element-wise.
void require_same_structure(const ParameterSet& a, const ParameterSet& b);

// Throws InternalError when shapes do not match value counts or any value
// is non-finite.
void validate(const ParameterSet& params);

// Flat global coordinates across all layers, in layer order.
double get_param(const ParameterSet& params, std::size_t flat_index);
void set_param(ParameterSet& params, std::size_t flat_index, double value);

// Values of gradient-bearing layers concatenated in layer order.
std::vector<double> flatten_weight_layers(const ParameterSet& params);

// FNV-1a over the value bit patterns; used by tests to detect mutation.
std::uint64_t content_digest(const ParameterSet& params);

}  // namespace fedcac
