#include "fedcac/params.hpp"

#include <cmath>
#include <cstring>

#include "fedcac/errors.hpp"

namespace fedcac {

std::size_t ParameterSet::total_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.size();
  return n;
}

bool ParameterSet::same_structure(const ParameterSet& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.name != b.name || a.kind != b.kind || a.shape != b.shape ||
        a.values.size() != b.values.size()) {
      return false;
    }
  }
  return true;
}

const ParamLayer* ParameterSet::find_layer(std::string_view name) const {
  for (const auto& layer : layers) {
    if (layer.name == name) return &layer;
  }
  return nullptr;
}

ParamLayer* ParameterSet::find_layer(std::string_view name) {
  for (auto& layer : layers) {
    if (layer.name == name) return &layer;
  }
  return nullptr;
}

void require_same_structure(const ParameterSet& a, const ParameterSet& b) {
  if (!a.same_structure(b)) {
    throw InternalError("parameter sets have mismatched structure");
  }
}

void validate(const ParameterSet& params) {
  for (const auto& layer : params.layers) {
    std::size_t prod = 1;
    for (std::size_t d : layer.shape) prod *= d;
    if (layer.shape.empty() || prod != layer.values.size()) {
      throw InternalError("layer '" + layer.name + "' shape does not match value count");
    }
    for (double v : layer.values) {
      if (!std::isfinite(v)) {
        throw InternalError("layer '" + layer.name + "' contains a non-finite value");
      }
    }
  }
}

double get_param(const ParameterSet& params, std::size_t flat_index) {
  for (const auto& layer : params.layers) {
    if (flat_index < layer.size()) return layer.values[flat_index];
    flat_index -= layer.size();
  }
  throw InternalError("parameter index out of range");
}

void set_param(ParameterSet& params, std::size_t flat_index, double value) {
  for (auto& layer : params.layers) {
    if (flat_index < layer.size()) {
      layer.values[flat_index] = value;
      return;
    }
    flat_index -= layer.size();
  }
  throw InternalError("parameter index out of range");
}

std::vector<double> flatten_weight_layers(const ParameterSet& params) {
  std::vector<double> out;
  for (const auto& layer : params.layers) {
    if (layer.kind != LayerKind::Weights) continue;
    out.insert(out.end(), layer.values.begin(), layer.values.end());
  }
  return out;
}

std::uint64_t content_digest(const ParameterSet& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto fold = [&h](const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& layer : params.layers) {
    fold(layer.name.data(), layer.name.size());
    for (double v : layer.values) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      fold(&bits, sizeof(bits));
    }
  }
  return h;
}

}  // namespace fedcac
