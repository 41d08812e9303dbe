#include "fedcac/mask.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "fedcac/errors.hpp"

namespace fedcac {

namespace {

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t read_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return static_cast<std::uint32_t>(bytes[offset]) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 8) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 3]) << 24);
}

std::size_t clamp_count(double tau, std::size_t layer_size) {
  const long k = std::lround(tau * static_cast<double>(layer_size));
  if (k < 0) return 0;
  if (static_cast<std::size_t>(k) > layer_size) return layer_size;
  return static_cast<std::size_t>(k);
}

}  // namespace

std::size_t SensitivityMap::total_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.values.size();
  return n;
}

std::size_t CriticalMask::total_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.bits.size();
  return n;
}

std::size_t CriticalMask::popcount() const {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    for (std::uint8_t b : layer.bits) n += b;
  }
  return n;
}

bool CriticalMask::same_structure(const CriticalMask& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].bits.size() != other.layers[i].bits.size()) return false;
  }
  return true;
}

bool CriticalMask::bits_equal(const CriticalMask& other) const {
  if (!same_structure(other)) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].bits != other.layers[i].bits) return false;
  }
  return true;
}

SensitivityMap compute_sensitivity(const ParameterSet& theta_start,
                                   const ParameterSet& theta_end) {
  require_same_structure(theta_start, theta_end);
  SensitivityMap map;
  map.layers.reserve(theta_start.layers.size());
  for (std::size_t i = 0; i < theta_start.layers.size(); ++i) {
    const auto& start = theta_start.layers[i];
    const auto& end = theta_end.layers[i];
    SensitivityLayer layer;
    layer.kind = start.kind;
    layer.values.assign(start.size(), 0.0);
    if (start.kind == LayerKind::Weights) {
      for (std::size_t j = 0; j < start.size(); ++j) {
        layer.values[j] = std::abs((end.values[j] - start.values[j]) * end.values[j]);
      }
    }
    map.layers.push_back(std::move(layer));
  }
  return map;
}

CriticalMask select_critical(const SensitivityMap& sens, double tau, Selector selector,
                             Rng* rng) {
  if (tau < 0.0 || tau > 1.0) throw ConfigError("tau must lie in [0, 1]");
  if (selector == Selector::Random && rng == nullptr) {
    throw ConfigError("random selector needs an rng");
  }

  CriticalMask mask;
  mask.tau = tau;
  mask.layers.reserve(sens.layers.size());
  for (const auto& layer : sens.layers) {
    const std::size_t n = layer.values.size();
    MaskLayer out;
    if (layer.kind == LayerKind::Stats) {
      out.bits.assign(n, 1);
      mask.layers.push_back(std::move(out));
      continue;
    }
    out.bits.assign(n, 0);
    const std::size_t k = clamp_count(tau, n);
    if (k == 0) {
      mask.layers.push_back(std::move(out));
      continue;
    }
    if (selector == Selector::Random) {
      // partial Fisher-Yates for k distinct positions
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng->below(n - i));
        std::swap(idx[i], idx[j]);
        out.bits[idx[i]] = 1;
      }
    } else {
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      const auto& v = layer.values;
      if (selector == Selector::Sensitivity) {
        std::sort(idx.begin(), idx.end(), [&v](std::size_t a, std::size_t b) {
          if (v[a] != v[b]) return v[a] > v[b];
          return a < b;
        });
      } else {
        std::sort(idx.begin(), idx.end(), [&v](std::size_t a, std::size_t b) {
          if (v[a] != v[b]) return v[a] < v[b];
          return a < b;
        });
      }
      for (std::size_t i = 0; i < k; ++i) out.bits[idx[i]] = 1;
    }
    mask.layers.push_back(std::move(out));
  }
  return mask;
}

std::vector<std::uint8_t> serialize_mask(const CriticalMask& mask) {
  std::vector<std::uint8_t> out;
  append_u32(out, static_cast<std::uint32_t>(mask.layers.size()));
  for (const auto& layer : mask.layers) {
    append_u32(out, static_cast<std::uint32_t>(layer.bits.size()));
  }
  for (const auto& layer : mask.layers) {
    const std::size_t n = layer.bits.size();
    const std::size_t nbytes = (n + 7) / 8;
    const std::size_t base = out.size();
    out.resize(base + nbytes, 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (layer.bits[i]) out[base + i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    }
  }
  return out;
}

CriticalMask deserialize_mask(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw SerializationError("mask payload truncated: missing header");
  const std::uint32_t layer_count = read_u32(bytes, 0);
  std::size_t offset = 4;
  if (bytes.size() < offset + 4ull * layer_count) {
    throw SerializationError("mask payload truncated: missing layer lengths");
  }
  std::vector<std::uint32_t> lengths(layer_count);
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    lengths[i] = read_u32(bytes, offset);
    offset += 4;
  }
  CriticalMask mask;
  mask.tau = std::numeric_limits<double>::quiet_NaN();
  mask.layers.resize(layer_count);
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    const std::size_t n = lengths[i];
    const std::size_t nbytes = (n + 7) / 8;
    if (bytes.size() < offset + nbytes) {
      throw SerializationError("mask payload truncated in layer " + std::to_string(i));
    }
    auto& bits = mask.layers[i].bits;
    bits.assign(n, 0);
    for (std::size_t j = 0; j < n; ++j) {
      bits[j] = (bytes[offset + j / 8] >> (j % 8)) & 1u;
    }
    offset += nbytes;
  }
  if (offset != bytes.size()) {
    throw SerializationError("mask payload has trailing bytes");
  }
  return mask;
}

double overlap_ratio(const CriticalMask& a, const CriticalMask& b) {
  if (!a.same_structure(b)) throw ConfigError("masks have mismatched structure");
  const std::size_t n = a.total_count();
  if (n == 0) throw ConfigError("masks are empty");
  std::size_t hamming = 0;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& x = a.layers[i].bits;
    const auto& y = b.layers[i].bits;
    for (std::size_t j = 0; j < x.size(); ++j) hamming += x[j] != y[j];
  }
  return 1.0 - static_cast<double>(hamming) / (2.0 * static_cast<double>(n));
}

Matrix pairwise_overlap(const std::vector<CriticalMask>& masks) {
  const std::size_t n = masks.size();
  Matrix out(n, n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double o = overlap_ratio(masks[i], masks[j]);
      out(i, j) = o;
      out(j, i) = o;
    }
  }
  return out;
}

}  // namespace fedcac
