#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedcac/matrix.hpp"
#include "fedcac/params.hpp"
#include "fedcac/rng.hpp"

namespace fedcac {

// How critical positions are picked inside each layer.
enum class Selector { Sensitivity, Random, SensitivityReverse };

struct SensitivityLayer {
  LayerKind kind = LayerKind::Weights;
  std::vector<double> values;  // all >= 0
};

// One non-negative score per parameter, mirroring the ParameterSet layout.
struct SensitivityMap {
  std::vector<SensitivityLayer> layers;

  std::size_t total_count() const;
};

struct MaskLayer {
  std::vector<std::uint8_t> bits;  // one flag per parameter
};

// One bit per parameter, aligned with the ParameterSet by layer index.
// Gradient-bearing layers hold exactly round(tau * layer_size) set bits;
// normalization statistics are always all-ones.
struct CriticalMask {
  std::vector<MaskLayer> layers;
  double tau = 0.0;  // metadata only; not part of the wire format

  std::size_t total_count() const;
  std::size_t popcount() const;
  bool same_structure(const CriticalMask& other) const;
  bool bits_equal(const CriticalMask& other) const;
};

// Score = |(end - start) * end| element-wise; statistic layers score zero.
SensitivityMap compute_sensitivity(const ParameterSet& theta_start,
                                   const ParameterSet& theta_end);

// Per layer, marks k = clamp(round(tau * size), 0, size) positions:
// the k highest scores for Sensitivity (ties to the lowest index), the k
// lowest for SensitivityReverse, or k uniform draws for Random (which
// requires an rng). Statistic layers come out all-ones.
CriticalMask select_critical(const SensitivityMap& sens, double tau,
                             Selector selector = Selector::Sensitivity,
                             Rng* rng = nullptr);

// Wire format: uint32 LE layer count, then one uint32 LE bit length per
// layer, then each layer's bits packed LSB-first into ceil(len/8) bytes
// (padding bits zero).
std::vector<std::uint8_t> serialize_mask(const CriticalMask& mask);

// Rejects truncated or oversized payloads. The result carries no tau.
CriticalMask deserialize_mask(std::span<const std::uint8_t> bytes);

// Similarity of two critical-position layouts:
//   1 - hamming(a, b) / (2n),
// which is 1 for identical masks and grows with every shared critical
// position at fixed per-layer popcounts.
double overlap_ratio(const CriticalMask& a, const CriticalMask& b);

// Symmetric N x N overlap matrix; diagonal left at 1.
Matrix pairwise_overlap(const std::vector<CriticalMask>& masks);

}  // namespace fedcac
