#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fedcac/errors.hpp"
#include "fedcac/mask.hpp"
#include "fedcac/mlp.hpp"
#include "fedcac/rng.hpp"

using namespace fedcac;

namespace {

SensitivityMap map_of(std::vector<std::vector<double>> layers,
                      std::vector<LayerKind> kinds = {}) {
  SensitivityMap out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    SensitivityLayer layer;
    layer.kind = kinds.empty() ? LayerKind::Weights : kinds[i];
    layer.values = std::move(layers[i]);
    out.layers.push_back(std::move(layer));
  }
  return out;
}

CriticalMask random_mask(Rng& rng, int max_layers = 5, int max_size = 64) {
  const std::size_t n_layers = 1 + rng.below(static_cast<std::uint64_t>(max_layers));
  CriticalMask mask;
  mask.tau = 0.5;
  for (std::size_t i = 0; i < n_layers; ++i) {
    MaskLayer layer;
    const std::size_t n = rng.below(static_cast<std::uint64_t>(max_size) + 1);
    layer.bits.resize(n);
    for (auto& b : layer.bits) b = static_cast<std::uint8_t>(rng.below(2));
    mask.layers.push_back(std::move(layer));
  }
  return mask;
}

std::vector<std::uint8_t> layer_bits(const CriticalMask& mask, std::size_t i) {
  return mask.layers[i].bits;
}

}  // namespace

TEST_CASE("compute_sensitivity: zero drift gives zero scores") {
  MlpSpec spec{{3, 4, 2}, Activation::Relu, true};
  Rng rng(1);
  ParameterSet model = build_mlp(spec, rng);
  SensitivityMap sens = compute_sensitivity(model, model);
  for (const auto& layer : sens.layers) {
    for (double v : layer.values) CHECK(v == 0.0);
  }
}

TEST_CASE("compute_sensitivity: |drift * final value| element-wise") {
  MlpSpec spec{{1, 1}};
  Rng rng(2);
  ParameterSet start = build_mlp(spec, rng);
  start.layers[0].values = {1.5};
  start.layers[1].values = {-3.0};
  ParameterSet end = start;
  end.layers[0].values = {2.0};
  end.layers[1].values = {-1.0};
  SensitivityMap sens = compute_sensitivity(start, end);
  CHECK(sens.layers[0].values[0] == doctest::Approx(1.0).epsilon(1e-15));   // |0.5 * 2.0|
  CHECK(sens.layers[1].values[0] == doctest::Approx(2.0).epsilon(1e-15));   // |2.0 * -1.0|
}

TEST_CASE("compute_sensitivity: statistic layers are excluded") {
  MlpSpec spec{{2, 3, 2}, Activation::Relu, true};
  Rng rng(3);
  ParameterSet start = build_mlp(spec, rng);
  ParameterSet end = start;
  for (auto& layer : end.layers) {
    for (double& v : layer.values) v += 0.25;
  }
  SensitivityMap sens = compute_sensitivity(start, end);
  for (std::size_t i = 0; i < sens.layers.size(); ++i) {
    if (sens.layers[i].kind != LayerKind::Stats) continue;
    for (double v : sens.layers[i].values) CHECK(v == 0.0);
  }
}

TEST_CASE("compute_sensitivity: structure mismatch throws") {
  MlpSpec a{{2, 2}}, b{{2, 3}};
  Rng rng(4);
  ParameterSet ma = build_mlp(a, rng);
  ParameterSet mb = build_mlp(b, rng);
  CHECK_THROWS_AS(compute_sensitivity(ma, mb), InternalError);
}

TEST_CASE("select_critical: tau extremes") {
  SensitivityMap sens = map_of({{0.5, 0.1, 0.9}, {0.2, 0.7}});
  CriticalMask none = select_critical(sens, 0.0);
  CHECK(none.popcount() == 0);
  CriticalMask all = select_critical(sens, 1.0);
  CHECK(all.popcount() == 5);
}

TEST_CASE("select_critical: top half with ties broken by lowest index") {
  SensitivityMap sens = map_of({{0.9, 0.1, 0.5, 0.5}});
  CriticalMask mask = select_critical(sens, 0.5);
  CHECK(layer_bits(mask, 0) == std::vector<std::uint8_t>{1, 0, 1, 0});
}

TEST_CASE("select_critical: per-layer set-bit totals follow round(tau * size)") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::vector<double>> layers;
    const std::size_t n_layers = 1 + rng.below(4);
    for (std::size_t i = 0; i < n_layers; ++i) {
      std::vector<double> v(1 + rng.below(40));
      for (double& x : v) x = rng.uniform();
      layers.push_back(std::move(v));
    }
    const double tau = rng.uniform();
    CriticalMask mask = select_critical(map_of(std::move(layers)), tau);
    std::size_t expected = 0;
    for (const auto& layer : mask.layers) {
      const auto n = static_cast<double>(layer.bits.size());
      expected += static_cast<std::size_t>(std::lround(tau * n));
    }
    CHECK(mask.popcount() == expected);
  }
}

TEST_CASE("select_critical: invariant under positive rescaling") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(30);
    for (double& x : v) x = rng.uniform();
    const double tau = rng.uniform();
    const double scale = 0.01 + 50.0 * rng.uniform();
    std::vector<double> scaled = v;
    for (double& x : scaled) x *= scale;
    CriticalMask a = select_critical(map_of({v}), tau);
    CriticalMask b = select_critical(map_of({std::move(scaled)}), tau);
    CHECK(a.bits_equal(b));
  }
}

TEST_CASE("select_critical: statistic layers are always all-ones") {
  SensitivityMap sens = map_of({{0.4, 0.6}, {0.0, 0.0, 0.0}},
                               {LayerKind::Weights, LayerKind::Stats});
  CriticalMask mask = select_critical(sens, 0.0);
  CHECK(layer_bits(mask, 0) == std::vector<std::uint8_t>{0, 0});
  CHECK(layer_bits(mask, 1) == std::vector<std::uint8_t>{1, 1, 1});
}

TEST_CASE("select_critical: reverse selector takes the bottom of each layer") {
  SensitivityMap sens = map_of({{0.9, 0.1, 0.5, 0.5}});
  CriticalMask mask = select_critical(sens, 0.5, Selector::SensitivityReverse);
  CHECK(layer_bits(mask, 0) == std::vector<std::uint8_t>{0, 1, 1, 0});
}

TEST_CASE("select_critical: random selector is seeded and hits the exact count") {
  SensitivityMap sens = map_of({std::vector<double>(40, 0.25)});
  Rng r1(9), r2(9), r3(10);
  CriticalMask a = select_critical(sens, 0.3, Selector::Random, &r1);
  CriticalMask b = select_critical(sens, 0.3, Selector::Random, &r2);
  CriticalMask c = select_critical(sens, 0.3, Selector::Random, &r3);
  CHECK(a.popcount() == 12);
  CHECK(a.bits_equal(b));
  CHECK_FALSE(a.bits_equal(c));
  CHECK_THROWS_AS(select_critical(sens, 0.3, Selector::Random, nullptr), ConfigError);
}

TEST_CASE("select_critical: tau outside [0,1] is rejected") {
  SensitivityMap sens = map_of({{1.0}});
  CHECK_THROWS_AS(select_critical(sens, -0.1), ConfigError);
  CHECK_THROWS_AS(select_critical(sens, 1.1), ConfigError);
}

TEST_CASE("serialize_mask: ten ones pack to 0xFF 0x03") {
  CriticalMask mask;
  mask.layers.push_back(MaskLayer{std::vector<std::uint8_t>(10, 1)});
  const auto bytes = serialize_mask(mask);
  REQUIRE(bytes.size() == 4 + 4 + 2);
  CHECK(bytes[0] == 1);  // one layer, little endian
  CHECK(bytes[4] == 10);
  CHECK(bytes[8] == 0xFF);
  CHECK(bytes[9] == 0x03);
}

TEST_CASE("serialize_mask: empty mask is header only") {
  CriticalMask mask;
  const auto bytes = serialize_mask(mask);
  CHECK(bytes == std::vector<std::uint8_t>{0, 0, 0, 0});
}

TEST_CASE("serialize_mask: single 10000-bit layer costs about 3% of fp32 values") {
  CriticalMask mask;
  mask.layers.push_back(MaskLayer{std::vector<std::uint8_t>(10000, 0)});
  for (std::size_t i = 0; i < 10000; i += 3) mask.layers[0].bits[i] = 1;
  const auto bytes = serialize_mask(mask);
  CHECK(bytes.size() == 8 + 1250);
  const double ratio = static_cast<double>(bytes.size()) / (4.0 * 10000.0);
  CHECK(ratio > 0.031);
  CHECK(ratio < 0.032);
}

TEST_CASE("serialize/deserialize: identity over random masks") {
  Rng rng(123);
  for (int trial = 0; trial < 300; ++trial) {
    CriticalMask mask = random_mask(rng);
    CriticalMask back = deserialize_mask(serialize_mask(mask));
    CHECK(back.bits_equal(mask));
  }
}

TEST_CASE("deserialize_mask: truncated and oversized payloads are rejected") {
  CriticalMask mask;
  mask.layers.push_back(MaskLayer{{1, 0, 1, 1, 0, 1, 0, 1, 1}});
  auto bytes = serialize_mask(mask);

  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{6}, bytes.size() - 1}) {
    std::vector<std::uint8_t> short_bytes(bytes.begin(), bytes.begin() + cut);
    CHECK_THROWS_AS(deserialize_mask(short_bytes), SerializationError);
  }
  auto long_bytes = bytes;
  long_bytes.push_back(0);
  CHECK_THROWS_AS(deserialize_mask(long_bytes), SerializationError);
}

TEST_CASE("overlap_ratio: identical masks score 1") {
  Rng rng(7);
  CriticalMask mask = random_mask(rng);
  CHECK(overlap_ratio(mask, mask) == 1.0);
}

TEST_CASE("overlap_ratio: disjoint critical halves score 0.5") {
  CriticalMask a, b;
  a.layers.push_back(MaskLayer{std::vector<std::uint8_t>(100, 0)});
  b.layers.push_back(MaskLayer{std::vector<std::uint8_t>(100, 0)});
  for (std::size_t i = 0; i < 50; ++i) {
    a.layers[0].bits[i] = 1;
    b.layers[0].bits[50 + i] = 1;
  }
  CHECK(overlap_ratio(a, b) == 0.5);
}

TEST_CASE("overlap_ratio: 30 shared positions out of 50 score 0.8") {
  // explicit bit vectors; hamming counted by hand below as a cross-check
  CriticalMask a, b;
  a.layers.push_back(MaskLayer{std::vector<std::uint8_t>(100, 0)});
  b.layers.push_back(MaskLayer{std::vector<std::uint8_t>(100, 0)});
  for (std::size_t i = 0; i < 50; ++i) a.layers[0].bits[i] = 1;       // 0..49
  for (std::size_t i = 20; i < 70; ++i) b.layers[0].bits[i] = 1;     // 20..69, 30 shared
  std::size_t hamming = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    hamming += a.layers[0].bits[i] != b.layers[0].bits[i];
  }
  CHECK(hamming == 40);
  CHECK(overlap_ratio(a, b) == 1.0 - 40.0 / 200.0);
}

TEST_CASE("overlap_ratio: symmetric, monotone in shared positions, rejects mismatch") {
  Rng rng(8);
  CriticalMask a = random_mask(rng);
  CriticalMask b;
  for (const auto& layer : a.layers) {
    MaskLayer copy = layer;
    for (auto& bit : copy.bits) bit = static_cast<std::uint8_t>(rng.below(2));
    b.layers.push_back(std::move(copy));
  }
  CHECK(overlap_ratio(a, b) == overlap_ratio(b, a));

  // swapping one unshared critical bit into a shared slot cannot lower the score
  CriticalMask x, y;
  x.layers.push_back(MaskLayer{std::vector<std::uint8_t>(12, 0)});
  y.layers.push_back(MaskLayer{std::vector<std::uint8_t>(12, 0)});
  for (std::size_t i = 0; i < 4; ++i) x.layers[0].bits[i] = 1;   // {0,1,2,3}
  for (std::size_t i = 3; i < 7; ++i) y.layers[0].bits[i] = 1;   // {3,4,5,6}
  const double before = overlap_ratio(x, y);
  y.layers[0].bits[6] = 0;
  y.layers[0].bits[2] = 1;  // now shares {2,3}
  CHECK(overlap_ratio(x, y) >= before);

  CriticalMask other;
  other.layers.push_back(MaskLayer{std::vector<std::uint8_t>(5, 0)});
  CHECK_THROWS_AS(overlap_ratio(a, other), ConfigError);
}

TEST_CASE("pairwise_overlap: symmetric matrix with unit diagonal") {
  Rng rng(9);
  std::vector<CriticalMask> masks;
  CriticalMask base = random_mask(rng, 3, 32);
  for (int i = 0; i < 4; ++i) {
    CriticalMask m = base;
    for (auto& layer : m.layers) {
      for (auto& bit : layer.bits) {
        if (rng.below(4) == 0) bit = static_cast<std::uint8_t>(1 - bit);
      }
    }
    masks.push_back(std::move(m));
  }
  Matrix o = pairwise_overlap(masks);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(o(i, i) == 1.0);
    for (std::size_t j = 0; j < 4; ++j) CHECK(o(i, j) == o(j, i));
  }
}
