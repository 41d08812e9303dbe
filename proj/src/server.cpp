#include "fedcac/server.hpp"

#include <algorithm>
#include <string>

#include "fedcac/errors.hpp"

namespace fedcac {

ThresholdInfo compute_threshold(const Matrix& overlap, int round, double beta) {
  const std::size_t n = overlap.rows;
  if (n < 2 || overlap.cols != n) {
    throw ConfigError("threshold needs an NxN overlap matrix with N >= 2");
  }
  if (round < 1) throw ConfigError("round must be >= 1");
  if (beta < 1.0) throw ConfigError("beta must be >= 1");

  ThresholdInfo info;
  double sum = 0.0;
  double hi = overlap(0, 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      sum += overlap(i, j);
      hi = std::max(hi, overlap(i, j));
    }
  }
  info.o_avg = sum / static_cast<double>(n * (n - 1));
  info.o_max = hi;
  info.threshold = info.o_avg + (static_cast<double>(round) / beta) * (info.o_max - info.o_avg);
  return info;
}

std::vector<std::vector<int>> select_collaborators(const Matrix& overlap, double threshold) {
  const std::size_t n = overlap.rows;
  std::vector<std::vector<int>> sets(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && overlap(i, j) >= threshold) {
        sets[i].push_back(static_cast<int>(j));
      }
    }
  }
  return sets;
}

std::vector<std::vector<int>> fixed_number_collaborators(const Matrix& overlap, int k) {
  const std::size_t n = overlap.rows;
  if (k < 1 || static_cast<std::size_t>(k) > n - 1) {
    throw ConfigError("fixed collaborator count must lie in [1, N-1]");
  }
  std::vector<std::vector<int>> sets(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> others;
    others.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) others.push_back(static_cast<int>(j));
    }
    std::sort(others.begin(), others.end(), [&](int a, int b) {
      const double oa = overlap(i, static_cast<std::size_t>(a));
      const double ob = overlap(i, static_cast<std::size_t>(b));
      if (oa != ob) return oa > ob;
      return a < b;
    });
    others.resize(static_cast<std::size_t>(k));
    std::sort(others.begin(), others.end());
    sets[i] = std::move(others);
  }
  return sets;
}

ParameterSet aggregate_global(const std::vector<ParameterSet>& models) {
  if (models.empty()) throw ConfigError("nothing to aggregate");
  ParameterSet out = models[0];
  for (std::size_t m = 1; m < models.size(); ++m) {
    require_same_structure(out, models[m]);
    for (std::size_t i = 0; i < out.layers.size(); ++i) {
      auto& acc = out.layers[i].values;
      const auto& v = models[m].layers[i].values;
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += v[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(models.size());
  for (auto& layer : out.layers) {
    for (double& v : layer.values) v *= inv;
  }
  return out;
}

ParameterSet aggregate_custom(const std::vector<ParameterSet>& models,
                              const std::vector<int>& collaborators, int self_id) {
  if (self_id < 0 || static_cast<std::size_t>(self_id) >= models.size()) {
    throw ConfigError("self id out of range");
  }
  std::vector<int> members = collaborators;
  for (int j : members) {
    if (j == self_id) throw ConfigError("collaborator set must not contain the client itself");
    if (j < 0 || static_cast<std::size_t>(j) >= models.size()) {
      throw ConfigError("collaborator id " + std::to_string(j) + " out of range");
    }
  }
  members.push_back(self_id);
  std::sort(members.begin(), members.end());

  ParameterSet out = models[static_cast<std::size_t>(members[0])];
  for (std::size_t m = 1; m < members.size(); ++m) {
    const auto& model = models[static_cast<std::size_t>(members[m])];
    require_same_structure(out, model);
    for (std::size_t i = 0; i < out.layers.size(); ++i) {
      auto& acc = out.layers[i].values;
      const auto& v = model.layers[i].values;
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += v[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (auto& layer : out.layers) {
    for (double& v : layer.values) v *= inv;
  }
  return out;
}

}  // namespace fedcac
