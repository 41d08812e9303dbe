#pragma once

#include <vector>

#include "fedcac/matrix.hpp"
#include "fedcac/params.hpp"

namespace fedcac {

struct ThresholdInfo {
  double o_avg = 0.0;
  double o_max = 0.0;
  double threshold = 0.0;
};

// Threshold = o_avg + (t / beta) * (o_max - o_avg), with o_avg the mean and
// o_max the max of the overlap matrix over ordered pairs i != j. Past
// t = beta the threshold exceeds o_max (when o_max > o_avg), which empties
// every collaborator set.
ThresholdInfo compute_threshold(const Matrix& overlap, int round, double beta);

// C_i = { j != i : overlap(i, j) >= threshold }, each set ascending.
std::vector<std::vector<int>> select_collaborators(const Matrix& overlap, double threshold);

// C_i = the k highest-overlap clients j != i, ties to the lowest id.
std::vector<std::vector<int>> fixed_number_collaborators(const Matrix& overlap, int k);

// Uniform element-wise mean; statistic layers are averaged the same way.
ParameterSet aggregate_global(const std::vector<ParameterSet>& models);

// Uniform mean over {self} + collaborators, summed in ascending client id
// so that collaborators == everyone reproduces aggregate_global bit for bit.
ParameterSet aggregate_custom(const std::vector<ParameterSet>& models,
                              const std::vector<int>& collaborators, int self_id);

// Everything the server derives in one round.
struct RoundPlan {
  int round = 0;
  Matrix overlap;
  double o_avg = 0.0;
  double o_max = 0.0;
  double threshold = 0.0;
  bool has_threshold = false;  // set for the time-varying schedule only
  std::vector<std::vector<int>> collaborators;
  ParameterSet global_model;
  std::vector<ParameterSet> custom_models;
};

}  // namespace fedcac
