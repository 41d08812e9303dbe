#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedcac/matrix.hpp"
#include "fedcac/rng.hpp"

namespace fedcac {

struct Dataset {
  Matrix features;  // samples x dims
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
};

// A client's local data. Train and test label histograms are proportional
// within rounding; both are drawn without replacement from the source pool.
struct ClientShard {
  int client_id = 0;
  Dataset train;
  Dataset test;
};

enum class PartitionMode { Pathological, Dirichlet };

struct PartitionSpec {
  PartitionMode mode = PartitionMode::Pathological;
  int num_clients = 2;
  int classes_per_client = 2;  // pathological only
  double alpha = 0.1;          // dirichlet only
  int train_per_client = 500;
  int test_per_client = 100;
  std::uint64_t seed = 0;
};

// Isotropic unit-variance Gaussian blob per class; centers pairwise at
// distance >= separation.
Dataset generate_blobs(int num_classes, int dims, int samples_per_class,
                       double separation, std::uint64_t seed);

// Per-class sample pools, shuffled once; draws are without replacement so a
// sample lands in at most one shard.
class ClassPools {
 public:
  ClassPools(const Dataset& data, Rng& rng);

  // Throws PartitionError naming the class when it runs dry.
  std::vector<int> take(int cls, int count);
  std::size_t remaining(int cls) const;

 private:
  std::vector<std::vector<int>> pools_;
};

// Apportions `total` across weights with exact sum (largest remainder,
// ties to the lowest index).
std::vector<int> largest_remainder(const std::vector<double>& weights, int total);

// Every client holds exactly classes_per_client classes; classes are dealt
// round-robin from a shuffled list, so each class is used before any
// repeats.
std::vector<ClientShard> partition_pathological(const Dataset& data, const PartitionSpec& spec);

// Per-client class proportions are an independent Dir(alpha * p) draw, with
// p the global class prior; quotas met exactly by largest remainder.
std::vector<ClientShard> partition_dirichlet(const Dataset& data, const PartitionSpec& spec);

std::vector<ClientShard> make_partition(const Dataset& data, const PartitionSpec& spec);

// Builds one shard holding exactly the given classes (equal per-class
// quotas); used for planted-pair experiments.
ClientShard draw_shard_for_classes(const Dataset& data, const std::vector<int>& classes,
                                   int train_count, int test_count, int client_id,
                                   ClassPools& pools);

// CSV `client_id,class,count`, one row per (client, class) with a positive
// train-sample count. UTF-8, LF line endings.
void export_partition_viz(const std::vector<ClientShard>& shards, const std::string& path);

}  // namespace fedcac
