#include "fedcac/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fedcac/errors.hpp"
#include "fedcac/io.hpp"

namespace fedcac {

namespace {

double sq_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

Dataset gather(const Dataset& source, const std::vector<int>& rows) {
  Dataset out;
  out.num_classes = source.num_classes;
  out.features = Matrix(rows.size(), source.features.cols);
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = static_cast<std::size_t>(rows[i]);
    for (std::size_t c = 0; c < source.features.cols; ++c) {
      out.features(i, c) = source.features(r, c);
    }
    out.labels[i] = source.labels[r];
  }
  return out;
}

std::vector<double> class_prior(const Dataset& data) {
  std::vector<double> counts(static_cast<std::size_t>(data.num_classes), 0.0);
  for (int y : data.labels) counts[static_cast<std::size_t>(y)] += 1.0;
  const double total = static_cast<double>(data.labels.size());
  for (double& c : counts) c /= total;
  return counts;
}

// One Dirichlet(alpha * p) draw via log-space gamma draws; stays stable for
// concentrations far below 1, where plain gamma draws underflow to zero.
std::vector<double> dirichlet_draw(Rng& rng, double alpha, const std::vector<double>& prior) {
  std::vector<double> logs(prior.size());
  for (std::size_t c = 0; c < prior.size(); ++c) {
    logs[c] = rng.log_gamma_draw(alpha * prior[c]);
  }
  const double hi = *std::max_element(logs.begin(), logs.end());
  std::vector<double> q(prior.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < q.size(); ++c) {
    q[c] = std::exp(logs[c] - hi);
    sum += q[c];
  }
  for (double& v : q) v /= sum;
  return q;
}

ClientShard build_shard(const Dataset& data, int client_id, const std::vector<int>& train_counts,
                        const std::vector<int>& test_counts, ClassPools& pools) {
  std::vector<int> train_rows, test_rows;
  for (int c = 0; c < data.num_classes; ++c) {
    if (train_counts[static_cast<std::size_t>(c)] > 0) {
      auto rows = pools.take(c, train_counts[static_cast<std::size_t>(c)]);
      train_rows.insert(train_rows.end(), rows.begin(), rows.end());
    }
    if (test_counts[static_cast<std::size_t>(c)] > 0) {
      auto rows = pools.take(c, test_counts[static_cast<std::size_t>(c)]);
      test_rows.insert(test_rows.end(), rows.begin(), rows.end());
    }
  }
  ClientShard shard;
  shard.client_id = client_id;
  shard.train = gather(data, train_rows);
  shard.test = gather(data, test_rows);
  return shard;
}

void check_partition_args(const Dataset& data, const PartitionSpec& spec) {
  if (spec.num_clients < 1) throw ConfigError("need at least one client");
  if (spec.train_per_client < 1 || spec.test_per_client < 0) {
    throw ConfigError("per-client sample quotas must be positive");
  }
  if (data.num_classes < 1 || data.size() == 0) {
    throw DataError("source dataset is empty");
  }
}

}  // namespace

Dataset generate_blobs(int num_classes, int dims, int samples_per_class,
                       double separation, std::uint64_t seed) {
  if (num_classes < 1 || dims < 1 || samples_per_class < 1 || separation <= 0.0) {
    throw ConfigError("blob parameters must be positive");
  }
  Rng rng(seed);

  // Rejection-sample centers in a [-separation, separation] cube so typical
  // center distances track the knob; the cube grows if placement stalls, so
  // the pairwise minimum always ends up satisfied.
  std::vector<std::vector<double>> centers;
  double half_width = separation;
  const double min_sq = separation * separation;
  while (static_cast<int>(centers.size()) < num_classes) {
    bool placed = false;
    for (int attempt = 0; attempt < 256 && !placed; ++attempt) {
      std::vector<double> cand(static_cast<std::size_t>(dims));
      for (double& v : cand) v = rng.uniform(-half_width, half_width);
      placed = std::all_of(centers.begin(), centers.end(), [&](const auto& c) {
        return sq_distance(c, cand) >= min_sq;
      });
      if (placed) centers.push_back(std::move(cand));
    }
    if (!placed) half_width *= 2.0;
  }

  Dataset out;
  out.num_classes = num_classes;
  const std::size_t total = static_cast<std::size_t>(num_classes) *
                            static_cast<std::size_t>(samples_per_class);
  out.features = Matrix(total, static_cast<std::size_t>(dims));
  out.labels.resize(total);
  std::size_t row = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (int s = 0; s < samples_per_class; ++s, ++row) {
      for (std::size_t d = 0; d < static_cast<std::size_t>(dims); ++d) {
        out.features(row, d) = centers[static_cast<std::size_t>(c)][d] + rng.normal();
      }
      out.labels[row] = c;
    }
  }
  return out;
}

ClassPools::ClassPools(const Dataset& data, Rng& rng) {
  pools_.resize(static_cast<std::size_t>(data.num_classes));
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    pools_[static_cast<std::size_t>(data.labels[i])].push_back(static_cast<int>(i));
  }
  for (auto& pool : pools_) rng.shuffle(pool);
}

std::vector<int> ClassPools::take(int cls, int count) {
  auto& pool = pools_[static_cast<std::size_t>(cls)];
  if (static_cast<std::size_t>(count) > pool.size()) {
    throw PartitionError("class " + std::to_string(cls) + " exhausted: need " +
                         std::to_string(count) + ", have " + std::to_string(pool.size()));
  }
  std::vector<int> rows(pool.end() - count, pool.end());
  pool.resize(pool.size() - static_cast<std::size_t>(count));
  return rows;
}

std::size_t ClassPools::remaining(int cls) const {
  return pools_[static_cast<std::size_t>(cls)].size();
}

std::vector<int> largest_remainder(const std::vector<double>& weights, int total) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (wsum <= 0.0) throw InternalError("largest_remainder needs a positive weight sum");
  std::vector<int> counts(weights.size(), 0);
  std::vector<std::pair<double, std::size_t>> rema;
  int assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double share = weights[i] / wsum * static_cast<double>(total);
    counts[i] = static_cast<int>(std::floor(share));
    assigned += counts[i];
    rema.emplace_back(share - std::floor(share), i);
  }
  std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int k = 0; k < total - assigned; ++k) {
    counts[rema[static_cast<std::size_t>(k)].second] += 1;
  }
  return counts;
}

std::vector<ClientShard> partition_pathological(const Dataset& data, const PartitionSpec& spec) {
  check_partition_args(data, spec);
  if (spec.classes_per_client < 1 || spec.classes_per_client > data.num_classes) {
    throw ConfigError("classes_per_client must lie in [1, num_classes]");
  }

  Rng rng(spec.seed);
  std::vector<int> order(static_cast<std::size_t>(data.num_classes));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  // Deal the shuffled class list cyclically; a client never repeats a class.
  std::vector<std::vector<int>> assignment(static_cast<std::size_t>(spec.num_clients));
  std::size_t pos = 0;
  for (auto& classes : assignment) {
    while (static_cast<int>(classes.size()) < spec.classes_per_client) {
      const int cls = order[pos % order.size()];
      ++pos;
      if (std::find(classes.begin(), classes.end(), cls) == classes.end()) {
        classes.push_back(cls);
      }
    }
    std::sort(classes.begin(), classes.end());
  }

  ClassPools pools(data, rng);
  std::vector<ClientShard> shards;
  shards.reserve(assignment.size());
  for (int i = 0; i < spec.num_clients; ++i) {
    const auto& classes = assignment[static_cast<std::size_t>(i)];
    const std::vector<double> uniform(classes.size(), 1.0);
    const auto train_split = largest_remainder(uniform, spec.train_per_client);
    const auto test_split = largest_remainder(uniform, spec.test_per_client);
    std::vector<int> train_counts(static_cast<std::size_t>(data.num_classes), 0);
    std::vector<int> test_counts(static_cast<std::size_t>(data.num_classes), 0);
    for (std::size_t k = 0; k < classes.size(); ++k) {
      train_counts[static_cast<std::size_t>(classes[k])] = train_split[k];
      test_counts[static_cast<std::size_t>(classes[k])] = test_split[k];
    }
    shards.push_back(build_shard(data, i, train_counts, test_counts, pools));
  }
  return shards;
}

std::vector<ClientShard> partition_dirichlet(const Dataset& data, const PartitionSpec& spec) {
  check_partition_args(data, spec);
  if (spec.alpha <= 0.0) throw ConfigError("dirichlet alpha must be positive");

  Rng rng(spec.seed);
  const std::vector<double> prior = class_prior(data);
  ClassPools pools(data, rng);

  std::vector<ClientShard> shards;
  shards.reserve(static_cast<std::size_t>(spec.num_clients));
  for (int i = 0; i < spec.num_clients; ++i) {
    const std::vector<double> q = dirichlet_draw(rng, spec.alpha, prior);
    const auto train_counts = largest_remainder(q, spec.train_per_client);
    const auto test_counts = largest_remainder(q, spec.test_per_client);
    shards.push_back(build_shard(data, i, train_counts, test_counts, pools));
  }
  return shards;
}

std::vector<ClientShard> make_partition(const Dataset& data, const PartitionSpec& spec) {
  return spec.mode == PartitionMode::Pathological ? partition_pathological(data, spec)
                                                  : partition_dirichlet(data, spec);
}

ClientShard draw_shard_for_classes(const Dataset& data, const std::vector<int>& classes,
                                   int train_count, int test_count, int client_id,
                                   ClassPools& pools) {
  if (classes.empty()) throw ConfigError("shard needs at least one class");
  const std::vector<double> uniform(classes.size(), 1.0);
  const auto train_split = largest_remainder(uniform, train_count);
  const auto test_split = largest_remainder(uniform, test_count);
  std::vector<int> train_counts(static_cast<std::size_t>(data.num_classes), 0);
  std::vector<int> test_counts(static_cast<std::size_t>(data.num_classes), 0);
  for (std::size_t k = 0; k < classes.size(); ++k) {
    train_counts[static_cast<std::size_t>(classes[k])] = train_split[k];
    test_counts[static_cast<std::size_t>(classes[k])] = test_split[k];
  }
  return build_shard(data, client_id, train_counts, test_counts, pools);
}

void export_partition_viz(const std::vector<ClientShard>& shards, const std::string& path) {
  std::ostringstream out;
  out << "client_id,class,count\n";
  for (const auto& shard : shards) {
    std::vector<int> counts(static_cast<std::size_t>(shard.train.num_classes), 0);
    for (int y : shard.train.labels) counts[static_cast<std::size_t>(y)] += 1;
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (counts[c] > 0) {
        out << shard.client_id << ',' << c << ',' << counts[c] << '\n';
      }
    }
  }
  atomic_write_text(path, out.str());
}

}  // namespace fedcac
