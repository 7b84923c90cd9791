#pragma once
// Uniformity and frequency partitioning. Sequences are ranked by the
// population variance of their consecutive time intervals (ascending);
// items by interaction count (descending). Labels are frozen after
// preprocessing and always computed on the train split.

#include <algorithm>
#include <iostream>

#include <json.hpp>

#include "ufrec/data.hpp"

namespace ufrec {

enum class PartitionMode { Ratio, Balanced };

inline const char* to_string(PartitionMode m) { return m == PartitionMode::Ratio ? "ratio" : "balanced"; }
inline PartitionMode partition_mode_from(const std::string& s) {
  if (s == "ratio") return PartitionMode::Ratio;
  if (s == "balanced") return PartitionMode::Balanced;
  throw std::runtime_error("partition_mode must be ratio|balanced, got " + s);
}

// Population variance of consecutive timestamp differences, in seconds^2.
inline double interval_variance(const std::vector<std::int64_t>& timestamps,
                                std::ostream* warn = nullptr) {
  if (timestamps.size() < 2) {
    if (warn) (*warn) << "interval_variance: fewer than 2 timestamps, defining variance 0\n";
    return 0.0;
  }
  const size_t k = timestamps.size() - 1;
  double mean = 0.0;
  for (size_t i = 0; i < k; ++i)
    mean += static_cast<double>(timestamps[i + 1] - timestamps[i]);
  mean /= static_cast<double>(k);
  double var = 0.0;
  for (size_t i = 0; i < k; ++i) {
    const double d = static_cast<double>(timestamps[i + 1] - timestamps[i]) - mean;
    var += d * d;
  }
  return var / static_cast<double>(k);
}

struct UniformityIndex {
  std::unordered_map<int, double> variance;  // user -> V_u
  std::unordered_map<int, int> rank;         // user -> 1-based ascending-variance rank
  std::unordered_map<int, bool> uniform;     // user -> label
  double v_max = 0.0;                        // extremes over ALL sequences
  double v_min = 0.0;

  bool is_uniform(int user) const {
    auto it = uniform.find(user);
    return it != uniform.end() && it->second;
  }
  bool known(int user) const { return uniform.count(user) > 0; }
};

// Ratio mode labels the first ceil(ratio*num_users) users of the ascending
// variance order uniform. Balanced mode picks the ascending-variance prefix
// whose cumulative interaction count is closest to half the total (first
// such prefix on ties). Variance ties order by user id.
inline UniformityIndex partition_sequences(const std::vector<UserSequence>& sequences, double ratio,
                                           PartitionMode mode = PartitionMode::Ratio) {
  if (sequences.size() < 2) throw std::runtime_error("partition_sequences: need at least 2 sequences");
  if (mode == PartitionMode::Ratio && (ratio <= 0.0 || ratio >= 1.0))
    throw std::runtime_error("partition_sequences: ratio must be in (0,1)");
  UniformityIndex out;
  struct Row {
    int user;
    double var;
    size_t len;
  };
  std::vector<Row> rows;
  rows.reserve(sequences.size());
  for (const auto& s : sequences) {
    rows.push_back({s.user, interval_variance(s.timestamps), s.items.size()});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.var != b.var) return a.var < b.var;
    return a.user < b.user;
  });
  out.v_min = rows.front().var;
  out.v_max = rows.back().var;

  size_t uniform_count = 0;
  if (mode == PartitionMode::Ratio) {
    // the 1e-9 slack absorbs product roundoff (0.1*30 rounds above 3.0)
    uniform_count = static_cast<size_t>(
        std::ceil(ratio * static_cast<double>(rows.size()) - 1e-9));
    uniform_count = std::min(uniform_count, rows.size());
  } else {
    std::int64_t total = 0;
    for (const auto& r : rows) total += static_cast<std::int64_t>(r.len);
    const double half = static_cast<double>(total) / 2.0;
    double best = std::abs(0.0 - half);
    std::int64_t cum = 0;
    for (size_t p = 1; p <= rows.size(); ++p) {
      cum += static_cast<std::int64_t>(rows[p - 1].len);
      const double diff = std::abs(static_cast<double>(cum) - half);
      if (diff < best) {
        best = diff;
        uniform_count = p;
      }
    }
  }
  for (size_t i = 0; i < rows.size(); ++i) {
    out.variance[rows[i].user] = rows[i].var;
    out.rank[rows[i].user] = static_cast<int>(i) + 1;
    out.uniform[rows[i].user] = i < uniform_count;
  }
  return out;
}

struct FrequencyIndex {
  std::unordered_map<int, std::int64_t> count;  // item -> F (train occurrences)
  std::unordered_map<int, bool> frequent;
  std::int64_t f_max = 0;  // extremes over the frequent-labeled subset
  std::int64_t f_min = 0;

  bool is_frequent(int item) const {
    auto it = frequent.find(item);
    return it != frequent.end() && it->second;
  }
};

inline std::unordered_map<int, std::int64_t> item_counts(const std::vector<UserSequence>& sequences,
                                                         int num_items) {
  std::unordered_map<int, std::int64_t> counts;
  for (int i = 1; i <= num_items; ++i) counts[i] = 0;
  for (const auto& s : sequences)
    for (int it : s.items) ++counts[it];
  return counts;
}

// Top ceil(ratio*num_items) items by descending count labeled frequent;
// count ties order by item id ascending.
inline FrequencyIndex partition_items(const std::unordered_map<int, std::int64_t>& counts,
                                      double ratio) {
  if (counts.size() < 2) throw std::runtime_error("partition_items: need at least 2 items");
  if (ratio <= 0.0 || ratio >= 1.0) throw std::runtime_error("partition_items: ratio must be in (0,1)");
  FrequencyIndex out;
  out.count = counts;
  struct Row {
    int item;
    std::int64_t c;
  };
  std::vector<Row> rows;
  rows.reserve(counts.size());
  for (const auto& [item, c] : counts) rows.push_back({item, c});
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.c != b.c) return a.c > b.c;
    return a.item < b.item;
  });
  size_t freq_count = static_cast<size_t>(std::ceil(ratio * static_cast<double>(rows.size()) - 1e-9));
  freq_count = std::min(freq_count, rows.size());
  freq_count = std::max<size_t>(freq_count, 1);
  out.f_max = rows.front().c;
  out.f_min = rows[freq_count - 1].c;
  for (size_t i = 0; i < rows.size(); ++i) out.frequent[rows[i].item] = i < freq_count;
  return out;
}

struct PartitionIndex {
  UniformityIndex users;
  FrequencyIndex items;
};

inline PartitionIndex build_partitions(const SplitDataset& split, double uniform_ratio,
                                       double frequent_ratio,
                                       PartitionMode mode = PartitionMode::Ratio) {
  PartitionIndex p;
  p.users = partition_sequences(split.train, uniform_ratio, mode);
  p.items = partition_items(item_counts(split.train, split.num_items), frequent_ratio);
  return p;
}

inline nlohmann::json partition_to_json(const PartitionIndex& p) {
  nlohmann::json users = nlohmann::json::object();
  for (const auto& [u, var] : p.users.variance) {
    users[std::to_string(u)] = {{"variance", var},
                                {"rank", p.users.rank.at(u)},
                                {"label", p.users.uniform.at(u) ? "uniform" : "non-uniform"}};
  }
  nlohmann::json items = nlohmann::json::object();
  for (const auto& [i, c] : p.items.count) {
    items[std::to_string(i)] = {{"count", c},
                                {"label", p.items.frequent.at(i) ? "frequent" : "less-frequent"}};
  }
  return {{"users", std::move(users)},
          {"items", std::move(items)},
          {"extremes",
           {{"V_max", p.users.v_max},
            {"V_min", p.users.v_min},
            {"F_max", p.items.f_max},
            {"F_min", p.items.f_min}}}};
}

inline PartitionIndex partition_from_json(const nlohmann::json& j) {
  PartitionIndex p;
  for (const auto& [key, val] : j.at("users").items()) {
    const int u = std::stoi(key);
    p.users.variance[u] = val.at("variance").get<double>();
    p.users.rank[u] = val.at("rank").get<int>();
    p.users.uniform[u] = val.at("label").get<std::string>() == "uniform";
  }
  for (const auto& [key, val] : j.at("items").items()) {
    const int i = std::stoi(key);
    p.items.count[i] = val.at("count").get<std::int64_t>();
    p.items.frequent[i] = val.at("label").get<std::string>() == "frequent";
  }
  p.users.v_max = j.at("extremes").at("V_max").get<double>();
  p.users.v_min = j.at("extremes").at("V_min").get<double>();
  p.items.f_max = j.at("extremes").at("F_max").get<std::int64_t>();
  p.items.f_min = j.at("extremes").at("F_min").get<std::int64_t>();
  return p;
}

}  // namespace ufrec
