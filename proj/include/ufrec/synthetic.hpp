#pragma once
// Synthetic interaction generators for experiments and tests.
//
// The planted-structure corpus gives half the users regular interaction
// gaps (uniform) and half heavy-tailed gaps (non-uniform); uniform users
// follow their item cluster far more persistently, so their next item is
// genuinely easier to predict. Item popularity is Zipf-distributed, which
// plants the frequency skew. The cycle corpus makes the next item an
// (almost) deterministic function of the current one, which a sequence
// model can drive to near-perfect ranking.

#include <random>
#include <string>
#include <vector>

#include "ufrec/data.hpp"

namespace ufrec {
namespace synth {

struct PlantedConfig {
  int users = 400;
  int items = 240;
  int clusters = 12;
  int min_len = 10;
  int max_len = 28;
  double zipf = 1.1;
  double p_stay_uniform = 0.93;
  double p_stay_nonuniform = 0.40;
  std::int64_t t0 = 1'500'000'000;       // ~2017-07
  std::int64_t uniform_gap = 6 * 3600;   // regular cadence
  double uniform_jitter = 0.08;          // relative jitter
  double lognorm_mu = 9.0;               // heavy-tail gap scale (~2.5h median)
  double lognorm_sigma = 1.6;
  std::uint64_t seed = 7;
};

inline std::vector<RawInteraction> planted(const PlantedConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  const int per_cluster = (cfg.items + cfg.clusters - 1) / cfg.clusters;
  const int clusters = (cfg.items + per_cluster - 1) / per_cluster;  // fully covered clusters

  // Zipf weights over items within each cluster.
  std::vector<double> item_w(cfg.items);
  for (int i = 0; i < cfg.items; ++i)
    item_w[i] = 1.0 / std::pow(static_cast<double>(i % per_cluster) + 1.0, cfg.zipf);

  auto pick_in_cluster = [&](int cluster) {
    const int lo = cluster * per_cluster;
    const int hi = std::min(cfg.items, lo + per_cluster);
    std::vector<double> w(item_w.begin() + lo, item_w.begin() + hi);
    std::discrete_distribution<int> dist(w.begin(), w.end());
    return lo + dist(rng);
  };

  std::vector<RawInteraction> out;
  std::uniform_int_distribution<int> len_dist(cfg.min_len, cfg.max_len);
  std::uniform_int_distribution<int> cluster_dist(0, clusters - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int u = 0; u < cfg.users; ++u) {
    const bool uniform_user = u < cfg.users / 2;
    const double p_stay = uniform_user ? cfg.p_stay_uniform : cfg.p_stay_nonuniform;
    const int len = len_dist(rng);
    int cluster = cluster_dist(rng);
    std::int64_t t = cfg.t0 + static_cast<std::int64_t>(unit(rng) * 30.0 * 86400.0);
    for (int k = 0; k < len; ++k) {
      if (k > 0 && unit(rng) > p_stay) cluster = cluster_dist(rng);
      const int item = pick_in_cluster(cluster);
      out.push_back({"u" + std::to_string(u), "i" + std::to_string(item), t});
      std::int64_t gap;
      if (uniform_user) {
        const double jitter = 1.0 + cfg.uniform_jitter * (2.0 * unit(rng) - 1.0);
        gap = static_cast<std::int64_t>(static_cast<double>(cfg.uniform_gap) * jitter);
      } else {
        std::lognormal_distribution<double> ln(cfg.lognorm_mu, cfg.lognorm_sigma);
        gap = static_cast<std::int64_t>(ln(rng));
      }
      t += std::max<std::int64_t>(1, gap);
    }
  }
  return out;
}

struct CycleConfig {
  int users = 50;
  int items = 100;
  int min_len = 12;
  int max_len = 20;
  double noise = 0.02;  // probability of a random (non-successor) step
  std::int64_t t0 = 1'600'000'000;
  std::int64_t gap = 3600;
  std::uint64_t seed = 11;
};

// Items form one global successor cycle; each user walks a random arc of it.
inline std::vector<RawInteraction> cycle(const CycleConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::vector<int> succ(cfg.items);
  for (int i = 0; i < cfg.items; ++i) succ[i] = (i + 1) % cfg.items;

  std::vector<RawInteraction> out;
  std::uniform_int_distribution<int> len_dist(cfg.min_len, cfg.max_len);
  std::uniform_int_distribution<int> start_dist(0, cfg.items - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::int64_t> jit(0, cfg.gap / 4);

  for (int u = 0; u < cfg.users; ++u) {
    const int len = len_dist(rng);
    int item = start_dist(rng);
    std::int64_t t = cfg.t0 + u * 97;
    for (int k = 0; k < len; ++k) {
      out.push_back({"u" + std::to_string(u), "i" + std::to_string(item), t});
      item = unit(rng) < cfg.noise ? start_dist(rng) : succ[item];
      t += cfg.gap + jit(rng);
    }
  }
  return out;
}

inline void write_tsv(const std::vector<RawInteraction>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& r : rows) out << r.user << '\t' << r.item << '\t' << r.timestamp << '\n';
}

}  // namespace synth
}  // namespace ufrec
