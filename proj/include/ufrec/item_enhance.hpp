#pragma once
// Item enhancement: neighbor scoring from co-occurrence statistics,
// candidate-set construction, attention aggregation of sampled neighbors,
// and the two transfer losses. The transfer net G_phi is trained on
// frequent items; less-frequent items are refined against a frozen copy.

#include <optional>
#include <random>

#include <json.hpp>

#include "ufrec/data.hpp"
#include "ufrec/partition.hpp"
#include "ufrec/tensor.hpp"

namespace ufrec {

constexpr double kSecondsPerDay = 86400.0;

struct CooccurrenceStats {
  // key = lo * 2^32 + hi over the unordered item pair
  std::unordered_map<std::uint64_t, double> mean_gap_days;  // T
  std::unordered_map<std::uint64_t, double> jaccard;        // S
  std::unordered_map<int, double> popularity;               // H in [0,1], 1 = most popular
  std::unordered_map<int, std::vector<int>> partners;       // co-occurring items per item

  static std::uint64_t key(int a, int b) {
    const std::uint64_t lo = static_cast<std::uint64_t>(std::min(a, b));
    const std::uint64_t hi = static_cast<std::uint64_t>(std::max(a, b));
    return (lo << 32) | hi;
  }
  double gap(int a, int b) const { return mean_gap_days.at(key(a, b)); }
  double sim(int a, int b) const { return jaccard.at(key(a, b)); }
};

// T: mean absolute gap in days between first occurrences per shared user.
// H: min-max normalized interaction count. S: Jaccard over user sets.
inline CooccurrenceStats build_cooccurrence_stats(const std::vector<UserSequence>& train,
                                                  int num_items) {
  CooccurrenceStats st;
  std::unordered_map<int, std::int64_t> counts;
  std::unordered_map<int, int> user_count;  // distinct users per item
  struct Acc {
    double gap_sum = 0.0;
    int users = 0;  // shared users (intersection size)
  };
  std::unordered_map<std::uint64_t, Acc> acc;

  for (const auto& s : train) {
    std::unordered_map<int, std::int64_t> first_ts;
    for (size_t i = 0; i < s.items.size(); ++i) {
      ++counts[s.items[i]];
      first_ts.try_emplace(s.items[i], s.timestamps[i]);
    }
    std::vector<std::pair<int, std::int64_t>> uniq(first_ts.begin(), first_ts.end());
    std::sort(uniq.begin(), uniq.end());
    for (const auto& [item, _] : uniq) ++user_count[item];
    for (size_t a = 0; a < uniq.size(); ++a)
      for (size_t b = a + 1; b < uniq.size(); ++b) {
        auto& e = acc[CooccurrenceStats::key(uniq[a].first, uniq[b].first)];
        e.gap_sum += std::abs(static_cast<double>(uniq[a].second - uniq[b].second)) / kSecondsPerDay;
        ++e.users;
      }
  }

  std::int64_t cmin = 0, cmax = 0;
  bool first = true;
  for (int i = 1; i <= num_items; ++i) {
    const std::int64_t c = counts.count(i) ? counts[i] : 0;
    if (first || c < cmin) cmin = c;
    if (first || c > cmax) cmax = c;
    first = false;
  }
  for (int i = 1; i <= num_items; ++i) {
    const std::int64_t c = counts.count(i) ? counts[i] : 0;
    st.popularity[i] = cmax == cmin ? 1.0 : static_cast<double>(c - cmin) / static_cast<double>(cmax - cmin);
  }

  for (const auto& [k, e] : acc) {
    const int a = static_cast<int>(k >> 32);
    const int b = static_cast<int>(k & 0xffffffffULL);
    st.mean_gap_days[k] = e.gap_sum / e.users;
    const int uni = user_count[a] + user_count[b] - e.users;
    st.jaccard[k] = uni > 0 ? static_cast<double>(e.users) / uni : 0.0;
    st.partners[a].push_back(b);
    st.partners[b].push_back(a);
  }
  for (auto& [item, ps] : st.partners) std::sort(ps.begin(), ps.end());
  return st;
}

// g(T) = 1 / (1 + ln(1 + T))
inline double time_decay(double t_days) { return 1.0 / (1.0 + std::log1p(t_days)); }

// phi(T, x) = (T + Theta) * exp(-(T + Theta) / (Gamma x)); the x -> 0+ limit
// is 0 and is used when a normalized factor vanishes.
inline double interaction_weight(double t_days, double x, double theta, double gamma) {
  if (x <= 0.0) return 0.0;
  const double a = t_days + theta;
  return a * std::exp(-a / (gamma * x));
}

inline double neighbor_score(double t_days, double h, double s, double theta, double gamma,
                             bool pop_sim = true) {
  double score = time_decay(t_days);
  if (pop_sim) {
    score += interaction_weight(t_days, h, theta, gamma);
    score += interaction_weight(t_days, s, theta, gamma);
  }
  return score;
}

inline double median_pair_gap(const CooccurrenceStats& st) {
  if (st.mean_gap_days.empty()) return 1.0;
  std::vector<double> gaps;
  gaps.reserve(st.mean_gap_days.size());
  for (const auto& [_, g] : st.mean_gap_days) gaps.push_back(g);
  std::sort(gaps.begin(), gaps.end());
  return gaps[gaps.size() / 2];
}

struct NeighborCandidateSet {
  int center = 0;
  std::vector<std::pair<int, double>> neighbors;  // (item, score), descending
};

// Top-L co-occurring partners by neighbor score; ties order by item id.
inline std::unordered_map<int, NeighborCandidateSet> build_candidate_sets(
    const CooccurrenceStats& st, double theta, double gamma, int top_l, bool pop_sim = true) {
  std::unordered_map<int, NeighborCandidateSet> out;
  for (const auto& [center, partners] : st.partners) {
    NeighborCandidateSet set;
    set.center = center;
    set.neighbors.reserve(partners.size());
    for (int j : partners) {
      const double s = neighbor_score(st.gap(center, j), st.popularity.at(j), st.sim(center, j),
                                      theta, gamma, pop_sim);
      set.neighbors.emplace_back(j, s);
    }
    std::sort(set.neighbors.begin(), set.neighbors.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (static_cast<int>(set.neighbors.size()) > top_l) set.neighbors.resize(top_l);
    out.emplace(center, std::move(set));
  }
  return out;
}

// K distinct uniform draws, or K draws with replacement when the set is
// smaller than K. Empty set -> nullopt (enhancement skipped this batch).
inline std::optional<std::vector<int>> sample_neighbors(const NeighborCandidateSet& set, int k,
                                                        std::mt19937_64& rng) {
  if (set.neighbors.empty()) return std::nullopt;
  std::vector<int> out;
  out.reserve(k);
  const int n = static_cast<int>(set.neighbors.size());
  if (n >= k) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < k; ++i) {
      std::uniform_int_distribution<int> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
      out.push_back(set.neighbors[idx[i]].first);
    }
  } else {
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int i = 0; i < k; ++i) out.push_back(set.neighbors[pick(rng)].first);
  }
  return out;
}

// Attention pooling: alpha = softmax_k(m_c . m_k), m_n = sum alpha_k m_k,
// and the concatenated update [m_c || m_n].
struct Aggregated {
  NodeId pooled;  // 1 x d
  NodeId updated; // 1 x 2d
};

inline Aggregated aggregate_neighbors(Tape& tp, NodeId center_row, NodeId neighbor_rows) {
  const NodeId dots = tp.matmul_nt(center_row, neighbor_rows);  // 1 x K
  const NodeId alpha = tp.softmax_rows(dots);
  const NodeId pooled = tp.matmul(alpha, neighbor_rows);  // 1 x d
  return {pooled, tp.concat_cols(center_row, pooled)};
}

// Affine transfer net G_phi : 2d -> d.
struct TransferNet {
  Tensor w;  // 2d x d
  Tensor b;  // 1 x d

  void build(int d) {
    w = Tensor(2 * d, d);
    b = Tensor(1, d);
  }
  void register_params(ParameterStore& store, const std::string& prefix, bool trainable = true) {
    store.add(prefix + ".w", w, trainable);
    store.add(prefix + ".b", b, trainable);
  }
  NodeId apply(Tape& tp, NodeId x) {
    return tp.add_rowvec(tp.matmul(x, tp.leaf(w)), tp.leaf(b));
  }
  NodeId apply_frozen(Tape& tp, NodeId x) const {
    return tp.add_rowvec(tp.matmul(x, tp.frozen(w)), tp.frozen(b));
  }
};

// w_i = sin(pi/2 * (e - e_b)/e_all + pi/2 * (F - F_min)/(F_max - F_min));
// the argument is deliberately unclamped so late epochs de-emphasize the
// easiest items again. Degenerate frequency range counts as 1.
inline double frequent_weight(int e, int e_b, int e_all, double f, double f_min, double f_max) {
  const double pi = 3.14159265358979323846;
  const double freq_term = f_max == f_min ? 1.0 : (f - f_min) / (f_max - f_min);
  return std::sin(pi / 2.0 * (static_cast<double>(e - e_b) / e_all) + pi / 2.0 * freq_term);
}

// eta = sin(pi/2 * (e - e_t)/e_all)
inline double lowfreq_weight(int e, int e_t, int e_all) {
  const double pi = 3.14159265358979323846;
  return std::sin(pi / 2.0 * (static_cast<double>(e - e_t) / e_all));
}

// lambda_f = w_i * ||m_i - G_phi([m_i || m_n])||^2
inline NodeId loss_frequent(Tape& tp, NodeId center_row, NodeId updated, TransferNet& net,
                            double w_i) {
  const NodeId mapped = net.apply(tp, updated);
  return tp.scale(tp.sq_diff_sum(center_row, mapped), w_i);
}

// lambda_l = eta * ||m_i - G_phi_frozen([m_i || m_n])||^2 ; the frozen net
// passes gradients through to the aggregation inputs but receives none.
inline NodeId loss_lowfreq(Tape& tp, NodeId center_row, NodeId updated, const TransferNet& frozen,
                           double eta) {
  const NodeId mapped = frozen.apply_frozen(tp, updated);
  return tp.scale(tp.sq_diff_sum(center_row, mapped), eta);
}

inline nlohmann::json neighbors_to_json(const std::unordered_map<int, NeighborCandidateSet>& sets) {
  nlohmann::json out = nlohmann::json::object();
  std::vector<int> keys;
  keys.reserve(sets.size());
  for (const auto& [k, _] : sets) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  for (int k : keys) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [j, s] : sets.at(k).neighbors) arr.push_back({j, s});
    out[std::to_string(k)] = std::move(arr);
  }
  return out;
}

}  // namespace ufrec
