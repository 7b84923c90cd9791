#pragma once
// Sequence enhancement: derive a non-uniform subsequence from a uniform
// sequence (keep every less-frequent item, top up with sampled frequent
// ones to the minimum length M) and align the two encodings through the
// generator net under a curriculum weight.

#include <random>

#include "ufrec/partition.hpp"
#include "ufrec/tensor.hpp"
#include "ufrec/optim.hpp"

namespace ufrec {

struct AugmentedPair {
  std::vector<int> items;               // derived subsequence, original order
  std::vector<std::int64_t> timestamps; // carried over from the original
  std::vector<int> retained;            // strictly increasing indices into the original
};

// Eq-style generation: all less-frequent items survive; if fewer than M,
// (M - count) distinct frequent items are sampled uniformly from the
// sequence. Chronological order is preserved.
inline AugmentedPair generate_subsequence(const std::vector<int>& items,
                                          const std::vector<std::int64_t>& timestamps,
                                          const FrequencyIndex& freq, int m, std::mt19937_64& rng) {
  if (items.empty()) throw std::runtime_error("generate_subsequence: empty sequence");
  std::vector<int> low_idx, high_idx;
  for (size_t i = 0; i < items.size(); ++i) {
    if (freq.is_frequent(items[i]))
      high_idx.push_back(static_cast<int>(i));
    else
      low_idx.push_back(static_cast<int>(i));
  }
  std::vector<int> keep = low_idx;
  const int need = m - static_cast<int>(low_idx.size());
  if (need > 0 && !high_idx.empty()) {
    const int take = std::min<int>(need, static_cast<int>(high_idx.size()));
    for (int i = 0; i < take; ++i) {
      std::uniform_int_distribution<int> pick(i, static_cast<int>(high_idx.size()) - 1);
      std::swap(high_idx[i], high_idx[pick(rng)]);
      keep.push_back(high_idx[i]);
    }
  }
  std::sort(keep.begin(), keep.end());
  AugmentedPair out;
  out.retained = keep;
  out.items.reserve(keep.size());
  out.timestamps.reserve(keep.size());
  for (int i : keep) {
    out.items.push_back(items[i]);
    out.timestamps.push_back(timestamps[i]);
  }
  return out;
}

// Generator net G_theta : 2d -> 2d, one feed-forward layer with ReLU.
struct GeneratorNet {
  Tensor w;  // 2d x 2d
  Tensor b;  // 1 x 2d

  void build(int d) {
    w = Tensor(2 * d, 2 * d);
    b = Tensor(1, 2 * d);
  }
  void register_params(ParameterStore& store, const std::string& prefix) {
    store.add(prefix + ".w", w);
    store.add(prefix + ".b", b);
  }
  NodeId apply(Tape& tp, NodeId x) {
    return tp.relu(tp.add_rowvec(tp.matmul(x, tp.leaf(w)), tp.leaf(b)));
  }
};

// w_s = sin(pi/2 * (e - e_b)/e_all + pi/2 * (V_max - V_u)/(V_max - V_min));
// degenerate variance range counts as 1.
inline double sequence_weight(int e, int e_b, int e_all, double v_u, double v_min, double v_max) {
  const double pi = 3.14159265358979323846;
  const double uni_term = v_max == v_min ? 1.0 : (v_max - v_u) / (v_max - v_min);
  return std::sin(pi / 2.0 * (static_cast<double>(e - e_b) / e_all) + pi / 2.0 * uni_term);
}

// lambda_s = w_s * ||q_u - G_theta(q_hat_u)||^2 at the alignment site.
inline NodeId loss_sequence(Tape& tp, NodeId q_row, NodeId q_hat_row, GeneratorNet& gen,
                            double w_s) {
  const NodeId mapped = gen.apply(tp, q_hat_row);
  return tp.scale(tp.sq_diff_sum(q_row, mapped), w_s);
}

}  // namespace ufrec
