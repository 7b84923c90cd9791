#pragma once
// Dual-channel mixture-attention sequence encoder. The input X is the item
// embedding row-concatenated with a time representation (interval buckets or
// calendar context) plus a position table. Each head blends two
// scaled-dot-product attention matrices -- one over the item half of X, one
// over the time half -- with a learned convex weight, applies a value and
// per-head output projection, and finishes with a ReLU feed-forward layer.
// Residual connections wrap both the attention and feed-forward stages.
// Causal masking forbids attending to future or padded positions.

#include "ufrec/config.hpp"
#include "ufrec/optim.hpp"
#include "ufrec/time_features.hpp"

namespace ufrec {

enum class Channel { Interval, Context };

inline const char* to_string(Channel c) { return c == Channel::Interval ? "interval" : "context"; }

struct EncoderBlock {
  std::vector<Tensor> wq_item, wk_item;  // per head, d x d_v
  std::vector<Tensor> wq_time, wk_time;  // per head, d x d_v
  std::vector<Tensor> wv;                // per head, 2d x d_v
  std::vector<Tensor> wo;                // per head, d_v x 2d
  std::vector<Tensor> mix;               // per head, 1x2 channel-mixture logits
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;     // 2d->2d->2d feed-forward
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;     // optional layer norms
};

struct EncoderParams {
  Tensor pos;  // N x 2d position table
  std::vector<EncoderBlock> blocks;
  int d = 0, n = 0, heads = 0, d_v = 0;
  bool layer_norm = false;

  void build(int d_, int n_, int heads_, int d_v_, int num_blocks, bool layer_norm_) {
    d = d_;
    n = n_;
    heads = heads_;
    d_v = d_v_;
    layer_norm = layer_norm_;
    pos = Tensor(n, 2 * d);
    blocks.resize(num_blocks);
    for (auto& b : blocks) {
      b.wq_item.assign(heads, Tensor(d, d_v));
      b.wk_item.assign(heads, Tensor(d, d_v));
      b.wq_time.assign(heads, Tensor(d, d_v));
      b.wk_time.assign(heads, Tensor(d, d_v));
      b.wv.assign(heads, Tensor(2 * d, d_v));
      b.wo.assign(heads, Tensor(d_v, 2 * d));
      b.mix.assign(heads, Tensor(1, 2));
      b.ff_w1 = Tensor(2 * d, 2 * d);
      b.ff_b1 = Tensor(1, 2 * d);
      b.ff_w2 = Tensor(2 * d, 2 * d);
      b.ff_b2 = Tensor(1, 2 * d);
      if (layer_norm) {
        b.ln1_g = Tensor(1, 2 * d);
        b.ln1_b = Tensor(1, 2 * d);
        b.ln2_g = Tensor(1, 2 * d);
        b.ln2_b = Tensor(1, 2 * d);
      }
    }
  }

  void register_params(ParameterStore& store, const std::string& prefix) {
    store.add(prefix + ".pos", pos);
    for (size_t bi = 0; bi < blocks.size(); ++bi) {
      auto& b = blocks[bi];
      const std::string p = prefix + ".b" + std::to_string(bi);
      for (int h = 0; h < heads; ++h) {
        const std::string hs = std::to_string(h);
        store.add(p + ".wq_item" + hs, b.wq_item[h]);
        store.add(p + ".wk_item" + hs, b.wk_item[h]);
        store.add(p + ".wq_time" + hs, b.wq_time[h]);
        store.add(p + ".wk_time" + hs, b.wk_time[h]);
        store.add(p + ".wv" + hs, b.wv[h]);
        store.add(p + ".wo" + hs, b.wo[h]);
        store.add(p + ".mix" + hs, b.mix[h]);
      }
      store.add(p + ".ff_w1", b.ff_w1);
      store.add(p + ".ff_b1", b.ff_b1);
      store.add(p + ".ff_w2", b.ff_w2);
      store.add(p + ".ff_b2", b.ff_b2);
      if (layer_norm) {
        store.add(p + ".ln1_g", b.ln1_g);
        store.add(p + ".ln1_b", b.ln1_b);
        store.add(p + ".ln2_g", b.ln2_g);
        store.add(p + ".ln2_b", b.ln2_b);
      }
    }
  }
};

// Time-embedding tables for both channels.
struct TimeTables {
  Tensor interval;                       // B x d
  Tensor year, month, day, weekday;      // cardinality x d each
  Tensor cal_w;                          // (fields*d) x d aggregation projection
  Tensor cal_b;                          // 1 x d
  std::string fields = "ymdw";
  int d = 0, buckets = 0, base_year = 1970, num_years = 60;

  void build(const TrainConfig& cfg) {
    d = cfg.d;
    buckets = cfg.buckets;
    base_year = cfg.base_year;
    num_years = cfg.num_years;
    fields = cfg.calendar_fields;
    interval = Tensor(buckets, d);
    year = Tensor(num_years, d);
    month = Tensor(12, d);
    day = Tensor(31, d);
    weekday = Tensor(7, d);
    cal_w = Tensor(static_cast<int>(fields.size()) * d, d);
    cal_b = Tensor(1, d);
  }

  void register_params(ParameterStore& store, const std::string& prefix) {
    store.add(prefix + ".interval", interval);
    if (fields.find('y') != std::string::npos) store.add(prefix + ".year", year);
    if (fields.find('m') != std::string::npos) store.add(prefix + ".month", month);
    if (fields.find('d') != std::string::npos) store.add(prefix + ".day", day);
    if (fields.find('w') != std::string::npos) store.add(prefix + ".weekday", weekday);
    store.add(prefix + ".cal_w", cal_w);
    store.add(prefix + ".cal_b", cal_b);
  }
};

// V_t rows: zero at the first valid position and padded slots, interval
// bucket embeddings elsewhere.
inline NodeId interval_matrix(Tape& tp, TimeTables& tt, const PaddedSeq& seq) {
  const std::vector<int> ids = padded_interval_ids(seq.timestamps, seq.mask, tt.buckets);
  return tp.embedding(tt.interval, ids, -1);
}

// C_t rows: projected concatenation of the configured calendar-field
// embeddings; exactly zero at padded slots.
inline NodeId context_matrix(Tape& tp, TimeTables& tt, const PaddedSeq& seq) {
  const CalendarIds cal = padded_calendar_ids(seq.timestamps, seq.mask, tt.base_year, tt.num_years);
  NodeId cat = -1;
  auto append = [&](Tensor& table, const std::vector<int>& ids) {
    const NodeId e = tp.embedding(table, ids, -1);
    cat = cat < 0 ? e : tp.concat_cols(cat, e);
  };
  for (char f : tt.fields) {
    switch (f) {
      case 'y': append(tt.year, cal.year); break;
      case 'm': append(tt.month, cal.month); break;
      case 'd': append(tt.day, cal.day); break;
      case 'w': append(tt.weekday, cal.weekday); break;
    }
  }
  const NodeId proj = tp.add_rowvec(tp.matmul(cat, tp.leaf(tt.cal_w)), tp.leaf(tt.cal_b));
  return tp.mask_rows(proj, seq.mask);  // bias must not leak into padding
}

// Single next-interaction time feature (1 x d) for candidate scoring.
inline NodeId next_time_feature(Tape& tp, TimeTables& tt, Channel ch, std::int64_t last_ts,
                                std::int64_t next_ts) {
  if (ch == Channel::Interval) {
    const std::int64_t tau = std::max<std::int64_t>(0, next_ts - last_ts);
    return tp.embedding(tt.interval, {interval_bucket(tau, tt.buckets)}, -1);
  }
  PaddedSeq one;
  one.timestamps = {next_ts};
  one.mask = {1};
  one.items = {1};
  one.valid = 1;
  return context_matrix(tp, tt, one);
}

inline std::vector<std::uint8_t> causal_mask(const std::vector<std::uint8_t>& valid) {
  const int n = static_cast<int>(valid.size());
  std::vector<std::uint8_t> allow(static_cast<size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    for (int k = 0; k <= i; ++k)
      if (valid[k]) allow[static_cast<size_t>(i) * n + k] = 1;
  }
  return allow;
}

// Core mixture-attention encoder: h_u (N x d) and a time channel matrix
// (N x d) in, q_u (N x 2d) out. Rows at padded positions are exactly zero.
inline NodeId mixture_attention(Tape& tp, NodeId h_u, NodeId channel_emb, EncoderParams& ep,
                                const std::vector<std::uint8_t>& valid) {
  const int n = tp.rows(h_u);
  const int d = tp.cols(h_u);
  if (n != ep.n || d != ep.d)
    throw std::runtime_error("mixture_attention: input " + tp.shape_str(h_u) + " does not match encoder [" +
                             std::to_string(ep.n) + "x" + std::to_string(ep.d) + "]");
  const std::vector<std::uint8_t> allow = causal_mask(valid);
  const double inv_sqrt_dv = 1.0 / std::sqrt(static_cast<double>(ep.d_v));

  NodeId x = tp.add(tp.concat_cols(h_u, channel_emb), tp.leaf(ep.pos));
  x = tp.mask_rows(x, valid);

  for (auto& b : ep.blocks) {
    const NodeId x_item = tp.slice_cols(x, 0, d);
    const NodeId x_time = tp.slice_cols(x, d, 2 * d);
    NodeId sal = -1;
    for (int h = 0; h < ep.heads; ++h) {
      const NodeId qi = tp.matmul(x_item, tp.leaf(b.wq_item[h]));
      const NodeId ki = tp.matmul(x_item, tp.leaf(b.wk_item[h]));
      const NodeId qt = tp.matmul(x_time, tp.leaf(b.wq_time[h]));
      const NodeId kt = tp.matmul(x_time, tp.leaf(b.wk_time[h]));
      const NodeId a_item = tp.softmax_rows(tp.scale(tp.matmul_nt(qi, ki), inv_sqrt_dv), &allow);
      const NodeId a_time = tp.softmax_rows(tp.scale(tp.matmul_nt(qt, kt), inv_sqrt_dv), &allow);
      const NodeId p = tp.softmax_rows(tp.leaf(b.mix[h]));
      const NodeId mixed = tp.add(tp.scale_by(a_item, tp.entry(p, 0)),
                                  tp.scale_by(a_time, tp.entry(p, 1)));
      const NodeId head = tp.matmul(tp.matmul(mixed, tp.matmul(x, tp.leaf(b.wv[h]))), tp.leaf(b.wo[h]));
      sal = sal < 0 ? head : tp.add(sal, head);
    }
    NodeId z = tp.add(x, sal);
    if (ep.layer_norm) z = tp.layer_norm(z, tp.leaf(b.ln1_g), tp.leaf(b.ln1_b));
    const NodeId hidden = tp.relu(tp.add_rowvec(tp.matmul(z, tp.leaf(b.ff_w1)), tp.leaf(b.ff_b1)));
    const NodeId ffl = tp.add_rowvec(tp.matmul(hidden, tp.leaf(b.ff_w2)), tp.leaf(b.ff_b2));
    NodeId q = tp.add(z, ffl);
    if (ep.layer_norm) q = tp.layer_norm(q, tp.leaf(b.ln2_g), tp.leaf(b.ln2_b));
    x = tp.mask_rows(q, valid);
  }
  return x;
}

// Scores = q_last . [m_i || t_next] for each candidate; the time feature is
// shared across candidates (it depends on the prediction time, not the item).
inline NodeId score_candidates(Tape& tp, NodeId q_last, Tensor& item_emb,
                               const std::vector<int>& candidates, NodeId t_next) {
  const NodeId cand = tp.embedding(item_emb, candidates, 0);
  const NodeId times = tp.repeat_row(t_next, static_cast<int>(candidates.size()));
  return tp.matmul_nt(q_last, tp.concat_cols(cand, times));  // 1 x |candidates|
}

}  // namespace ufrec
