#include <catch2/catch_amalgamated.hpp>

#include "ufrec/gradcheck.hpp"
#include "ufrec/model.hpp"
#include "ufrec/time_features.hpp"

using namespace ufrec;

namespace {

TrainConfig tiny_cfg() {
  TrainConfig cfg;
  cfg.d = 8;
  cfg.seq_len = 6;
  cfg.heads = 2;
  cfg.d_v = 8;
  cfg.buckets = 8;
  cfg.num_years = 4;
  cfg.base_year = 1970;
  cfg.seed = 123;
  return cfg;
}

PaddedSeq simple_seq(int n, int valid, std::int64_t gap = 3600) {
  std::vector<int> items;
  std::vector<std::int64_t> ts;
  for (int i = 0; i < valid; ++i) {
    items.push_back(1 + (i % 3));
    ts.push_back(1000000 + i * gap);
  }
  return pad_truncate(items, ts, n);
}

}  // namespace

TEST_CASE("interval bucketing: zero, minute, clamp, monotone") {
  CHECK(interval_bucket(0, 64) == 0);
  CHECK(interval_bucket(59, 64) == 0);
  // oracle: log2(1 + 60/60) = 1
  CHECK(interval_bucket(60, 64) == 1);
  CHECK(interval_bucket(3600, 64) == static_cast<int>(std::floor(std::log2(61.0))));
  CHECK(interval_bucket(std::int64_t{100} * 365 * 86400, 8) == 7);  // clamped
  int prev = 0;
  for (std::int64_t tau = 0; tau < 1000000; tau += 997) {
    const int b = interval_bucket(tau, 64);
    CHECK(b >= prev);
    prev = b;
  }
}

TEST_CASE("calendar decomposition matches known dates") {
  const CalendarParts epoch = calendar_of(0);
  CHECK(epoch.year == 1970);
  CHECK(epoch.month == 1);
  CHECK(epoch.day == 1);
  CHECK(epoch.weekday == 4);  // Thursday

  // 2017-07-14 02:40:00 UTC
  const CalendarParts c = calendar_of(1500000000);
  CHECK(c.year == 2017);
  CHECK(c.month == 7);
  CHECK(c.day == 14);
  CHECK(c.weekday == 5);  // Friday
}

TEST_CASE("compute_time_features rejects decreasing timestamps") {
  CHECK_THROWS(compute_time_features({100, 50}, 64));
  const TimeFeatures f = compute_time_features({0, 0, 60}, 64);
  CHECK(f.intervals == std::vector<std::int64_t>{0, 60});
  CHECK(f.buckets == std::vector<int>{0, 1});
  CHECK(f.calendar.size() == 3);
}

TEST_CASE("embed_time: padding rows are zero, shapes are N x d") {
  TrainConfig cfg = tiny_cfg();
  ModelState model(cfg, 10);
  const PaddedSeq ps = simple_seq(6, 3);

  Tape tp;
  const NodeId vt = interval_matrix(tp, model.time, ps);
  const NodeId ct = context_matrix(tp, model.time, ps);
  CHECK(tp.rows(vt) == 6);
  CHECK(tp.cols(vt) == 8);
  CHECK(tp.rows(ct) == 6);
  CHECK(tp.cols(ct) == 8);

  const auto& v = tp.val(vt);
  const auto& c = tp.val(ct);
  for (int r = 0; r < 3; ++r)  // padded slots
    for (int k = 0; k < 8; ++k) {
      CHECK(v[r * 8 + k] == 0.0);
      CHECK(c[r * 8 + k] == 0.0);
    }
  // first valid position has no preceding interval -> zero row of V_t
  for (int k = 0; k < 8; ++k) CHECK(v[3 * 8 + k] == 0.0);
  // later valid rows carry bucket embeddings
  double norm = 0;
  for (int k = 0; k < 8; ++k) norm += std::abs(v[4 * 8 + k]);
  CHECK(norm > 0.0);

  // identical timestamps at two positions give identical context rows
  std::vector<int> items = {1, 2, 3};
  std::vector<std::int64_t> same_ts = {5000, 5000, 5000};
  const PaddedSeq ps2 = pad_truncate(items, same_ts, 6);
  Tape tp2;
  const NodeId ct2 = context_matrix(tp2, model.time, ps2);
  const auto& c2 = tp2.val(ct2);
  for (int k = 0; k < 8; ++k) {
    CHECK(c2[3 * 8 + k] == c2[4 * 8 + k]);
    CHECK(c2[4 * 8 + k] == c2[5 * 8 + k]);
  }

  // all-padding sequence embeds to all zeros
  PaddedSeq pad;
  pad.items.assign(6, 0);
  pad.timestamps.assign(6, 0);
  pad.mask.assign(6, 0);
  pad.valid = 0;
  Tape tp3;
  for (double x : tp3.val(interval_matrix(tp3, model.time, pad))) CHECK(x == 0.0);
  for (double x : tp3.val(context_matrix(tp3, model.time, pad))) CHECK(x == 0.0);
}

TEST_CASE("mixture attention: output shape and padded rows zero") {
  TrainConfig cfg = tiny_cfg();
  ModelState model(cfg, 10);
  const PaddedSeq ps = simple_seq(6, 4);
  Tape tp;
  const NodeId q = model.encode(tp, ps, Channel::Interval);
  CHECK(tp.rows(q) == 6);
  CHECK(tp.cols(q) == 16);  // 2d
  const auto& vals = tp.val(q);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 16; ++c) CHECK(vals[r * 16 + c] == 0.0);
  double norm = 0;
  for (int c = 0; c < 16; ++c) norm += std::abs(vals[5 * 16 + c]);
  CHECK(norm > 0.0);
}

TEST_CASE("attention rows over valid positions sum to 1; future weight is 0") {
  TrainConfig cfg = tiny_cfg();
  ModelState model(cfg, 10);
  const PaddedSeq ps = simple_seq(6, 4);
  const auto allow = causal_mask(ps.mask);

  Tape tp;
  const NodeId h = tp.embedding(model.item_emb, ps.items, 0);
  const NodeId scores = tp.scale(tp.matmul_nt(h, h), 0.3);
  const NodeId att = tp.softmax_rows(scores, &allow);
  const auto& a = tp.val(att);
  for (int i = 0; i < 6; ++i) {
    double row = 0;
    for (int k = 0; k < 6; ++k) {
      row += a[i * 6 + k];
      if (k > i || !ps.mask[k] || !ps.mask[i]) CHECK(a[i * 6 + k] == 0.0);
    }
    if (ps.mask[i]) CHECK(std::abs(row - 1.0) < 1e-12);
  }
}

TEST_CASE("mixture logits at the simplex endpoint select one channel") {
  TrainConfig cfg = tiny_cfg();
  cfg.heads = 1;
  ModelState model(cfg, 10);

  const PaddedSeq ps = simple_seq(6, 4);
  // force the mixture to the item channel
  model.enc_intv.blocks[0].mix[0].val = {1e6, -1e6};

  Tape tp;
  const NodeId p = tp.softmax_rows(tp.leaf(model.enc_intv.blocks[0].mix[0]));
  CHECK(tp.val(p)[0] == 1.0);
  CHECK(tp.val(p)[1] == 0.0);

  // with p=(1,0) the time-channel attention weights are irrelevant: an
  // encoder whose time-channel projections are scrambled must agree
  const NodeId q_forced = model.encode(tp, ps, Channel::Interval);

  ModelState twin(cfg, 10);
  for (auto& [name, e] : twin.store.entries()) {
    e.t->val = model.store.entries().at(name).t->val;
  }
  for (double& x : twin.enc_intv.blocks[0].wq_time[0].val) x += 0.37;
  for (double& x : twin.enc_intv.blocks[0].wk_time[0].val) x -= 0.11;
  Tape tp2;
  const NodeId q_twin = twin.encode(tp2, ps, Channel::Interval);
  const auto& a1 = tp.val(q_forced);
  const auto& a2 = tp2.val(q_twin);
  REQUIRE(a1.size() == a2.size());
  for (size_t i = 0; i < a1.size(); ++i) CHECK(a1[i] == Catch::Approx(a2[i]).margin(1e-12));
}

TEST_CASE("single valid position reduces to FFL(residual of value projection)") {
  TrainConfig cfg = tiny_cfg();
  ModelState model(cfg, 10);
  const PaddedSeq ps = simple_seq(6, 1);
  Tape tp;
  const NodeId q = model.encode(tp, ps, Channel::Interval);
  const int n = cfg.seq_len, d2 = 2 * cfg.d;
  const auto& got = tp.val(q);

  // hand-computed: X row = [m_i || V_t] + P, masked; attention output at the
  // single valid row is sum_h (X W_v^h) W_o^h; then residual + FFL + residual
  Tape h;
  const NodeId hm = h.embedding(model.item_emb, ps.items, 0);
  const NodeId vt = interval_matrix(h, model.time, ps);
  NodeId x = h.add(h.concat_cols(hm, vt), h.leaf(model.enc_intv.pos));
  x = h.mask_rows(x, ps.mask);
  auto& b = model.enc_intv.blocks[0];
  NodeId sal = -1;
  for (int head = 0; head < cfg.heads; ++head) {
    const NodeId v = h.matmul(x, h.leaf(b.wv[head]));
    const NodeId o = h.matmul(v, h.leaf(b.wo[head]));
    sal = sal < 0 ? o : h.add(sal, o);
  }
  // only the last row (the single valid position) attends, to itself
  const NodeId z = h.add(x, h.mask_rows(sal, ps.mask));
  const NodeId hidden = h.relu(h.add_rowvec(h.matmul(z, h.leaf(b.ff_w1)), h.leaf(b.ff_b1)));
  const NodeId ffl = h.add_rowvec(h.matmul(hidden, h.leaf(b.ff_w2)), h.leaf(b.ff_b2));
  const NodeId want = h.mask_rows(h.add(z, ffl), ps.mask);

  const auto& w = h.val(want);
  const int r = n - 1;
  for (int c = 0; c < d2; ++c)
    CHECK(got[r * d2 + c] == Catch::Approx(w[r * d2 + c]).margin(1e-10));
}

TEST_CASE("score_candidates: dot-product identity and permutation equivariance") {
  TrainConfig cfg = tiny_cfg();
  ModelState model(cfg, 10);
  Tape tp;

  // q_last equal to [m_3 || t] gives score ||.||^2 for candidate 3
  const NodeId t_next = model.next_time(tp, Channel::Interval, 0, 3600);
  const NodeId m3 = tp.embedding(model.item_emb, {3}, 0);
  const NodeId q_last = tp.concat_cols(m3, t_next);
  const NodeId s = score_candidates(tp, q_last, model.item_emb, {3}, t_next);
  double want = 0;
  for (double x : tp.val(q_last)) want += x * x;
  CHECK(tp.val(s)[0] == Catch::Approx(want).margin(1e-12));

  // permuting candidates permutes scores
  const std::vector<int> cands = {1, 2, 3, 4, 5};
  const std::vector<int> perm = {4, 2, 5, 1, 3};
  const NodeId s1 = score_candidates(tp, q_last, model.item_emb, cands, t_next);
  const NodeId s2 = score_candidates(tp, q_last, model.item_emb, perm, t_next);
  const auto& v1 = tp.val(s1);
  const auto& v2 = tp.val(s2);
  for (size_t i = 0; i < perm.size(); ++i) {
    const auto at = std::find(cands.begin(), cands.end(), perm[i]) - cands.begin();
    CHECK(v2[i] == v1[at]);
  }

  // identical embeddings -> identical scores
  ModelState dup(cfg, 10);
  for (int c = 0; c < cfg.d; ++c) dup.item_emb.at(2, c) = dup.item_emb.at(1, c);
  Tape tp3;
  const NodeId tn = dup.next_time(tp3, Channel::Interval, 0, 60);
  const NodeId q2 = tp3.constant(1, 2 * cfg.d, std::vector<double>(2 * cfg.d, 0.25));
  const NodeId sc = score_candidates(tp3, q2, dup.item_emb, {1, 2}, tn);
  CHECK(tp3.val(sc)[0] == tp3.val(sc)[1]);
}

TEST_CASE("routing: uniform -> interval, non-uniform -> context, unknown warns") {
  TrainConfig cfg = tiny_cfg();
  ModelState model(cfg, 10);
  UniformityIndex ui;
  ui.uniform[1] = true;
  ui.uniform[2] = false;
  CHECK(model.route(ui, 1) == Channel::Interval);
  CHECK(model.route(ui, 2) == Channel::Context);
  std::ostringstream warn;
  CHECK(model.route(ui, 99, &warn) == Channel::Context);
  CHECK(warn.str().find("99") != std::string::npos);

  TrainConfig forced = cfg;
  forced.force_channel = "interval";
  ModelState mf(forced, 10);
  CHECK(mf.route(ui, 2) == Channel::Interval);

  TrainConfig noA = cfg;
  noA.time_multi = false;
  ModelState ma(noA, 10);
  CHECK(ma.route(ui, 2) == Channel::Interval);
  CHECK(ma.train_channels().size() == 1);
}

TEST_CASE("both channels produce identical shapes") {
  TrainConfig cfg = tiny_cfg();
  ModelState model(cfg, 10);
  const PaddedSeq ps = simple_seq(6, 5);
  Tape tp;
  const NodeId qi = model.encode(tp, ps, Channel::Interval);
  const NodeId qc = model.encode(tp, ps, Channel::Context);
  CHECK(tp.rows(qi) == tp.rows(qc));
  CHECK(tp.cols(qi) == tp.cols(qc));
}

TEST_CASE("encoder gradients pass finite differences on a d=8 instance") {
  TrainConfig cfg = tiny_cfg();
  ModelState model(cfg, 10);
  const PaddedSeq ps = simple_seq(6, 4, 7200);

  auto loss_of = [&](Tape& tp) -> NodeId {
    const NodeId qi = model.encode(tp, ps, Channel::Interval);
    const NodeId qc = model.encode(tp, ps, Channel::Context);
    const NodeId tn = model.next_time(tp, Channel::Interval, ps.timestamps.back(),
                                      ps.timestamps.back() + 3600);
    const NodeId logits = score_candidates(tp, tp.row(qi, 5), model.item_emb, {2, 4, 7}, tn);
    return tp.weighted_sum({tp.cross_entropy_logits(logits, 0), tp.sqnorm(tp.row(qc, 5))},
                           {1.0, 0.1});
  };
  auto fwd = [&] {
    Tape tp;
    return tp.scalar(loss_of(tp));
  };
  auto fwd_bwd = [&] {
    Tape tp;
    const NodeId l = loss_of(tp);
    tp.backward(l);
    return tp.scalar(l);
  };
  CHECK(finite_diff_check(model.store, fwd, fwd_bwd, 1e-5) < 1e-4);
}

TEST_CASE("layer-norm variant still encodes and differentiates") {
  TrainConfig cfg = tiny_cfg();
  cfg.layer_norm = true;
  ModelState model(cfg, 10);
  const PaddedSeq ps = simple_seq(6, 3);
  Tape tp;
  const NodeId q = model.encode(tp, ps, Channel::Context);
  tp.backward(tp.sqnorm(tp.row(q, 5)));  // smoke: no throw, finite grads
  for (const auto& [name, e] : model.store.entries())
    for (double g : e.t->grad) CHECK(std::isfinite(g));
}
