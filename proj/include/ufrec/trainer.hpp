#pragma once
// Multi-task training loop. Every batch sums the sampled-softmax
// recommendation loss with the curriculum-weighted enhancement losses:
//   total = lambda_r + alpha_s*lambda_s (uniform sequences, e >= e_b)
//         + alpha_f*lambda_f (frequent items, e >= e_b)
//         + alpha_l*lambda_l (less-frequent items, e >= e_t)
// The transfer net snapshot is captured at the start of epoch e_t, before
// any lambda_l gradient exists. All randomness is drawn while building a
// BatchPlan, so the loss graph itself is a deterministic function of the
// parameters (which is what the gradient checker needs).

#include <chrono>
#include <iomanip>

#include "ufrec/evaluator.hpp"

namespace ufrec {

// Sampled-softmax cross entropy; candidates are {positive} + negatives.
inline NodeId recommendation_loss(Tape& tp, NodeId q_last, Tensor& item_emb, int positive,
                                  const std::vector<int>& negatives, NodeId t_next) {
  std::vector<int> candidates;
  candidates.reserve(negatives.size() + 1);
  candidates.push_back(positive);
  for (int n : negatives) {
    if (n == positive) throw std::runtime_error("recommendation_loss: positive among negatives");
    candidates.push_back(n);
  }
  const NodeId logits = score_candidates(tp, q_last, item_emb, candidates, t_next);
  return tp.cross_entropy_logits(logits, 0);
}

struct UserPlan {
  int user = 0;
  PaddedSeq input;
  int target = 0;
  std::int64_t target_ts = 0;
  std::int64_t last_input_ts = 0;
  std::vector<int> negatives;
  bool seq_loss = false;   // lambda_s participates
  double w_s = 0.0;
  PaddedSeq derived;       // derived subsequence, padded
};

struct ItemPlan {
  int item = 0;
  std::vector<int> neighbors;
  double weight = 0.0;  // w_i or eta
};

struct BatchPlan {
  int epoch = 0;
  std::vector<UserPlan> users;
  std::vector<ItemPlan> freq_items;
  std::vector<ItemPlan> low_items;
};

struct TrainContext {
  const SplitDataset* split = nullptr;
  const PartitionIndex* partitions = nullptr;
  const std::unordered_map<int, NeighborCandidateSet>* candidates = nullptr;
};

// Draws every random choice for one batch of users up front.
inline BatchPlan make_batch_plan(ModelState& model, const TrainContext& ctx,
                                 const std::vector<int>& batch_users, int epoch,
                                 std::mt19937_64& rng) {
  const TrainConfig& cfg = model.cfg;
  const PartitionIndex& parts = *ctx.partitions;
  BatchPlan plan;
  plan.epoch = epoch;

  std::vector<int> batch_items;
  for (int user : batch_users) {
    const UserSequence* tr = ctx.split->train_of(user);
    if (!tr || tr->items.size() < 2) continue;  // nothing to predict from
    UserPlan up;
    up.user = user;
    const size_t m = tr->items.size();
    const std::vector<int> in_items(tr->items.begin(), tr->items.end() - 1);
    const std::vector<std::int64_t> in_ts(tr->timestamps.begin(), tr->timestamps.end() - 1);
    up.input = pad_truncate(in_items, in_ts, cfg.seq_len);
    up.target = tr->items[m - 1];
    up.target_ts = tr->timestamps[m - 1];
    up.last_input_ts = in_ts.back();
    const auto hist = full_history(*ctx.split, user);
    up.negatives = sample_negatives(hist, ctx.split->num_items, cfg.train_negatives, rng);

    batch_items.insert(batch_items.end(), tr->items.begin(), tr->items.end());

    if (cfg.seq_enh && epoch >= cfg.e_b && parts.users.is_uniform(user)) {
      // subsequence over the visible (truncated) window
      const int keep = up.input.valid;
      std::vector<int> win_items(in_items.end() - keep, in_items.end());
      std::vector<std::int64_t> win_ts(in_ts.end() - keep, in_ts.end());
      const AugmentedPair aug =
          generate_subsequence(win_items, win_ts, parts.items, cfg.min_subseq, rng);
      if (!aug.items.empty()) {
        up.seq_loss = true;
        up.derived = pad_truncate(aug.items, aug.timestamps, cfg.seq_len);
        up.w_s = sequence_weight(epoch, cfg.e_b, cfg.e_all, parts.users.variance.at(user),
                                 parts.users.v_min, parts.users.v_max);
      }
    }
    plan.users.push_back(std::move(up));
  }

  if (cfg.item_enh && epoch >= cfg.e_b && ctx.candidates) {
    std::sort(batch_items.begin(), batch_items.end());
    batch_items.erase(std::unique(batch_items.begin(), batch_items.end()), batch_items.end());
    for (int item : batch_items) {
      auto cit = ctx.candidates->find(item);
      if (cit == ctx.candidates->end()) continue;  // no co-occurring partners
      const auto sampled = sample_neighbors(cit->second, cfg.k_neighbors, rng);
      if (!sampled) continue;
      ItemPlan ip;
      ip.item = item;
      ip.neighbors = *sampled;
      if (parts.items.is_frequent(item)) {
        ip.weight = frequent_weight(epoch, cfg.e_b, cfg.e_all,
                                    static_cast<double>(parts.items.count.at(item)),
                                    static_cast<double>(parts.items.f_min),
                                    static_cast<double>(parts.items.f_max));
        plan.freq_items.push_back(std::move(ip));
      } else if (epoch >= cfg.e_t) {
        ip.weight = lowfreq_weight(epoch, cfg.e_t, cfg.e_all);
        plan.low_items.push_back(std::move(ip));
      }
    }
  }
  return plan;
}

struct BatchLossTerms {
  NodeId total = -1;
  double lambda_r = 0.0;  // logged means, before alpha weighting
  double lambda_s = 0.0;
  double lambda_f = 0.0;
  double lambda_l = 0.0;
  int n_seq = 0, n_s = 0, n_f = 0, n_l = 0;
};

// Builds the complete multi-task loss for one planned batch.
inline BatchLossTerms batch_loss(Tape& tp, ModelState& model, const BatchPlan& plan) {
  const TrainConfig& cfg = model.cfg;
  BatchLossTerms out;
  if (plan.users.empty() && plan.freq_items.empty() && plan.low_items.empty())
    throw std::runtime_error("batch_loss: empty plan");

  const std::vector<Channel> channels = model.train_channels();
  std::vector<NodeId> rec_terms, seq_terms, freq_terms, low_terms, consist_terms;

  for (const auto& up : plan.users) {
    NodeId q_intv = -1, q_ctx = -1;  // full N x 2d encodings
    std::vector<NodeId> per_channel;
    for (Channel ch : channels) {
      const NodeId q = model.encode(tp, up.input, ch);
      if (ch == Channel::Interval) q_intv = q; else q_ctx = q;
      const NodeId q_last = tp.row(q, up.input.last_pos());
      const NodeId t_next = model.next_time(tp, ch, up.last_input_ts, up.target_ts);
      per_channel.push_back(
          recommendation_loss(tp, q_last, model.item_emb, up.target, up.negatives, t_next));
    }
    NodeId rec = per_channel[0];
    for (size_t i = 1; i < per_channel.size(); ++i) rec = tp.add(rec, per_channel[i]);
    if (per_channel.size() > 1) rec = tp.scale(rec, 1.0 / per_channel.size());
    rec_terms.push_back(rec);

    if (cfg.beta_consistency > 0.0 && q_intv >= 0 && q_ctx >= 0)
      consist_terms.push_back(tp.sq_diff_sum(tp.row(q_intv, up.input.last_pos()),
                                             tp.row(q_ctx, up.input.last_pos())));

    if (up.seq_loss) {
      // original through its routed (interval) channel, derived through the
      // context channel; a forced channel overrides both
      const ForceChannel f = cfg.forced();
      const Channel orig_ch = f == ForceChannel::Context ? Channel::Context : Channel::Interval;
      const Channel der_ch = f == ForceChannel::Interval ? Channel::Interval : Channel::Context;
      NodeId q_orig = orig_ch == Channel::Interval ? q_intv : q_ctx;
      if (q_orig < 0) q_orig = model.encode(tp, up.input, orig_ch);
      const NodeId q_der = model.encode(tp, up.derived, der_ch);
      if (cfg.se_reduction == "last") {
        const NodeId q_orig_last = tp.row(q_orig, up.input.last_pos());
        const NodeId q_der_last = tp.row(q_der, up.derived.last_pos());
        seq_terms.push_back(loss_sequence(tp, q_orig_last, q_der_last, model.gen, up.w_s));
      } else {
        // mean over positions valid in the derived sequence (a suffix of the
        // original's valid positions, both being left-padded)
        const NodeId mapped = model.gen.apply(tp, q_der);
        const NodeId diff_site = tp.mask_rows(q_orig, up.derived.mask);
        const NodeId mapped_site = tp.mask_rows(mapped, up.derived.mask);
        const NodeId sq = tp.sq_diff_sum(diff_site, mapped_site);
        seq_terms.push_back(tp.scale(sq, up.w_s / std::max(1, up.derived.valid)));
      }
    }
  }

  for (const auto& ip : plan.freq_items) {
    const NodeId center = tp.embedding(model.item_emb, {ip.item}, 0);
    const NodeId nbrs = tp.embedding(model.item_emb, ip.neighbors, 0);
    const Aggregated agg = aggregate_neighbors(tp, center, nbrs);
    freq_terms.push_back(loss_frequent(tp, center, agg.updated, model.xfer, ip.weight));
  }
  for (const auto& ip : plan.low_items) {
    if (!model.frozen_captured)
      throw std::runtime_error("batch_loss: lambda_l before the transfer-net snapshot was captured");
    const NodeId center = tp.embedding(model.item_emb, {ip.item}, 0);
    const NodeId nbrs = tp.embedding(model.item_emb, ip.neighbors, 0);
    const Aggregated agg = aggregate_neighbors(tp, center, nbrs);
    low_terms.push_back(loss_lowfreq(tp, center, agg.updated, model.xfer_frozen, ip.weight));
  }

  auto mean_of = [&tp](const std::vector<NodeId>& terms) -> NodeId {
    NodeId acc = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) acc = tp.add(acc, terms[i]);
    return tp.scale(acc, 1.0 / static_cast<double>(terms.size()));
  };

  std::vector<NodeId> parts;
  std::vector<double> coeffs;
  if (!rec_terms.empty()) {
    const NodeId r = mean_of(rec_terms);
    parts.push_back(r);
    coeffs.push_back(1.0);
    out.lambda_r = tp.scalar(r);
    out.n_seq = static_cast<int>(rec_terms.size());
  }
  if (!seq_terms.empty()) {
    const NodeId s = mean_of(seq_terms);
    parts.push_back(s);
    coeffs.push_back(cfg.alpha_s);
    out.lambda_s = tp.scalar(s);
    out.n_s = static_cast<int>(seq_terms.size());
  }
  if (!freq_terms.empty()) {
    const NodeId f = mean_of(freq_terms);
    parts.push_back(f);
    coeffs.push_back(cfg.alpha_f);
    out.lambda_f = tp.scalar(f);
    out.n_f = static_cast<int>(freq_terms.size());
  }
  if (!low_terms.empty()) {
    const NodeId l = mean_of(low_terms);
    parts.push_back(l);
    coeffs.push_back(cfg.alpha_l);
    out.lambda_l = tp.scalar(l);
    out.n_l = static_cast<int>(low_terms.size());
  }
  if (!consist_terms.empty()) {
    parts.push_back(mean_of(consist_terms));
    coeffs.push_back(cfg.beta_consistency);
  }
  out.total = tp.weighted_sum(parts, coeffs);
  return out;
}

struct EpochStats {
  double lambda_r = 0.0, lambda_s = 0.0, lambda_f = 0.0, lambda_l = 0.0;
};

inline EpochStats train_epoch(ModelState& model, const TrainContext& ctx, int epoch,
                              std::mt19937_64& rng) {
  const TrainConfig& cfg = model.cfg;
  std::vector<int> users;
  users.reserve(ctx.split->train.size());
  for (const auto& tr : ctx.split->train)
    if (tr.items.size() >= 2) users.push_back(tr.user);
  std::shuffle(users.begin(), users.end(), rng);

  EpochStats stats;
  double wr = 0, ws = 0, wf = 0, wl = 0;
  Tape tp;
  for (size_t start = 0; start < users.size(); start += cfg.batch) {
    const size_t end = std::min(users.size(), start + cfg.batch);
    const std::vector<int> batch(users.begin() + start, users.begin() + end);
    const BatchPlan plan = make_batch_plan(model, ctx, batch, epoch, rng);
    if (plan.users.empty()) continue;
    tp.clear();
    const BatchLossTerms terms = batch_loss(tp, model, plan);
    const double total = tp.scalar(terms.total);
    if (!std::isfinite(total)) {
      throw std::runtime_error("train_epoch: non-finite loss at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(start / cfg.batch) + " (lambda_r=" +
                               std::to_string(terms.lambda_r) + ", lambda_s=" +
                               std::to_string(terms.lambda_s) + ", lambda_f=" +
                               std::to_string(terms.lambda_f) + ", lambda_l=" +
                               std::to_string(terms.lambda_l) + ")");
    }
    tp.backward(terms.total);
    model.store.adam_step(cfg.lr);

    stats.lambda_r += terms.lambda_r * terms.n_seq; wr += terms.n_seq;
    stats.lambda_s += terms.lambda_s * terms.n_s;   ws += terms.n_s;
    stats.lambda_f += terms.lambda_f * terms.n_f;   wf += terms.n_f;
    stats.lambda_l += terms.lambda_l * terms.n_l;   wl += terms.n_l;
  }
  if (wr > 0) stats.lambda_r /= wr;
  if (ws > 0) stats.lambda_s /= ws;
  if (wf > 0) stats.lambda_f /= wf;
  if (wl > 0) stats.lambda_l /= wl;
  return stats;
}

struct TrainLogRow {
  int epoch = 0;
  double lambda_r = 0.0, lambda_s = 0.0, lambda_f = 0.0, lambda_l = 0.0;
  double val_ndcg10 = 0.0;
  double elapsed_s = 0.0;
};

inline std::string log_to_csv(const std::vector<TrainLogRow>& rows) {
  std::ostringstream out;
  out << "epoch,lambda_r,lambda_s,lambda_f,lambda_l,val_ndcg10,elapsed_s\n";
  out << std::setprecision(17);
  for (const auto& r : rows)
    out << r.epoch << ',' << r.lambda_r << ',' << r.lambda_s << ',' << r.lambda_f << ','
        << r.lambda_l << ',' << r.val_ndcg10 << ',' << std::setprecision(3) << std::fixed
        << r.elapsed_s << std::defaultfloat << std::setprecision(17) << '\n';
  return out.str();
}

struct FitResult {
  std::vector<TrainLogRow> log;
  int best_epoch = -1;
  double best_val = 0.0;
};

// Trains with early stopping on validation NDCG@10 (sampled) and leaves the
// best-epoch parameters in the model. on_epoch_end runs after each epoch's
// optimizer steps (test hook).
inline FitResult fit(ModelState& model, const TrainContext& ctx,
                     const std::function<void(int, ModelState&)>& on_epoch_end = nullptr) {
  const TrainConfig& cfg = model.cfg;
  cfg.validate();
  FitResult res;

  EvalOptions vopt;
  vopt.mode = "sampled";
  vopt.ks = {10};
  vopt.eval_seed = cfg.eval_seed_eff();
  vopt.num_negatives = cfg.eval_negatives;
  vopt.target = EvalTarget::Validation;

  ParameterStore::Snapshot best;
  bool have_best = false;
  int best_epoch = -1;
  double best_val = -1.0;
  const auto t0 = std::chrono::steady_clock::now();

  for (int e = 0; e < cfg.e_all; ++e) {
    if (cfg.item_enh && e == cfg.e_t && !model.frozen_captured) model.capture_frozen();

    // per-epoch stream keyed by seed and epoch so pair regeneration matches
    // the seed^epoch contract
    std::mt19937_64 epoch_rng(mix_seed(cfg.train_seed_eff(), static_cast<std::uint64_t>(e)));
    const EpochStats stats = train_epoch(model, ctx, e, epoch_rng);

    if (cfg.item_enh && cfg.frozen_target == "ema" && e >= cfg.e_t)
      model.ema_frozen(cfg.frozen_ema_decay);

    const MetricReport val =
        evaluate(model_scorer(model, *ctx.partitions), *ctx.split, *ctx.partitions, vopt);
    const double v = val.get(Scope::Overall, "ndcg", 10);

    TrainLogRow row;
    row.epoch = e;
    row.lambda_r = stats.lambda_r;
    row.lambda_s = stats.lambda_s;
    row.lambda_f = stats.lambda_f;
    row.lambda_l = stats.lambda_l;
    row.val_ndcg10 = v;
    row.elapsed_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back(row);

    model.epoch = e;
    if (v > best_val) {
      best_val = v;
      best_epoch = e;
      best = model.store.snapshot();
      have_best = true;
    }
    if (on_epoch_end) on_epoch_end(e, model);
    if (e - best_epoch >= cfg.patience) break;
  }

  if (have_best) {
    model.store.restore(best);
    model.epoch = best_epoch;
  }
  model.best_val = best_val;
  res.best_epoch = best_epoch;
  res.best_val = best_val;
  return res;
}

// Convenience wrapper: partitions + neighbor candidates + fit.
struct TrainedBundle {
  std::shared_ptr<ModelState> model;
  PartitionIndex partitions;
  std::unordered_map<int, NeighborCandidateSet> candidates;
  FitResult result;
  double theta = 0.0, gamma = 0.0;
};

inline TrainedBundle train_model(const TrainConfig& cfg, const SplitDataset& split,
                                 const std::function<void(int, ModelState&)>& hook = nullptr) {
  TrainedBundle b;
  b.partitions = build_partitions(split, cfg.uniform_ratio, cfg.frequent_ratio,
                                  partition_mode_from(cfg.partition_mode));
  b.model = std::make_shared<ModelState>(cfg, split.num_items);
  TrainContext ctx;
  ctx.split = &split;
  ctx.partitions = &b.partitions;
  if (cfg.item_enh) {
    const CooccurrenceStats stats = build_cooccurrence_stats(split.train, split.num_items);
    b.theta = cfg.theta > 0.0 ? cfg.theta : median_pair_gap(stats);
    b.gamma = cfg.gamma > 0.0 ? cfg.gamma : 2.0 * b.theta;
    b.candidates = build_candidate_sets(stats, b.theta, b.gamma, cfg.max_candidates, cfg.pop_sim);
    ctx.candidates = &b.candidates;
  }
  b.result = fit(*b.model, ctx, hook);
  return b;
}

}  // namespace ufrec
