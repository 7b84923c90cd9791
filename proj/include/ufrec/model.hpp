#pragma once
// Full model state: item embeddings, the shared time tables, one encoder per
// time channel, the generator and transfer nets, and the frozen transfer
// snapshot. Uniform sequences route to the interval channel, non-uniform
// ones to the context channel, unless a channel is forced.

#include <memory>

#include "ufrec/encoder.hpp"
#include "ufrec/item_enhance.hpp"
#include "ufrec/seq_enhance.hpp"

namespace ufrec {

struct ModelState {
  TrainConfig cfg;
  int num_items = 0;

  Tensor item_emb;  // (num_items + 1) x d, row 0 fixed at zero
  TimeTables time;
  EncoderParams enc_intv;
  EncoderParams enc_ctx;
  GeneratorNet gen;
  TransferNet xfer;
  TransferNet xfer_frozen;
  bool frozen_captured = false;

  ParameterStore store;
  int epoch = 0;
  double best_val = 0.0;

  ModelState(const TrainConfig& config, int items) : cfg(config), num_items(items) {
    cfg.validate();
    item_emb = Tensor(num_items + 1, cfg.d);
    time.build(cfg);
    enc_intv.build(cfg.d, cfg.seq_len, cfg.heads, cfg.dv(), cfg.num_blocks, cfg.layer_norm);
    enc_ctx.build(cfg.d, cfg.seq_len, cfg.heads, cfg.dv(), cfg.num_blocks, cfg.layer_norm);
    gen.build(cfg.d);
    xfer.build(cfg.d);
    xfer_frozen.build(cfg.d);

    store.add("item_emb", item_emb);
    time.register_params(store, "time");
    enc_intv.register_params(store, "intv");
    enc_ctx.register_params(store, "ctx");
    gen.register_params(store, "gen");
    xfer.register_params(store, "xfer");
    xfer_frozen.register_params(store, "frozen.xfer", /*trainable=*/false);

    store.init_params(cfg.seed);
    // padding row stays a constant zero vector
    for (int c = 0; c < cfg.d; ++c) item_emb.at(0, c) = 0.0;
    std::fill(xfer_frozen.w.val.begin(), xfer_frozen.w.val.end(), 0.0);
    std::fill(xfer_frozen.b.val.begin(), xfer_frozen.b.val.end(), 0.0);
  }

  ModelState(const ModelState&) = delete;
  ModelState& operator=(const ModelState&) = delete;

  void capture_frozen() {
    xfer_frozen.w.val = xfer.w.val;
    xfer_frozen.b.val = xfer.b.val;
    frozen_captured = true;
  }

  void ema_frozen(double decay) {
    for (size_t i = 0; i < xfer.w.val.size(); ++i)
      xfer_frozen.w.val[i] = decay * xfer_frozen.w.val[i] + (1.0 - decay) * xfer.w.val[i];
    for (size_t i = 0; i < xfer.b.val.size(); ++i)
      xfer_frozen.b.val[i] = decay * xfer_frozen.b.val[i] + (1.0 - decay) * xfer.b.val[i];
  }

  Channel route(const UniformityIndex& users, int user, std::ostream* warn = nullptr) const {
    const ForceChannel f = cfg.forced();
    if (f == ForceChannel::Interval) return Channel::Interval;
    if (f == ForceChannel::Context) return Channel::Context;
    if (!users.known(user)) {
      if (warn) (*warn) << "route: user " << user << " has no uniformity label, using context channel\n";
      return Channel::Context;
    }
    return users.is_uniform(user) ? Channel::Interval : Channel::Context;
  }

  // Channels that participate in training for every sequence.
  std::vector<Channel> train_channels() const {
    switch (cfg.forced()) {
      case ForceChannel::Interval: return {Channel::Interval};
      case ForceChannel::Context: return {Channel::Context};
      default: return {Channel::Interval, Channel::Context};
    }
  }

  NodeId encode(Tape& tp, const PaddedSeq& seq, Channel ch) {
    const NodeId h = tp.embedding(item_emb, seq.items, 0);
    const NodeId t = ch == Channel::Interval ? interval_matrix(tp, time, seq)
                                             : context_matrix(tp, time, seq);
    EncoderParams& ep = ch == Channel::Interval ? enc_intv : enc_ctx;
    return mixture_attention(tp, h, t, ep, seq.mask);
  }

  NodeId next_time(Tape& tp, Channel ch, std::int64_t last_ts, std::int64_t next_ts) {
    return next_time_feature(tp, time, ch, last_ts, next_ts);
  }

  void save(const std::string& path, const nlohmann::json& extra_meta = {}) const {
    nlohmann::json meta = extra_meta;
    meta["num_items"] = num_items;
    meta["epoch"] = epoch;
    meta["frozen_captured"] = frozen_captured;
    meta["best_val"] = best_val;
    meta["config"] = cfg.to_json();
    store.save(path, meta);
  }

  // Rebuilds a model from a checkpoint; the stored config snapshot defines
  // the architecture.
  static std::unique_ptr<ModelState> load(const std::string& path) {
    // Peek at the header to recover config and size.
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    unsigned char lenbuf[8];
    in.read(reinterpret_cast<char*>(lenbuf), 8);
    std::uint64_t hlen = 0;
    for (int i = 0; i < 8; ++i) hlen |= static_cast<std::uint64_t>(lenbuf[i]) << (8 * i);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
    const nlohmann::json header = nlohmann::json::parse(hs);
    const nlohmann::json meta = header.at("meta");
    TrainConfig cfg;
    cfg.apply_json(meta.at("config"));
    auto model = std::make_unique<ModelState>(cfg, meta.at("num_items").get<int>());
    model->store.load(path);
    model->epoch = meta.at("epoch").get<int>();
    model->frozen_captured = meta.at("frozen_captured").get<bool>();
    model->best_val = meta.at("best_val").get<double>();
    return model;
  }
};

}  // namespace ufrec
