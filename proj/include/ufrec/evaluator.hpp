#pragma once
// Offline evaluation: candidate construction (sampled or full ranking),
// pessimistic tie-breaking, per-scope breakdown, and the experiment
// harnesses (threshold sweep, time-sensitivity comparison, case dumps).

#include <cstring>
#include <memory>

#include "ufrec/metrics.hpp"
#include "ufrec/model.hpp"
#include "ufrec/parallel.hpp"

namespace ufrec {

enum class EvalTarget { Test, Validation };

struct EvalCase {
  int user = 0;
  std::vector<int> input_items;
  std::vector<std::int64_t> input_ts;
  int positive = 0;
  std::int64_t positive_ts = 0;
};

// The input is every interaction that chronologically precedes the held-out
// one: for the earlier holdout that is the train prefix, for the later one
// the train prefix plus the earlier holdout.
inline std::vector<EvalCase> build_eval_cases(const SplitDataset& split, EvalTarget target) {
  std::vector<EvalCase> cases;
  const auto& holdouts = target == EvalTarget::Test ? split.test : split.validation;
  const bool target_is_last =
      (split.order == SplitOrder::Paper) == (target == EvalTarget::Validation);
  for (const auto& tr : split.train) {
    auto it = holdouts.find(tr.user);
    if (it == holdouts.end()) continue;
    EvalCase c;
    c.user = tr.user;
    c.input_items = tr.items;
    c.input_ts = tr.timestamps;
    if (target_is_last) {
      const auto& other = target == EvalTarget::Test ? split.validation : split.test;
      const Holdout& mid = other.at(tr.user);
      c.input_items.push_back(mid.item);
      c.input_ts.push_back(mid.timestamp);
    }
    c.positive = it->second.item;
    c.positive_ts = it->second.timestamp;
    cases.push_back(std::move(c));
  }
  std::sort(cases.begin(), cases.end(), [](const EvalCase& a, const EvalCase& b) { return a.user < b.user; });
  return cases;
}

// Scores one case against a candidate list; candidates[0] is the positive.
using ScoreFn = std::function<std::vector<double>(const EvalCase&, const std::vector<int>&)>;

inline ScoreFn model_scorer(ModelState& model, const PartitionIndex& partitions) {
  return [&model, &partitions](const EvalCase& c, const std::vector<int>& candidates) {
    Tape tp;
    const PaddedSeq ps = pad_truncate(c.input_items, c.input_ts, model.cfg.seq_len);
    const Channel ch = model.route(partitions.users, c.user);
    const NodeId q = model.encode(tp, ps, ch);
    const NodeId q_last = tp.row(q, ps.last_pos());
    const NodeId t_next = model.next_time(tp, ch, c.input_ts.back(), c.positive_ts);
    const NodeId logits = score_candidates(tp, q_last, model.item_emb, candidates, t_next);
    return tp.val(logits);
  };
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct EvalOptions {
  std::string mode = "sampled";  // sampled|full
  std::vector<int> ks = {10, 20};
  std::uint64_t eval_seed = 1;
  int num_negatives = 100;
  EvalTarget target = EvalTarget::Test;
};

// Pessimistic rank of candidates[0]: equal-scored negatives count as ahead.
inline int pessimistic_rank(const std::vector<double>& scores) {
  int rank = 1;
  for (size_t j = 1; j < scores.size(); ++j)
    if (scores[j] >= scores[0]) ++rank;
  return rank;
}

inline MetricReport evaluate(const ScoreFn& scorer, const SplitDataset& split,
                             const PartitionIndex& partitions, const EvalOptions& opt) {
  const std::vector<EvalCase> cases = build_eval_cases(split, opt.target);
  struct PerUser {
    std::optional<int> rank;
    std::vector<Scope> scopes;
  };
  std::vector<PerUser> results(cases.size());

  parallel_for(cases.size(), [&](size_t i) {
    const EvalCase& c = cases[i];
    std::vector<int> candidates;
    if (opt.mode == "sampled") {
      std::mt19937_64 rng(mix_seed(opt.eval_seed, static_cast<std::uint64_t>(c.user)));
      const auto hist = full_history(split, c.user);
      candidates.reserve(opt.num_negatives + 1);
      candidates.push_back(c.positive);
      const auto negs = sample_negatives(hist, split.num_items, opt.num_negatives, rng);
      candidates.insert(candidates.end(), negs.begin(), negs.end());
    } else {
      std::unordered_set<int> train_hist;
      if (const UserSequence* tr = split.train_of(c.user))
        train_hist.insert(tr->items.begin(), tr->items.end());
      candidates.push_back(c.positive);
      for (int it = 1; it <= split.num_items; ++it)
        if (it != c.positive && !train_hist.count(it)) candidates.push_back(it);
    }
    const std::vector<double> scores = scorer(c, candidates);
    if (scores.size() != candidates.size())
      throw std::runtime_error("evaluate: scorer returned wrong number of scores");
    PerUser r;
    r.rank = pessimistic_rank(scores);
    r.scopes.push_back(Scope::Overall);
    r.scopes.push_back(partitions.users.is_uniform(c.user) ? Scope::SeqUniform : Scope::SeqNonUniform);
    r.scopes.push_back(partitions.items.is_frequent(c.positive) ? Scope::ItemFrequent
                                                                : Scope::ItemLessFrequent);
    results[i] = std::move(r);
  });

  ReportBuilder rb(opt.ks, opt.mode);
  for (const auto& r : results) rb.add(r.scopes, r.rank);
  return rb.finish();
}

// ---- experiment harnesses ---------------------------------------------------

struct SweepRow {
  std::string axis;  // "sequence" | "item"
  double ratio = 0.0;
  MetricReport report;
};

// Re-partitions along one axis per grid value and re-evaluates; when
// retrain is supplied the model is trained from scratch per cell.
using RetrainFn = std::function<std::shared_ptr<ModelState>(double uniform_ratio, double frequent_ratio)>;

inline std::vector<SweepRow> study_sweep(ModelState& model, const SplitDataset& split,
                                         const TrainConfig& cfg, const std::vector<double>& seq_grid,
                                         const std::vector<double>& item_grid, const EvalOptions& opt,
                                         const RetrainFn& retrain = nullptr) {
  std::vector<SweepRow> rows;
  auto run_cell = [&](const std::string& axis, double useq, double uitem, double ratio) {
    const PartitionIndex parts =
        build_partitions(split, useq, uitem, partition_mode_from(cfg.partition_mode));
    SweepRow row;
    row.axis = axis;
    row.ratio = ratio;
    if (retrain) {
      auto fresh = retrain(useq, uitem);
      row.report = evaluate(model_scorer(*fresh, parts), split, parts, opt);
    } else {
      row.report = evaluate(model_scorer(model, parts), split, parts, opt);
    }
    rows.push_back(std::move(row));
  };
  for (double r : seq_grid) run_cell("sequence", r, cfg.frequent_ratio, r);
  for (double r : item_grid) run_cell("item", cfg.uniform_ratio, r, r);
  return rows;
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::string out = "axis,ratio,scope,metric,k,value,count\n";
  for (const auto& row : rows)
    for (const auto& [scope, vals] : row.report.values)
      for (const auto& [mk, v] : vals) {
        const auto at = mk.find('@');
        out += row.axis + "," + std::to_string(row.ratio) + "," + scope + "," + mk.substr(0, at) +
               "," + mk.substr(at + 1) + "," + std::to_string(v) + "," +
               std::to_string(row.report.counts.at(scope)) + "\n";
      }
  return out;
}

struct SensitivityRow {
  std::string scope;
  std::string metric;
  int k = 0;
  double interval_minus_context = 0.0;
};

// Per-subset signed differences between an interval-only and a context-only
// variant; positive means the interval channel wins.
inline std::vector<SensitivityRow> time_sensitivity(const MetricReport& interval_only,
                                                    const MetricReport& context_only) {
  std::vector<SensitivityRow> rows;
  for (Scope s : all_scopes())
    for (int k : interval_only.ks)
      for (const char* m : {"ndcg", "hr", "mrr"}) {
        SensitivityRow r;
        r.scope = to_string(s);
        r.metric = m;
        r.k = k;
        r.interval_minus_context = interval_only.get(s, m, k) - context_only.get(s, m, k);
        rows.push_back(std::move(r));
      }
  return rows;
}

inline std::string sensitivity_to_csv(const std::vector<SensitivityRow>& rows) {
  std::string out = "scope,metric,k,interval_minus_context\n";
  for (const auto& r : rows)
    out += r.scope + "," + r.metric + "," + std::to_string(r.k) + "," +
           std::to_string(r.interval_minus_context) + "\n";
  return out;
}

// ---- case dumps -------------------------------------------------------------

struct CaseDump {
  int user = 0;
  int target_item = 0;
  std::string variant;
  int rows = 0, cols = 0;
  double score = 0.0;
  std::vector<double> encoding;  // rows x cols
};

inline CaseDump compute_case(ModelState& model, const PartitionIndex& partitions,
                             const SplitDataset& split, int user, int target_item,
                             const std::string& variant) {
  const UserSequence* tr = split.train_of(user);
  if (!tr) throw std::runtime_error("case: unknown user " + std::to_string(user));
  if (target_item < 1 || target_item > split.num_items)
    throw std::runtime_error("case: item id out of range: " + std::to_string(target_item));
  Tape tp;
  const PaddedSeq ps = pad_truncate(*tr, model.cfg.seq_len);
  const Channel ch = model.route(partitions.users, user);
  const NodeId q = model.encode(tp, ps, ch);
  const std::int64_t next_ts =
      split.test.count(user) ? split.test.at(user).timestamp : tr->timestamps.back();
  const NodeId q_last = tp.row(q, ps.last_pos());
  const NodeId t_next = model.next_time(tp, ch, tr->timestamps.back(), next_ts);
  const NodeId logits = score_candidates(tp, q_last, model.item_emb, {target_item}, t_next);
  CaseDump d;
  d.user = user;
  d.target_item = target_item;
  d.variant = variant;
  d.rows = tp.rows(q);
  d.cols = tp.cols(q);
  d.score = tp.val(logits)[0];
  d.encoding = tp.val(q);
  return d;
}

// Payload uses the checkpoint float64 little-endian encoding with a JSON
// sidecar describing it.
inline void write_case_dump(const CaseDump& d, const std::string& path_prefix) {
  std::ofstream bin(path_prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + path_prefix + ".bin");
  for (double x : d.encoding) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    bin.write(reinterpret_cast<const char*>(buf), 8);
  }
  nlohmann::json side = {{"user", d.user},     {"item", d.target_item}, {"variant", d.variant},
                         {"shape", {d.rows, d.cols}}, {"score", d.score},
                         {"payload", path_prefix + ".bin"}};
  std::ofstream js(path_prefix + ".json");
  if (!js) throw std::runtime_error("cannot write " + path_prefix + ".json");
  js << side.dump(2) << "\n";
}

inline CaseDump read_case_dump(const std::string& path_prefix) {
  std::ifstream js(path_prefix + ".json");
  if (!js) throw std::runtime_error("cannot read " + path_prefix + ".json");
  nlohmann::json side = nlohmann::json::parse(js);
  CaseDump d;
  d.user = side.at("user").get<int>();
  d.target_item = side.at("item").get<int>();
  d.variant = side.at("variant").get<std::string>();
  d.rows = side.at("shape")[0].get<int>();
  d.cols = side.at("shape")[1].get<int>();
  d.score = side.at("score").get<double>();
  std::ifstream bin(path_prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read " + path_prefix + ".bin");
  d.encoding.resize(static_cast<size_t>(d.rows) * d.cols);
  for (double& x : d.encoding) {
    unsigned char buf[8];
    bin.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    std::memcpy(&x, &bits, 8);
  }
  if (!bin) throw std::runtime_error("truncated payload: " + path_prefix + ".bin");
  return d;
}

}  // namespace ufrec
