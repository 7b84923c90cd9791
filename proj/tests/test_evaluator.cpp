#include <catch2/catch_amalgamated.hpp>

#include "ufrec/evaluator.hpp"
#include "ufrec/synthetic.hpp"
#include "ufrec/trainer.hpp"

#include <random>

using namespace ufrec;

namespace {

SplitDataset tiny_split(int users = 50, int items = 150, std::uint64_t seed = 3) {
  synth::PlantedConfig pc;
  pc.users = users;
  pc.items = items;
  pc.clusters = 6;
  pc.min_len = 5;
  pc.max_len = 12;
  pc.seed = seed;
  const auto rows = synth::planted(pc);
  return split_leave_one_out(build_sequences(rows), SplitOrder::Paper, nullptr);
}

// brute-force reference: sort the scores descending with the positive losing
// ties, find its 1-based position, then apply the metric definitions directly
struct BruteMetrics {
  double ndcg, hr, mrr;
};
BruteMetrics brute(const std::vector<double>& scores, int k) {
  // scores[0] is the positive
  std::vector<std::pair<double, int>> rows;
  for (size_t i = 0; i < scores.size(); ++i)
    rows.emplace_back(scores[i], i == 0 ? 1 : 0);  // positive flagged
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;  // positive after equal-scored negatives
  });
  int rank = 0;
  for (size_t i = 0; i < rows.size(); ++i)
    if (rows[i].second == 1) rank = static_cast<int>(i) + 1;
  BruteMetrics m{0, 0, 0};
  if (rank <= k) {
    m.hr = 1.0;
    m.ndcg = 1.0 / std::log2(rank + 1.0);
    m.mrr = 1.0 / rank;
  }
  return m;
}

}  // namespace

TEST_CASE("rank_metrics closed forms") {
  const RankMetrics top = rank_metrics(1, 10);
  CHECK(top.ndcg == 1.0);
  CHECK(top.hr == 1.0);
  CHECK(top.mrr == 1.0);

  // oracle: ndcg(3) = 1/log2(4) = 0.5, mrr = 1/3
  const RankMetrics r3 = rank_metrics(3, 10);
  CHECK(r3.ndcg == Catch::Approx(0.5).margin(1e-15));
  CHECK(r3.mrr == Catch::Approx(1.0 / 3.0).margin(1e-15));

  const RankMetrics miss = rank_metrics(12, 10);
  CHECK(miss.ndcg == 0.0);
  CHECK(miss.hr == 0.0);
  CHECK(miss.mrr == 0.0);

  const RankMetrics none = rank_metrics(std::nullopt, 10);
  CHECK(none.hr == 0.0);
  CHECK_THROWS(rank_metrics(0, 10));
}

TEST_CASE("rank_metrics agrees with the brute-force reference on 10k cases") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> n_cand(2, 120), kd(1, 20);
  std::uniform_real_distribution<double> score(-5, 5);
  std::uniform_int_distribution<int> dup(0, 3);
  for (int t = 0; t < 10000; ++t) {
    const int n = n_cand(rng), k = kd(rng);
    std::vector<double> scores(n);
    for (auto& s : scores) s = score(rng);
    if (dup(rng) == 0 && n > 1) scores[1 + (rng() % (n - 1))] = scores[0];  // force ties sometimes
    const int rank = pessimistic_rank(scores);
    const RankMetrics got = rank_metrics(rank, k);
    const BruteMetrics want = brute(scores, k);
    REQUIRE(got.ndcg == want.ndcg);
    REQUIRE(got.hr == want.hr);
    REQUIRE(got.mrr == want.mrr);
  }
}

TEST_CASE("perfect scorer yields all-ones metrics") {
  const SplitDataset split = tiny_split();
  const PartitionIndex parts = build_partitions(split, 0.5, 0.5);
  EvalOptions opt;
  opt.ks = {10, 20};
  opt.num_negatives = 50;
  const ScoreFn perfect = [](const EvalCase&, const std::vector<int>& cands) {
    std::vector<double> s(cands.size(), 0.0);
    s[0] = 1.0;
    return s;
  };
  const MetricReport rep = evaluate(perfect, split, parts, opt);
  for (Scope sc : all_scopes()) {
    if (rep.count(sc) == 0) continue;
    CHECK(rep.get(sc, "ndcg", 10) == 1.0);
    CHECK(rep.get(sc, "hr", 20) == 1.0);
    CHECK(rep.get(sc, "mrr", 10) == 1.0);
  }
  // constant scorer ranks the positive last (pessimistic ties)
  const ScoreFn constant = [](const EvalCase&, const std::vector<int>& cands) {
    return std::vector<double>(cands.size(), 0.5);
  };
  const MetricReport flat = evaluate(constant, split, parts, opt);
  CHECK(flat.get(Scope::Overall, "hr", 10) == 0.0);
}

TEST_CASE("random scorer lands near the uniform-rank expectation") {
  const SplitDataset split = tiny_split(400, 400, 17);
  const PartitionIndex parts = build_partitions(split, 0.5, 0.5);
  EvalOptions opt;
  opt.ks = {10};
  opt.num_negatives = 100;
  const ScoreFn random_scorer = [](const EvalCase& c, const std::vector<int>& cands) {
    std::mt19937_64 rng(mix_seed(4242, c.user));
    std::vector<double> s(cands.size());
    std::uniform_real_distribution<double> u(0, 1);
    for (auto& x : s) x = u(rng);
    return s;
  };
  const MetricReport rep = evaluate(random_scorer, split, parts, opt);
  // expectation 10/101 with ~400 users: generous 0.05 band for this smoke
  CHECK(rep.get(Scope::Overall, "hr", 10) ==
        Catch::Approx(10.0 / 101.0).margin(0.05));
}

TEST_CASE("scope-weighted averages reproduce the overall metric") {
  const SplitDataset split = tiny_split(120, 200, 5);
  const PartitionIndex parts = build_partitions(split, 0.6, 0.7);
  EvalOptions opt;
  opt.ks = {10};
  opt.num_negatives = 30;
  const ScoreFn noisy = [](const EvalCase& c, const std::vector<int>& cands) {
    std::mt19937_64 rng(mix_seed(7, c.user));
    std::vector<double> s(cands.size());
    std::uniform_real_distribution<double> u(0, 1);
    for (auto& x : s) x = u(rng);
    s[0] += 0.3;
    return s;
  };
  const MetricReport rep = evaluate(noisy, split, parts, opt);
  for (const char* m : {"ndcg", "hr", "mrr"}) {
    const double overall = rep.get(Scope::Overall, m, 10) * rep.count(Scope::Overall);
    const double by_seq = rep.get(Scope::SeqUniform, m, 10) * rep.count(Scope::SeqUniform) +
                          rep.get(Scope::SeqNonUniform, m, 10) * rep.count(Scope::SeqNonUniform);
    const double by_item = rep.get(Scope::ItemFrequent, m, 10) * rep.count(Scope::ItemFrequent) +
                           rep.get(Scope::ItemLessFrequent, m, 10) * rep.count(Scope::ItemLessFrequent);
    CHECK(by_seq == Catch::Approx(overall).margin(1e-9));
    CHECK(by_item == Catch::Approx(overall).margin(1e-9));
  }
  CHECK(rep.count(Scope::SeqUniform) + rep.count(Scope::SeqNonUniform) ==
        rep.count(Scope::Overall));
}

TEST_CASE("sampled evaluation is deterministic given the eval seed") {
  const SplitDataset split = tiny_split(60, 200, 9);
  const PartitionIndex parts = build_partitions(split, 0.5, 0.5);
  TrainConfig cfg;
  cfg.d = 8;
  cfg.seq_len = 8;
  cfg.buckets = 8;
  cfg.num_years = 5;
  cfg.heads = 1;
  ModelState model(cfg, split.num_items);
  EvalOptions opt;
  opt.ks = {10, 20};
  opt.num_negatives = 40;
  opt.eval_seed = 31337;
  const MetricReport a = evaluate(model_scorer(model, parts), split, parts, opt);
  const MetricReport b = evaluate(model_scorer(model, parts), split, parts, opt);
  CHECK(a.to_json() == b.to_json());

  EvalOptions opt2 = opt;
  opt2.eval_seed = 999;
  const MetricReport c = evaluate(model_scorer(model, parts), split, parts, opt2);
  CHECK(a.to_json() != c.to_json());  // different negatives, different numbers
}

TEST_CASE("full-ranking mode excludes the train history") {
  const SplitDataset split = tiny_split(30, 80, 13);
  const PartitionIndex parts = build_partitions(split, 0.5, 0.5);
  EvalOptions opt;
  opt.mode = "full";
  opt.ks = {10};
  std::vector<size_t> sizes;
  const ScoreFn probe = [&](const EvalCase& c, const std::vector<int>& cands) {
    const UserSequence* tr = split.train_of(c.user);
    for (size_t i = 1; i < cands.size(); ++i) {
      for (int it : tr->items) REQUIRE(cands[i] != it);
      REQUIRE(cands[i] != c.positive);
    }
    return std::vector<double>(cands.size(), 0.0);
  };
  const MetricReport rep = evaluate(probe, split, parts, opt);
  CHECK(rep.mode == "full");
}

TEST_CASE("metric report serializes to json and csv") {
  const SplitDataset split = tiny_split();
  const PartitionIndex parts = build_partitions(split, 0.5, 0.5);
  EvalOptions opt;
  opt.ks = {10};
  opt.num_negatives = 20;
  const ScoreFn flat = [](const EvalCase&, const std::vector<int>& cands) {
    return std::vector<double>(cands.size(), 0.0);
  };
  const MetricReport rep = evaluate(flat, split, parts, opt);
  const nlohmann::json j = rep.to_json();
  CHECK(j.at("scopes").contains("overall"));
  CHECK(j.at("scopes").at("overall").at("count").get<long>() == rep.count(Scope::Overall));
  const std::string csv = rep.to_csv();
  CHECK(csv.rfind("scope,metric,k,value,count\n", 0) == 0);
  CHECK(csv.find("overall,ndcg,10,") != std::string::npos);
}

TEST_CASE("time_sensitivity of identical reports is zero; rows cover scopes") {
  const SplitDataset split = tiny_split();
  const PartitionIndex parts = build_partitions(split, 0.5, 0.5);
  EvalOptions opt;
  opt.ks = {10, 20};
  opt.num_negatives = 20;
  const ScoreFn flat = [](const EvalCase&, const std::vector<int>& cands) {
    std::vector<double> s(cands.size(), 0.0);
    s[0] = 1;
    return s;
  };
  const MetricReport rep = evaluate(flat, split, parts, opt);
  const auto rows = time_sensitivity(rep, rep);
  CHECK(rows.size() == all_scopes().size() * 2 * 3);  // scopes x ks x metrics
  for (const auto& r : rows) CHECK(r.interval_minus_context == 0.0);
  const std::string csv = sensitivity_to_csv(rows);
  CHECK(csv.rfind("scope,metric,k,interval_minus_context\n", 0) == 0);
}

TEST_CASE("study sweep emits one row per grid cell") {
  const SplitDataset split = tiny_split(40, 100, 23);
  TrainConfig cfg;
  cfg.d = 8;
  cfg.seq_len = 8;
  cfg.buckets = 8;
  cfg.num_years = 5;
  cfg.heads = 1;
  cfg.eval_negatives = 20;
  ModelState model(cfg, split.num_items);
  EvalOptions opt;
  opt.ks = {10};
  opt.num_negatives = 20;
  const auto rows = study_sweep(model, split, cfg, {0.3, 0.5, 0.7}, {0.4, 0.6}, opt);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].axis == "sequence");
  CHECK(rows[0].ratio == 0.3);
  CHECK(rows[4].axis == "item");
  const std::string csv = sweep_to_csv(rows);
  CHECK(csv.rfind("axis,ratio,scope,metric,k,value,count\n", 0) == 0);

  const auto one = study_sweep(model, split, cfg, {0.5}, {}, opt);
  CHECK(one.size() == 1);
}

TEST_CASE("case dump round-trips bit-exactly and matches score_candidates") {
  namespace fs = std::filesystem;
  const SplitDataset split = tiny_split(30, 80, 29);
  const PartitionIndex parts = build_partitions(split, 0.5, 0.5);
  TrainConfig cfg;
  cfg.d = 8;
  cfg.seq_len = 8;
  cfg.buckets = 8;
  cfg.num_years = 5;
  cfg.heads = 1;
  ModelState model(cfg, split.num_items);

  const int user = split.train[0].user;
  const int item = split.test.at(user).item;
  const CaseDump d = compute_case(model, parts, split, user, item, "full");
  CHECK(d.rows == cfg.seq_len);
  CHECK(d.cols == 2 * cfg.d);

  // consistency with the scoring path
  Tape tp;
  const UserSequence* tr = split.train_of(user);
  const PaddedSeq ps = pad_truncate(*tr, cfg.seq_len);
  const Channel ch = model.route(parts.users, user);
  const NodeId q = model.encode(tp, ps, ch);
  const NodeId tn = model.next_time(tp, ch, tr->timestamps.back(), split.test.at(user).timestamp);
  const NodeId sc = score_candidates(tp, tp.row(q, ps.last_pos()), model.item_emb, {item}, tn);
  CHECK(d.score == tp.val(sc)[0]);

  const fs::path dir = fs::temp_directory_path() / "ufrec_case_test";
  fs::create_directories(dir);
  const std::string prefix = (dir / "case_full").string();
  write_case_dump(d, prefix);
  const CaseDump back = read_case_dump(prefix);
  CHECK(back.encoding == d.encoding);  // bit-exact
  CHECK(back.score == d.score);
  CHECK(back.variant == "full");
  CHECK_THROWS(compute_case(model, parts, split, 987654, item, "full"));
  fs::remove_all(dir);
}
