#pragma once
// Command implementations behind the CLI. Each returns a process exit
// status: 0 success, 1 validation error (bad arguments, missing upstream
// artifact), 2 runtime failure. Keeping them here lets tests drive the
// full pipelines in-process.

#include <filesystem>
#include <iostream>

#include "ufrec/manifest.hpp"
#include "ufrec/synthetic.hpp"
#include "ufrec/trainer.hpp"

namespace ufrec {
namespace cmd {

namespace fs = std::filesystem;

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw ValidationError("missing required artifact: " + p.string());
}

inline void check_config(const TrainConfig& cfg) {
  try {
    check_config(cfg);
  } catch (const std::exception& e) {
    throw ValidationError(e.what());
  }
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

inline nlohmann::json read_json(const fs::path& p) {
  require_file(p);
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

// Shared artifact layout inside a work directory.
struct Paths {
  fs::path dir;
  fs::path interactions() const { return dir / "interactions.tsv"; }
  fs::path splits() const { return dir / "splits.json"; }
  fs::path users_tsv() const { return dir / "users.tsv"; }
  fs::path items_tsv() const { return dir / "items.tsv"; }
  fs::path partition() const { return dir / "partition.json"; }
  fs::path neighbors() const { return dir / "neighbors.json"; }
  fs::path checkpoint() const { return dir / "checkpoint.bin"; }
  fs::path train_log() const { return dir / "train_log.csv"; }
};

inline SplitDataset load_split_artifacts(const Paths& p) {
  require_file(p.interactions());
  require_file(p.splits());
  const SequenceData data = load_dense_interactions(p.interactions().string());
  const nlohmann::json sj = read_json(p.splits());
  const SplitOrder order = split_order_from(sj.at("split_order").get<std::string>());
  SplitDataset split = split_leave_one_out(data, order, nullptr);
  if (split.num_items != sj.at("num_items").get<int>())
    throw std::runtime_error("splits.json disagrees with interactions.tsv on the item universe");
  return split;
}

inline int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
}

// synth: write a planted-structure (or cycle) dataset as raw TSV.
inline int synth(const std::string& kind, const std::string& out_path, std::uint64_t seed,
                 int users, int items) {
  return run_guarded([&] {
    if (kind == "planted") {
      synth::PlantedConfig c;
      c.seed = seed;
      if (users > 0) c.users = users;
      if (items > 0) c.items = items;
      synth::write_tsv(synth::planted(c), out_path);
    } else if (kind == "cycle") {
      synth::CycleConfig c;
      c.seed = seed;
      if (users > 0) c.users = users;
      if (items > 0) c.items = items;
      synth::write_tsv(synth::cycle(c), out_path);
    } else {
      throw ValidationError("synth kind must be planted|cycle, got " + kind);
    }
    std::cout << "wrote " << out_path << "\n";
  });
}

// prepare: raw TSV -> k-core filter -> dense sequences -> leave-one-out split.
inline int prepare(const std::string& data_path, const TrainConfig& cfg, const std::string& out_dir) {
  return run_guarded([&] {
    check_config(cfg);
    if (data_path.empty()) throw ValidationError("prepare: --data is required");
    require_file(data_path);
    fs::create_directories(out_dir);
    Paths p{out_dir};
    RunManifest man;
    man.command = "prepare";
    man.config = cfg;
    man.inputs = {data_path};

    auto rows = load_interactions(data_path);
    rows = k_core_filter(std::move(rows), cfg.k_user, cfg.k_item);
    if (rows.empty()) throw std::runtime_error("prepare: k-core filtering removed everything");
    const SequenceData data = build_sequences(rows);
    const SplitDataset split =
        split_leave_one_out(data, split_order_from(cfg.split_order), &std::cerr);
    if (split.train.empty()) throw std::runtime_error("prepare: no user has >= 3 interactions");

    write_dense_interactions(data, p.interactions().string());
    write_id_maps(data, p.users_tsv().string(), p.items_tsv().string());
    write_text(p.splits(), split_to_json(split).dump(2) + "\n");
    man.outputs = {p.interactions().string(), p.users_tsv().string(), p.items_tsv().string(),
                   p.splits().string()};
    man.write(out_dir);
    std::cout << "prepared " << split.train.size() << " users, " << split.num_items << " items\n";
  });
}

// partition: uniformity + frequency labels over the train split.
inline int partition(const TrainConfig& cfg, const std::string& out_dir) {
  return run_guarded([&] {
    check_config(cfg);
    Paths p{out_dir};
    const SplitDataset split = load_split_artifacts(p);
    RunManifest man;
    man.command = "partition";
    man.config = cfg;
    man.inputs = {p.interactions().string(), p.splits().string()};
    const PartitionIndex parts = build_partitions(split, cfg.uniform_ratio, cfg.frequent_ratio,
                                                  partition_mode_from(cfg.partition_mode));
    write_text(p.partition(), partition_to_json(parts).dump(2) + "\n");
    man.outputs = {p.partition().string()};
    man.write(out_dir);
    long uniform = 0;
    for (const auto& [u, lab] : parts.users.uniform) uniform += lab ? 1 : 0;
    std::cout << "partitioned: " << uniform << "/" << parts.users.uniform.size()
              << " uniform users, F in [" << parts.items.f_min << "," << parts.items.f_max << "]\n";
  });
}

// train: full multi-task fit; emits checkpoint + log + neighbors.json.
inline int train(const TrainConfig& cfg, const std::string& out_dir) {
  return run_guarded([&] {
    check_config(cfg);
    Paths p{out_dir};
    const SplitDataset split = load_split_artifacts(p);
    RunManifest man;
    man.command = "train";
    man.config = cfg;
    man.inputs = {p.interactions().string(), p.splits().string()};

    const TrainedBundle bundle = train_model(cfg, split);
    bundle.model->save(p.checkpoint().string());
    write_text(p.train_log(), log_to_csv(bundle.result.log));
    man.outputs = {p.checkpoint().string(), p.train_log().string()};
    if (cfg.item_enh) {
      write_text(p.neighbors(), neighbors_to_json(bundle.candidates).dump() + "\n");
      man.outputs.push_back(p.neighbors().string());
    }
    // keep the labels the model was trained under next to the checkpoint
    write_text(p.partition(), partition_to_json(bundle.partitions).dump(2) + "\n");
    man.outputs.push_back(p.partition().string());
    man.write(out_dir);
    std::cout << "trained " << bundle.result.log.size() << " epochs, best val ndcg@10 "
              << bundle.result.best_val << " at epoch " << bundle.result.best_epoch << "\n";
  });
}

// evaluate: metric report on the test (or validation) holdout.
inline int evaluate_cmd(const TrainConfig& cfg, const std::string& out_dir,
                        const std::string& target = "test") {
  return run_guarded([&] {
    check_config(cfg);
    Paths p{out_dir};
    const SplitDataset split = load_split_artifacts(p);
    require_file(p.checkpoint());
    require_file(p.partition());
    auto model = ModelState::load(p.checkpoint().string());
    const PartitionIndex parts = partition_from_json(read_json(p.partition()));
    RunManifest man;
    man.command = "evaluate";
    man.config = cfg;
    man.inputs = {p.interactions().string(), p.splits().string(), p.checkpoint().string(),
                  p.partition().string()};

    EvalOptions opt;
    opt.mode = cfg.eval_mode;
    opt.ks = cfg.ks();
    opt.eval_seed = cfg.eval_seed_eff();
    opt.num_negatives = cfg.eval_negatives;
    opt.target = target == "validation" ? EvalTarget::Validation : EvalTarget::Test;
    const MetricReport report = evaluate(model_scorer(*model, parts), split, parts, opt);

    const fs::path jpath = p.dir / ("metrics_" + target + ".json");
    const fs::path cpath = p.dir / ("metrics_" + target + ".csv");
    write_text(jpath, report.to_json().dump(2) + "\n");
    write_text(cpath, report.to_csv());
    man.outputs = {jpath.string(), cpath.string()};
    man.write(out_dir);
    for (int k : opt.ks)
      std::cout << "ndcg@" << k << " " << report.get(Scope::Overall, "ndcg", k) << "  hr@" << k
                << " " << report.get(Scope::Overall, "hr", k) << "  mrr@" << k << " "
                << report.get(Scope::Overall, "mrr", k) << "\n";
  });
}

inline std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stod(tok));
  return out;
}

// study: partition-threshold sweep over sequence and item ratio grids.
inline int study(const TrainConfig& cfg, const std::string& out_dir, const std::string& seq_grid,
                 const std::string& item_grid) {
  return run_guarded([&] {
    check_config(cfg);
    Paths p{out_dir};
    const SplitDataset split = load_split_artifacts(p);
    require_file(p.checkpoint());
    auto model = ModelState::load(p.checkpoint().string());
    RunManifest man;
    man.command = "study";
    man.config = cfg;
    man.inputs = {p.interactions().string(), p.splits().string(), p.checkpoint().string()};

    EvalOptions opt;
    opt.mode = cfg.eval_mode;
    opt.ks = cfg.ks();
    opt.eval_seed = cfg.eval_seed_eff();
    opt.num_negatives = cfg.eval_negatives;
    RetrainFn retrain = nullptr;
    if (cfg.retrain_per_cell) {
      retrain = [&](double useq, double uitem) {
        TrainConfig cell = cfg;
        cell.uniform_ratio = useq;
        cell.frequent_ratio = uitem;
        return train_model(cell, split).model;
      };
    }
    const auto rows = study_sweep(*model, split, cfg, parse_grid(seq_grid), parse_grid(item_grid),
                                  opt, retrain);
    const fs::path out = p.dir / "study_sweep.csv";
    write_text(out, sweep_to_csv(rows));
    man.outputs = {out.string()};
    man.write(out_dir);
    std::cout << "study: " << rows.size() << " grid cells -> " << out.string() << "\n";
  });
}

// sensitivity: interval-only vs context-only variants, identical seeds.
inline int sensitivity(const TrainConfig& cfg, const std::string& out_dir) {
  return run_guarded([&] {
    check_config(cfg);
    Paths p{out_dir};
    const SplitDataset split = load_split_artifacts(p);
    RunManifest man;
    man.command = "sensitivity";
    man.config = cfg;
    man.inputs = {p.interactions().string(), p.splits().string()};

    TrainConfig ci = cfg;
    ci.force_channel = "interval";
    TrainConfig cc = cfg;
    cc.force_channel = "context";
    const TrainedBundle bi = train_model(ci, split);
    const TrainedBundle bc = train_model(cc, split);

    EvalOptions opt;
    opt.mode = cfg.eval_mode;
    opt.ks = cfg.ks();
    opt.eval_seed = cfg.eval_seed_eff();
    opt.num_negatives = cfg.eval_negatives;
    const MetricReport ri = evaluate(model_scorer(*bi.model, bi.partitions), split, bi.partitions, opt);
    const MetricReport rc = evaluate(model_scorer(*bc.model, bc.partitions), split, bc.partitions, opt);
    const auto rows = time_sensitivity(ri, rc);
    const fs::path out = p.dir / "sensitivity.csv";
    write_text(out, sensitivity_to_csv(rows));
    man.outputs = {out.string()};
    man.write(out_dir);
    std::cout << "sensitivity: wrote " << out.string() << "\n";
  });
}

// case: per-variant encoding + score dumps for one (user, item) pair.
// variants: comma-separated name=checkpoint pairs, or empty to use the
// work dir's checkpoint as variant "full".
inline int case_dump_cmd(const TrainConfig& cfg, const std::string& out_dir, int user, int item,
                         const std::string& variants) {
  return run_guarded([&] {
    check_config(cfg);
    Paths p{out_dir};
    const SplitDataset split = load_split_artifacts(p);
    require_file(p.partition());
    const PartitionIndex parts = partition_from_json(read_json(p.partition()));
    RunManifest man;
    man.command = "case";
    man.config = cfg;
    man.inputs = {p.interactions().string(), p.splits().string(), p.partition().string()};

    std::vector<std::pair<std::string, std::string>> pairs;
    if (variants.empty()) {
      require_file(p.checkpoint());
      pairs.emplace_back("full", p.checkpoint().string());
    } else {
      std::stringstream ss(variants);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos)
          throw ValidationError("case: variants must be name=checkpoint pairs, got " + tok);
        pairs.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
      }
    }
    for (const auto& [name, ckpt] : pairs) {
      require_file(ckpt);
      man.inputs.push_back(ckpt);
      auto model = ModelState::load(ckpt);
      const CaseDump d = compute_case(*model, parts, split, user, item, name);
      const std::string prefix =
          (p.dir / ("case_u" + std::to_string(user) + "_i" + std::to_string(item) + "_" + name))
              .string();
      write_case_dump(d, prefix);
      man.outputs.push_back(prefix + ".bin");
      man.outputs.push_back(prefix + ".json");
      std::cout << "variant " << name << ": score " << d.score << " -> " << prefix << ".{bin,json}\n";
    }
    man.write(out_dir);
  });
}

}  // namespace cmd
}  // namespace ufrec
