#pragma once
// Run configuration. Every key can come from built-in defaults, a config
// file (flat key=value lines or a JSON object with the same keys), or a CLI
// flag, in that precedence order.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ufrec/data.hpp"
#include "ufrec/partition.hpp"

namespace ufrec {

enum class ForceChannel { Off, Interval, Context };

inline const char* to_string(ForceChannel f) {
  switch (f) {
    case ForceChannel::Interval: return "interval";
    case ForceChannel::Context: return "context";
    default: return "off";
  }
}
inline ForceChannel force_channel_from(const std::string& s) {
  if (s == "off") return ForceChannel::Off;
  if (s == "interval") return ForceChannel::Interval;
  if (s == "context") return ForceChannel::Context;
  throw std::runtime_error("force_channel must be off|interval|context, got " + s);
}

struct TrainConfig {
  // model
  int d = 64;                // latent width
  int seq_len = 50;          // fixed sequence length N
  int heads = 2;
  int d_v = 0;               // per-head key/value width; 0 -> d
  int num_blocks = 1;
  bool layer_norm = false;
  int buckets = 64;          // interval bucket count B
  int base_year = 1970;
  int num_years = 60;
  std::string calendar_fields = "ymdw";  // any subset of y,m,d,w

  // optimization
  double lr = 0.01;
  int batch = 512;
  int e_all = 200;
  int patience = 20;
  std::uint64_t seed = 42;
  std::uint64_t data_seed = 0;   // 0 -> derived from seed
  std::uint64_t train_seed = 0;
  std::uint64_t eval_seed = 0;

  // enhancement
  int e_b = 5;   // epoch at which lambda_s / lambda_f activate
  int e_t = 20;  // epoch at which the transfer net freezes and lambda_l activates
  int min_subseq = 3;        // M, minimum derived-subsequence length
  int k_neighbors = 3;       // K, neighbors sampled per item per batch
  int max_candidates = 20;   // L, candidate-set size per item
  double theta = 0.0;        // Theta in days; 0 -> median pairwise gap
  double gamma = 0.0;        // Gamma in days; 0 -> 2*Theta
  double alpha_s = 1.0;
  double alpha_f = 1.0;
  double alpha_l = 1.0;
  double beta_consistency = 0.0;            // cross-channel consistency weight
  std::string se_reduction = "last";        // last|mean
  std::string frozen_target = "snapshot";   // snapshot|ema
  double frozen_ema_decay = 0.99;

  // objective
  int train_negatives = 100;

  // partitioning / data
  double uniform_ratio = 0.6;
  double frequent_ratio = 0.7;
  std::string partition_mode = "ratio";  // ratio|balanced
  std::string split_order = "paper";     // paper|conventional
  int k_user = 10;
  int k_item = 5;

  // ablation switches (true = component enabled)
  bool time_multi = true;  // A: multidimensional time modeling
  bool seq_enh = true;     // B: sequence enhancement
  bool item_enh = true;    // C: item enhancement
  bool pop_sim = true;     // D: popularity & similarity in neighbor scores

  std::string force_channel = "off";  // off|interval|context
  bool retrain_per_cell = false;      // study sweep retrains per grid cell

  // evaluation
  std::string eval_mode = "sampled";  // sampled|full
  std::string eval_ks = "10,20";
  int eval_negatives = 100;

  int dv() const { return d_v > 0 ? d_v : d; }
  std::uint64_t data_seed_eff() const { return data_seed ? data_seed : seed * 0x9e3779b97f4a7c15ULL + 1; }
  std::uint64_t train_seed_eff() const { return train_seed ? train_seed : seed * 0x9e3779b97f4a7c15ULL + 2; }
  std::uint64_t eval_seed_eff() const { return eval_seed ? eval_seed : seed * 0x9e3779b97f4a7c15ULL + 3; }
  ForceChannel forced() const {
    if (!time_multi) return ForceChannel::Interval;
    return force_channel_from(force_channel);
  }
  std::vector<int> ks() const {
    std::vector<int> out;
    std::stringstream ss(eval_ks);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) out.push_back(std::stoi(tok));
    }
    if (out.empty()) throw std::runtime_error("eval_ks is empty");
    return out;
  }

  void validate() const {
    if (d < 1 || seq_len < 1 || heads < 1 || buckets < 1 || num_blocks < 1)
      throw std::runtime_error("config: d, seq_len, heads, buckets, num_blocks must be positive");
    if (!(0 <= e_b && e_b <= e_t && e_t <= e_all))
      throw std::runtime_error("config: require 0 <= e_b <= e_t <= e_all");
    if (uniform_ratio <= 0.0 || uniform_ratio >= 1.0 || frequent_ratio <= 0.0 || frequent_ratio >= 1.0)
      throw std::runtime_error("config: partition ratios must lie in (0,1)");
    if (alpha_s < 0.0 || alpha_f < 0.0 || alpha_l < 0.0 || beta_consistency < 0.0)
      throw std::runtime_error("config: loss weights must be >= 0");
    if (min_subseq < 1 || k_neighbors < 1 || max_candidates < 1)
      throw std::runtime_error("config: M, K, L must be >= 1");
    if (train_negatives < 1 || eval_negatives < 1)
      throw std::runtime_error("config: negative-sample counts must be >= 1");
    if (se_reduction != "last" && se_reduction != "mean")
      throw std::runtime_error("config: se_reduction must be last|mean");
    if (frozen_target != "snapshot" && frozen_target != "ema")
      throw std::runtime_error("config: frozen_target must be snapshot|ema");
    if (eval_mode != "sampled" && eval_mode != "full")
      throw std::runtime_error("config: eval_mode must be sampled|full");
    split_order_from(split_order);
    partition_mode_from(partition_mode);
    force_channel_from(force_channel);
    for (char c : calendar_fields)
      if (c != 'y' && c != 'm' && c != 'd' && c != 'w')
        throw std::runtime_error("config: calendar_fields may only contain y,m,d,w");
    if (calendar_fields.empty()) throw std::runtime_error("config: calendar_fields is empty");
  }

  nlohmann::json to_json() const {
    return {
        {"d", d}, {"seq_len", seq_len}, {"heads", heads}, {"d_v", d_v},
        {"num_blocks", num_blocks}, {"layer_norm", layer_norm}, {"buckets", buckets},
        {"base_year", base_year}, {"num_years", num_years}, {"calendar_fields", calendar_fields},
        {"lr", lr}, {"batch", batch}, {"e_all", e_all}, {"patience", patience},
        {"seed", seed}, {"data_seed", data_seed}, {"train_seed", train_seed}, {"eval_seed", eval_seed},
        {"e_b", e_b}, {"e_t", e_t}, {"min_subseq", min_subseq}, {"k_neighbors", k_neighbors},
        {"max_candidates", max_candidates}, {"theta", theta}, {"gamma", gamma},
        {"alpha_s", alpha_s}, {"alpha_f", alpha_f}, {"alpha_l", alpha_l},
        {"beta_consistency", beta_consistency}, {"se_reduction", se_reduction},
        {"frozen_target", frozen_target}, {"frozen_ema_decay", frozen_ema_decay},
        {"train_negatives", train_negatives},
        {"uniform_ratio", uniform_ratio}, {"frequent_ratio", frequent_ratio},
        {"partition_mode", partition_mode}, {"split_order", split_order},
        {"k_user", k_user}, {"k_item", k_item},
        {"time_multi", time_multi}, {"seq_enh", seq_enh}, {"item_enh", item_enh}, {"pop_sim", pop_sim},
        {"force_channel", force_channel}, {"retrain_per_cell", retrain_per_cell},
        {"eval_mode", eval_mode}, {"eval_ks", eval_ks}, {"eval_negatives", eval_negatives},
    };
  }

  void apply_json(const nlohmann::json& j) {
    auto geti = [&](const char* k, int& v) { if (j.contains(k)) v = j.at(k).get<int>(); };
    auto getu = [&](const char* k, std::uint64_t& v) { if (j.contains(k)) v = j.at(k).get<std::uint64_t>(); };
    auto getd = [&](const char* k, double& v) { if (j.contains(k)) v = j.at(k).get<double>(); };
    auto getb = [&](const char* k, bool& v) { if (j.contains(k)) v = j.at(k).get<bool>(); };
    auto gets = [&](const char* k, std::string& v) { if (j.contains(k)) v = j.at(k).get<std::string>(); };
    geti("d", d); geti("seq_len", seq_len); geti("heads", heads); geti("d_v", d_v);
    geti("num_blocks", num_blocks); getb("layer_norm", layer_norm); geti("buckets", buckets);
    geti("base_year", base_year); geti("num_years", num_years); gets("calendar_fields", calendar_fields);
    getd("lr", lr); geti("batch", batch); geti("e_all", e_all); geti("patience", patience);
    getu("seed", seed); getu("data_seed", data_seed); getu("train_seed", train_seed); getu("eval_seed", eval_seed);
    geti("e_b", e_b); geti("e_t", e_t); geti("min_subseq", min_subseq); geti("k_neighbors", k_neighbors);
    geti("max_candidates", max_candidates); getd("theta", theta); getd("gamma", gamma);
    getd("alpha_s", alpha_s); getd("alpha_f", alpha_f); getd("alpha_l", alpha_l);
    getd("beta_consistency", beta_consistency); gets("se_reduction", se_reduction);
    gets("frozen_target", frozen_target); getd("frozen_ema_decay", frozen_ema_decay);
    geti("train_negatives", train_negatives);
    getd("uniform_ratio", uniform_ratio); getd("frequent_ratio", frequent_ratio);
    gets("partition_mode", partition_mode); gets("split_order", split_order);
    geti("k_user", k_user); geti("k_item", k_item);
    getb("time_multi", time_multi); getb("seq_enh", seq_enh); getb("item_enh", item_enh); getb("pop_sim", pop_sim);
    gets("force_channel", force_channel); getb("retrain_per_cell", retrain_per_cell);
    gets("eval_mode", eval_mode); gets("eval_ks", eval_ks); geti("eval_negatives", eval_negatives);
    for (const auto& [key, _] : j.items()) {
      if (!to_json().contains(key)) throw std::runtime_error("config: unknown key '" + key + "'");
    }
  }
};

// Accepts either a JSON object or flat `key=value` lines ('#' comments).
inline nlohmann::json parse_config_text(const std::string& text) {
  size_t i = 0;
  while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  if (i < text.size() && text[i] == '{') return nlohmann::json::parse(text);
  nlohmann::json j = nlohmann::json::object();
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (val == "true" || val == "false") {
      j[key] = (val == "true");
    } else {
      try {
        size_t used = 0;
        if (val.find_first_of(".eE") != std::string::npos) {
          const double d = std::stod(val, &used);
          if (used == val.size()) { j[key] = d; continue; }
        } else {
          const long long n = std::stoll(val, &used);
          if (used == val.size()) { j[key] = n; continue; }
        }
      } catch (const std::exception&) {
      }
      j[key] = val;
    }
  }
  return j;
}

inline TrainConfig load_config_file(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  base.apply_json(parse_config_text(ss.str()));
  return base;
}

}  // namespace ufrec
