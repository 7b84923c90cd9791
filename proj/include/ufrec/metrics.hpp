#pragma once
// Single-relevant-item ranking metrics and the per-scope report.

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace ufrec {

struct RankMetrics {
  double ndcg = 0.0;
  double hr = 0.0;
  double mrr = 0.0;
};

// rank is 1-based; nullopt means the positive was not in the ranked list.
inline RankMetrics rank_metrics(std::optional<int> rank, int k) {
  if (rank && *rank < 1) throw std::runtime_error("rank_metrics: rank must be >= 1");
  RankMetrics m;
  if (rank && *rank <= k) {
    m.hr = 1.0;
    m.ndcg = 1.0 / std::log2(static_cast<double>(*rank) + 1.0);
    m.mrr = 1.0 / static_cast<double>(*rank);
  }
  return m;
}

enum class Scope { Overall, SeqUniform, SeqNonUniform, ItemFrequent, ItemLessFrequent };

inline const char* to_string(Scope s) {
  switch (s) {
    case Scope::Overall: return "overall";
    case Scope::SeqUniform: return "S_u";
    case Scope::SeqNonUniform: return "S_n";
    case Scope::ItemFrequent: return "I_f";
    case Scope::ItemLessFrequent: return "I_l";
  }
  return "?";
}

inline const std::vector<Scope>& all_scopes() {
  static const std::vector<Scope> s = {Scope::Overall, Scope::SeqUniform, Scope::SeqNonUniform,
                                       Scope::ItemFrequent, Scope::ItemLessFrequent};
  return s;
}

struct MetricReport {
  std::string mode;       // sampled|full
  std::vector<int> ks;
  std::map<std::string, long> counts;                      // scope -> users
  std::map<std::string, std::map<std::string, double>> values;  // scope -> "ndcg@10" -> value

  double get(Scope scope, const std::string& metric, int k) const {
    return values.at(to_string(scope)).at(metric + "@" + std::to_string(k));
  }
  long count(Scope scope) const { return counts.at(to_string(scope)); }

  nlohmann::json to_json() const {
    nlohmann::json scopes = nlohmann::json::object();
    for (const auto& [scope, vals] : values) {
      scopes[scope] = {{"count", counts.at(scope)}, {"metrics", vals}};
    }
    return {{"mode", mode}, {"ks", ks}, {"scopes", std::move(scopes)}};
  }

  std::string to_csv() const {
    std::string out = "scope,metric,k,value,count\n";
    for (const auto& [scope, vals] : values)
      for (const auto& [mk, v] : vals) {
        const auto at = mk.find('@');
        out += scope + "," + mk.substr(0, at) + "," + mk.substr(at + 1) + "," +
               std::to_string(v) + "," + std::to_string(counts.at(scope)) + "\n";
      }
    return out;
  }
};

// Accumulates per-user metric triples into per-scope means.
class ReportBuilder {
 public:
  ReportBuilder(const std::vector<int>& ks, std::string mode) : ks_(ks), mode_(std::move(mode)) {}

  void add(const std::vector<Scope>& scopes, std::optional<int> rank) {
    for (Scope s : scopes) {
      auto& acc = acc_[to_string(s)];
      ++acc.n;
      for (int k : ks_) {
        const RankMetrics m = rank_metrics(rank, k);
        acc.sums["ndcg@" + std::to_string(k)] += m.ndcg;
        acc.sums["hr@" + std::to_string(k)] += m.hr;
        acc.sums["mrr@" + std::to_string(k)] += m.mrr;
      }
    }
  }

  MetricReport finish() const {
    MetricReport r;
    r.mode = mode_;
    r.ks = ks_;
    for (Scope s : all_scopes()) {
      const char* name = to_string(s);
      auto it = acc_.find(name);
      const long n = it == acc_.end() ? 0 : it->second.n;
      r.counts[name] = n;
      auto& vals = r.values[name];
      for (int k : ks_)
        for (const char* m : {"ndcg", "hr", "mrr"}) {
          const std::string key = std::string(m) + "@" + std::to_string(k);
          vals[key] = n == 0 ? 0.0 : it->second.sums.at(key) / static_cast<double>(n);
        }
    }
    return r;
  }

 private:
  struct Acc {
    long n = 0;
    std::map<std::string, double> sums;
  };
  std::vector<int> ks_;
  std::string mode_;
  std::map<std::string, Acc> acc_;
};

}  // namespace ufrec
