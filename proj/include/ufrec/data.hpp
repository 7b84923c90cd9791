#pragma once
// Interaction-log ingestion: TSV parsing, k-core filtering, chronological
// per-user sequences with dense id remapping, leave-one-out splitting,
// padding, and negative sampling.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "ufrec/tensor.hpp"

namespace ufrec {

struct RawInteraction {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;
};

struct UserSequence {
  int user = 0;                      // dense id
  std::vector<int> items;            // dense ids, >= 1 (0 is the padding id)
  std::vector<std::int64_t> timestamps;
};

// Dense remapping result. Item dense ids start at 1 so the embedding row 0
// can stay a constant zero vector; user ids start at 0.
struct SequenceData {
  std::vector<UserSequence> sequences;           // sorted by dense user id
  std::vector<std::string> user_of_id;           // dense -> raw
  std::vector<std::string> item_of_id;           // dense -> raw; slot 0 is "<pad>"
  std::unordered_map<std::string, int> user_ids; // raw -> dense
  std::unordered_map<std::string, int> item_ids; // raw -> dense
  int num_items() const { return static_cast<int>(item_of_id.size()) - 1; }
};

struct Holdout {
  int item = 0;
  std::int64_t timestamp = 0;
};

enum class SplitOrder { Paper, Conventional };

inline const char* to_string(SplitOrder o) { return o == SplitOrder::Paper ? "paper" : "conventional"; }
inline SplitOrder split_order_from(const std::string& s) {
  if (s == "paper") return SplitOrder::Paper;
  if (s == "conventional") return SplitOrder::Conventional;
  throw std::runtime_error("split_order must be paper|conventional, got " + s);
}

struct SplitDataset {
  std::vector<UserSequence> train;               // per-user prefix sequences
  std::unordered_map<int, Holdout> validation;   // user -> held-out interaction
  std::unordered_map<int, Holdout> test;
  std::unordered_map<int, int> train_idx;        // user -> index into train
  int num_items = 0;
  SplitOrder order = SplitOrder::Paper;

  const UserSequence* train_of(int user) const {
    auto it = train_idx.find(user);
    return it == train_idx.end() ? nullptr : &train[it->second];
  }
};

inline std::vector<RawInteraction> load_interactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open interaction file: " + path);
  std::vector<RawInteraction> rows;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected user<TAB>item<TAB>timestamp");
    RawInteraction r;
    r.user = line.substr(0, t1);
    r.item = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string ts = line.substr(t2 + 1);
    try {
      size_t used = 0;
      r.timestamp = std::stoll(ts, &used);
      if (used != ts.size()) throw std::invalid_argument(ts);
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad timestamp '" + ts + "'");
    }
    if (r.user.empty() || r.item.empty() || r.timestamp < 0)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty field or negative timestamp");
    rows.push_back(std::move(r));
  }
  return rows;
}

// Iteratively removes users with fewer than k_user interactions and items
// with fewer than k_item until both thresholds hold; keeps input order.
inline std::vector<RawInteraction> k_core_filter(std::vector<RawInteraction> rows, int k_user,
                                                 int k_item) {
  if (k_user < 1 || k_item < 1) throw std::runtime_error("k_core_filter: thresholds must be >= 1");
  bool changed = true;
  while (changed) {
    changed = false;
    std::unordered_map<std::string, int> uc, ic;
    for (const auto& r : rows) {
      ++uc[r.user];
      ++ic[r.item];
    }
    std::vector<RawInteraction> keep;
    keep.reserve(rows.size());
    for (auto& r : rows) {
      if (uc[r.user] < k_user || ic[r.item] < k_item) {
        changed = true;
        continue;
      }
      keep.push_back(std::move(r));
    }
    rows = std::move(keep);
  }
  return rows;
}

// Chronological per-user sequences; tie-break is the input order (stable
// sort on timestamp only). Dense ids are assigned by first appearance.
inline SequenceData build_sequences(const std::vector<RawInteraction>& rows) {
  if (rows.empty()) throw std::runtime_error("build_sequences: empty input");
  SequenceData out;
  out.item_of_id.push_back("<pad>");
  struct Ev {
    int item;
    std::int64_t ts;
  };
  std::vector<std::vector<Ev>> per_user;
  for (const auto& r : rows) {
    auto [uit, unew] = out.user_ids.try_emplace(r.user, static_cast<int>(out.user_of_id.size()));
    if (unew) {
      out.user_of_id.push_back(r.user);
      per_user.emplace_back();
    }
    auto [iit, inew] = out.item_ids.try_emplace(r.item, static_cast<int>(out.item_of_id.size()));
    if (inew) out.item_of_id.push_back(r.item);
    per_user[uit->second].push_back({iit->second, r.timestamp});
  }
  for (size_t u = 0; u < per_user.size(); ++u) {
    auto& evs = per_user[u];
    std::stable_sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) { return a.ts < b.ts; });
    UserSequence s;
    s.user = static_cast<int>(u);
    s.items.reserve(evs.size());
    s.timestamps.reserve(evs.size());
    for (const auto& e : evs) {
      s.items.push_back(e.item);
      s.timestamps.push_back(e.ts);
    }
    out.sequences.push_back(std::move(s));
  }
  return out;
}

// Paper order holds out the final interaction for validation and the
// penultimate one for test; conventional order is the reverse. Users with
// fewer than 3 interactions are dropped with a warning.
inline SplitDataset split_leave_one_out(const SequenceData& data,
                                        SplitOrder order = SplitOrder::Paper,
                                        std::ostream* warn = &std::cerr) {
  SplitDataset out;
  out.num_items = data.num_items();
  out.order = order;
  for (const auto& s : data.sequences) {
    const size_t n = s.items.size();
    if (n < 3) {
      if (warn)
        (*warn) << "split: user " << s.user << " has " << n << " interactions (<3), excluded\n";
      continue;
    }
    UserSequence tr;
    tr.user = s.user;
    tr.items.assign(s.items.begin(), s.items.end() - 2);
    tr.timestamps.assign(s.timestamps.begin(), s.timestamps.end() - 2);
    Holdout penult{s.items[n - 2], s.timestamps[n - 2]};
    Holdout last{s.items[n - 1], s.timestamps[n - 1]};
    if (order == SplitOrder::Paper) {
      out.test[s.user] = penult;
      out.validation[s.user] = last;
    } else {
      out.validation[s.user] = penult;
      out.test[s.user] = last;
    }
    out.train_idx[s.user] = static_cast<int>(out.train.size());
    out.train.push_back(std::move(tr));
  }
  return out;
}

struct PaddedSeq {
  std::vector<int> items;              // length N, left-padded with 0
  std::vector<std::int64_t> timestamps;
  std::vector<std::uint8_t> mask;      // 1 at valid slots
  int valid = 0;                       // number of real interactions
  int last_pos() const { return static_cast<int>(items.size()) - 1; }
};

// Left-pads short sequences with the reserved id 0; keeps the most recent
// N interactions of long ones.
inline PaddedSeq pad_truncate(const std::vector<int>& items,
                              const std::vector<std::int64_t>& timestamps, int n) {
  if (n < 1) throw std::runtime_error("pad_truncate: N must be >= 1");
  if (items.size() != timestamps.size())
    throw std::runtime_error("pad_truncate: items/timestamps length mismatch");
  PaddedSeq out;
  out.items.assign(n, 0);
  out.timestamps.assign(n, 0);
  out.mask.assign(n, 0);
  const int len = static_cast<int>(items.size());
  const int keep = std::min(len, n);
  out.valid = keep;
  for (int i = 0; i < keep; ++i) {
    const int src = len - keep + i;
    const int dst = n - keep + i;
    out.items[dst] = items[src];
    out.timestamps[dst] = timestamps[src];
    out.mask[dst] = 1;
  }
  return out;
}

inline PaddedSeq pad_truncate(const UserSequence& s, int n) {
  return pad_truncate(s.items, s.timestamps, n);
}

// n distinct items the user never interacted with, uniform over the
// universe {1..num_items} minus the history.
inline std::vector<int> sample_negatives(const std::unordered_set<int>& history, int num_items,
                                         int n, std::mt19937_64& rng) {
  if (n < 1) throw std::runtime_error("sample_negatives: n must be >= 1");
  const std::int64_t allowed = static_cast<std::int64_t>(num_items) - static_cast<std::int64_t>(history.size());
  if (allowed < n)
    throw std::runtime_error("sample_negatives: universe too small (" + std::to_string(allowed) +
                             " candidates for n=" + std::to_string(n) + ")");
  std::vector<int> out;
  out.reserve(n);
  if (allowed < static_cast<std::int64_t>(4) * n) {
    // Dense regime: enumerate and take a random prefix.
    std::vector<int> pool;
    pool.reserve(allowed);
    for (int i = 1; i <= num_items; ++i)
      if (!history.count(i)) pool.push_back(i);
    for (int k = 0; k < n; ++k) {
      std::uniform_int_distribution<size_t> pick(k, pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
      out.push_back(pool[k]);
    }
    return out;
  }
  std::unordered_set<int> seen;
  std::uniform_int_distribution<int> pick(1, num_items);
  while (static_cast<int>(out.size()) < n) {
    const int cand = pick(rng);
    if (history.count(cand) || seen.count(cand)) continue;
    seen.insert(cand);
    out.push_back(cand);
  }
  return out;
}

inline std::unordered_set<int> full_history(const SplitDataset& split, int user) {
  std::unordered_set<int> h;
  if (const UserSequence* tr = split.train_of(user))
    h.insert(tr->items.begin(), tr->items.end());
  if (auto it = split.validation.find(user); it != split.validation.end()) h.insert(it->second.item);
  if (auto it = split.test.find(user); it != split.test.end()) h.insert(it->second.item);
  return h;
}

// ---- artifact serialization ------------------------------------------------

inline void write_id_maps(const SequenceData& data, const std::string& users_path,
                          const std::string& items_path) {
  std::ofstream us(users_path);
  if (!us) throw std::runtime_error("cannot write " + users_path);
  for (size_t i = 0; i < data.user_of_id.size(); ++i) us << i << '\t' << data.user_of_id[i] << '\n';
  std::ofstream is(items_path);
  if (!is) throw std::runtime_error("cannot write " + items_path);
  for (size_t i = 1; i < data.item_of_id.size(); ++i) is << i << '\t' << data.item_of_id[i] << '\n';
}

inline nlohmann::json split_to_json(const SplitDataset& split) {
  nlohmann::json users = nlohmann::json::object();
  for (const auto& tr : split.train) {
    nlohmann::json u;
    u["train"] = tr.items;
    u["test"] = split.test.at(tr.user).item;
    u["valid"] = split.validation.at(tr.user).item;
    users[std::to_string(tr.user)] = std::move(u);
  }
  nlohmann::json out;
  out["users"] = std::move(users);
  out["num_items"] = split.num_items;
  out["split_order"] = to_string(split.order);
  return out;
}

// Dense interactions in per-user chronological order; the processed form
// downstream commands consume.
inline void write_dense_interactions(const SequenceData& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& s : data.sequences)
    for (size_t i = 0; i < s.items.size(); ++i)
      out << s.user << '\t' << s.items[i] << '\t' << s.timestamps[i] << '\n';
}

inline SequenceData load_dense_interactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  SequenceData out;
  out.item_of_id.push_back("<pad>");
  std::string line;
  int max_user = -1, max_item = 0;
  struct Row {
    int u, i;
    std::int64_t t;
  };
  std::vector<Row> rows;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Row r{};
    if (!(ss >> r.u >> r.i >> r.t))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad dense interaction row");
    max_user = std::max(max_user, r.u);
    max_item = std::max(max_item, r.i);
    rows.push_back(r);
  }
  out.sequences.resize(max_user + 1);
  for (int u = 0; u <= max_user; ++u) out.sequences[u].user = u;
  for (const auto& r : rows) {
    out.sequences[r.u].items.push_back(r.i);
    out.sequences[r.u].timestamps.push_back(r.t);
  }
  out.user_of_id.resize(max_user + 1);
  for (int u = 0; u <= max_user; ++u) out.user_of_id[u] = std::to_string(u);
  out.item_of_id.resize(max_item + 1, "");
  for (int i = 1; i <= max_item; ++i) out.item_of_id[i] = std::to_string(i);
  return out;
}

}  // namespace ufrec
