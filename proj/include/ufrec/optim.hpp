#pragma once
// Named parameter registry, adaptive-moment updates, and the binary
// checkpoint format: a little-endian uint64 header length, a JSON header
// (names, shapes, step, seed, meta), then one float64 payload per named
// array concatenated in name order.

#include <cstring>
#include <fstream>
#include <map>
#include <random>

#include <json.hpp>

#include "ufrec/tensor.hpp"

namespace ufrec {

class ParameterStore {
 public:
  struct Entry {
    Tensor* t = nullptr;
    bool trainable = true;
    std::vector<double> m;  // first moment
    std::vector<double> v;  // second moment
  };

  void add(const std::string& name, Tensor& t, bool trainable = true) {
    if (entries_.count(name)) throw std::runtime_error("ParameterStore: duplicate name " + name);
    Entry e;
    e.t = &t;
    e.trainable = trainable;
    entries_.emplace(name, std::move(e));
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  Tensor& tensor(const std::string& name) { return *entries_.at(name).t; }
  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& entries() { return entries_; }
  std::int64_t step() const { return step_; }
  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t s) { seed_ = s; }

  void zero_grads() {
    for (auto& [name, e] : entries_) e.t->zero_grad();
  }

  // Seeded uniform [-1/sqrt(cols), 1/sqrt(cols)] init for weights; biases
  // start at zero and layer-norm gains at one.
  void init_params(std::uint64_t seed) {
    seed_ = seed;
    std::mt19937_64 rng(seed);
    for (auto& [name, e] : entries_) {
      Tensor& t = *e.t;
      if (name.ends_with(".b") || name.find("_b") != std::string::npos) {
        std::fill(t.val.begin(), t.val.end(), 0.0);
        continue;
      }
      if (name.find("ln") != std::string::npos && name.ends_with("_g")) {
        std::fill(t.val.begin(), t.val.end(), 1.0);
        continue;
      }
      const double bound = 1.0 / std::sqrt(static_cast<double>(t.cols));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& x : t.val) x = u(rng);
    }
  }

  // Standard adaptive-moment step; gradients are zeroed afterwards.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (auto& [name, e] : entries_) {
      if (!e.trainable) continue;
      Tensor& t = *e.t;
      t.ensure_grad();
      if (e.m.size() != t.size()) {
        e.m.assign(t.size(), 0.0);
        e.v.assign(t.size(), 0.0);
      }
      for (size_t i = 0; i < t.size(); ++i) {
        const double g = t.grad[i];
        e.m[i] = beta1 * e.m[i] + (1.0 - beta1) * g;
        e.v[i] = beta2 * e.v[i] + (1.0 - beta2) * g * g;
        const double mhat = e.m[i] / bc1;
        const double vhat = e.v[i] / bc2;
        t.val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
      t.zero_grad();
    }
  }

  // Value-level snapshot (values + moments + step) for best-epoch tracking.
  struct Snapshot {
    std::map<std::string, std::vector<double>> values;
    std::map<std::string, std::vector<double>> m, v;
    std::int64_t step = 0;
  };

  Snapshot snapshot() const {
    Snapshot s;
    s.step = step_;
    for (const auto& [name, e] : entries_) {
      s.values[name] = e.t->val;
      s.m[name] = e.m;
      s.v[name] = e.v;
    }
    return s;
  }

  void restore(const Snapshot& s) {
    step_ = s.step;
    for (auto& [name, e] : entries_) {
      e.t->val = s.values.at(name);
      e.m = s.m.at(name);
      e.v = s.v.at(name);
    }
  }

  void save(const std::string& path, const nlohmann::json& meta = {}) const {
    nlohmann::json header;
    std::vector<std::string> names;
    for (const auto& [name, e] : entries_) names.push_back(name);  // map is sorted
    header["format"] = "ufrec-ckpt-v1";
    header["names"] = names;
    auto& shapes = header["shapes"];
    auto& trainable = header["trainable"];
    for (const auto& [name, e] : entries_) {
      shapes[name] = {e.t->rows, e.t->cols};
      trainable[name] = e.trainable;
    }
    header["step"] = step_;
    header["seed"] = seed_;
    header["meta"] = meta;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    write_u64(out, hs.size());
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& name : names) {
      const Entry& e = entries_.at(name);
      write_doubles(out, e.t->val);
      write_doubles(out, e.m.empty() ? std::vector<double>(e.t->size(), 0.0) : e.m);
      write_doubles(out, e.v.empty() ? std::vector<double>(e.t->size(), 0.0) : e.v);
    }
    if (!out) throw std::runtime_error("short write on checkpoint: " + path);
  }

  // Loads into the already-registered tensors; names and shapes must match.
  nlohmann::json load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    const std::uint64_t hlen = read_u64(in);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header = nlohmann::json::parse(hs);
    if (header.value("format", "") != "ufrec-ckpt-v1")
      throw std::runtime_error("unrecognized checkpoint format in " + path);
    step_ = header.at("step").get<std::int64_t>();
    seed_ = header.at("seed").get<std::uint64_t>();
    for (const auto& name : header.at("names")) {
      const std::string n = name.get<std::string>();
      auto it = entries_.find(n);
      if (it == entries_.end()) throw std::runtime_error("checkpoint names unknown parameter " + n);
      const auto sh = header.at("shapes").at(n);
      if (sh[0].get<int>() != it->second.t->rows || sh[1].get<int>() != it->second.t->cols)
        throw std::runtime_error("checkpoint shape mismatch for " + n);
      read_doubles(in, it->second.t->val);
      it->second.m.resize(it->second.t->size());
      it->second.v.resize(it->second.t->size());
      read_doubles(in, it->second.m);
      read_doubles(in, it->second.v);
    }
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    return header.value("meta", nlohmann::json::object());
  }

 private:
  static void write_u64(std::ofstream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
  }
  static std::uint64_t read_u64(std::ifstream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }
  static void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    for (double x : v) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, 8);
      write_u64(out, bits);
    }
  }
  static void read_doubles(std::ifstream& in, std::vector<double>& v) {
    for (double& x : v) {
      const std::uint64_t bits = read_u64(in);
      std::memcpy(&x, &bits, 8);
    }
  }

  std::map<std::string, Entry> entries_;
  std::int64_t step_ = 0;
  std::uint64_t seed_ = 0;
};

}  // namespace ufrec
