#pragma once
// Per-command run manifest: enough to re-run the command and to audit what
// it read and wrote. One manifest.json per artifact directory.

#include <chrono>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ufrec/config.hpp"

namespace ufrec {

// FNV-1a 64 over file bytes; used for reproducibility bookkeeping.
inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("digest: cannot open " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (in.eof()) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return std::string("fnv1a64:") + hex;
}

struct RunManifest {
  std::string command;
  TrainConfig config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  void write(const std::filesystem::path& out_dir) const {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = config.to_json();
    j["seeds"] = {{"data", config.data_seed_eff()},
                  {"train", config.train_seed_eff()},
                  {"eval", config.eval_seed_eff()}};
    nlohmann::json ins = nlohmann::json::object();
    for (const auto& p : inputs) ins[p] = file_digest(p);
    j["inputs"] = std::move(ins);
    nlohmann::json outs = nlohmann::json::object();
    for (const auto& p : outputs) outs[p] = file_digest(p);
    j["outputs"] = std::move(outs);
    j["wall_clock_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::ofstream f(out_dir / "manifest.json");
    if (!f) throw std::runtime_error("cannot write manifest in " + out_dir.string());
    f << j.dump(2) << "\n";
  }
};

}  // namespace ufrec
