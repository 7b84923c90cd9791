// ufrec command-line front end. Subcommands wire the library pipelines into
// reproducible experiment runs; config precedence is built-in defaults, then
// --config file values, then explicit CLI flags.

#include <CLI11.hpp>

#include "ufrec/commands.hpp"

namespace {

using ufrec::TrainConfig;

struct ConfigCli {
  std::string config_path;
  std::map<std::string, std::string> supplied;  // raw CLI values by config key

  // Registers one option per config key, named --like-this, with the
  // built-in default displayed in --help.
  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "config file (key=value lines or JSON)");
    const nlohmann::json defaults = TrainConfig{}.to_json();
    for (const auto& [key, value] : defaults.items()) {
      std::string flag = "--" + key;
      for (auto& c : flag)
        if (c == '_') c = '-';
      const std::string k = key;
      auto* opt = app->add_option(flag)
                      ->description("config key " + key)
                      ->each([this, k](const std::string& v) { supplied[k] = v; });
      opt->default_str(value.is_string() ? value.get<std::string>() : value.dump());
    }
  }

  TrainConfig resolve(const std::string& ablate, const std::string& mode,
                      const std::string& ks) const {
    TrainConfig cfg;
    if (!config_path.empty()) cfg = ufrec::load_config_file(config_path);
    std::string kv;
    for (const auto& [key, value] : supplied) kv += key + "=" + value + "\n";
    if (!kv.empty()) cfg.apply_json(ufrec::parse_config_text(kv));
    for (char c : ablate) {
      switch (std::tolower(static_cast<unsigned char>(c))) {
        case 'a': cfg.time_multi = false; break;
        case 'b': cfg.seq_enh = false; break;
        case 'c': cfg.item_enh = false; break;
        case 'd': cfg.pop_sim = false; break;
        case ',': case ' ': break;
        default:
          throw CLI::ValidationError("--ablate", "components are a,b,c,d");
      }
    }
    if (!mode.empty()) cfg.eval_mode = mode;
    if (!ks.empty()) cfg.eval_ks = ks;
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UFRec: uniformity/frequency-enhanced sequential recommendation lab"};
  app.require_subcommand(1);

  std::string data_path, out_dir = "runs/out", ablate, mode, ks;
  std::string synth_kind = "planted", eval_target = "test";
  std::string seq_grid = "0.3,0.4,0.5,0.6,0.7,0.8", item_grid = "0.4,0.5,0.6,0.7,0.8,0.9";
  std::string variants;
  int case_user = 0, case_item = 1, synth_users = 0, synth_items = 0;
  std::uint64_t synth_seed = 7;

  auto add_common = [&](CLI::App* sub, ConfigCli& cc, bool with_data) {
    if (with_data) sub->add_option("--data", data_path, "raw interaction TSV (user\\titem\\tts)");
    sub->add_option("--out", out_dir, "artifact directory")->capture_default_str();
    sub->add_option("--ablate", ablate, "disable components, e.g. a,b,c,d");
    sub->add_option("--mode", mode, "evaluation mode: sampled|full");
    sub->add_option("--k", ks, "metric cutoffs, e.g. 10,20");
    cc.attach(sub);
  };

  ConfigCli cc_prepare, cc_partition, cc_train, cc_eval, cc_study, cc_sens, cc_case;

  auto* sc_synth = app.add_subcommand("synth", "generate a synthetic interaction TSV");
  sc_synth->add_option("--kind", synth_kind, "planted|cycle")->capture_default_str();
  sc_synth->add_option("--out", out_dir, "output TSV path")->required();
  sc_synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
  sc_synth->add_option("--users", synth_users, "user count (0 = generator default)");
  sc_synth->add_option("--items", synth_items, "item count (0 = generator default)");

  auto* sc_prepare = app.add_subcommand("prepare", "ingest, k-core filter, split");
  add_common(sc_prepare, cc_prepare, true);
  auto* sc_partition = app.add_subcommand("partition", "uniformity/frequency labels");
  add_common(sc_partition, cc_partition, false);
  auto* sc_train = app.add_subcommand("train", "multi-task training with early stopping");
  add_common(sc_train, cc_train, false);
  auto* sc_eval = app.add_subcommand("evaluate", "metric report on the held-out split");
  add_common(sc_eval, cc_eval, false);
  sc_eval->add_option("--target", eval_target, "test|validation")->capture_default_str();
  auto* sc_study = app.add_subcommand("study", "partition-threshold sweep");
  add_common(sc_study, cc_study, false);
  sc_study->add_option("--seq-grid", seq_grid, "sequence-ratio grid")->capture_default_str();
  sc_study->add_option("--item-grid", item_grid, "item-ratio grid")->capture_default_str();
  auto* sc_sens = app.add_subcommand("sensitivity", "interval-only vs context-only comparison");
  add_common(sc_sens, cc_sens, false);
  auto* sc_case = app.add_subcommand("case", "dump encodings + score for one user/item");
  add_common(sc_case, cc_case, false);
  sc_case->add_option("--user", case_user, "dense user id")->required();
  sc_case->add_option("--item", case_item, "dense item id")->required();
  sc_case->add_option("--variants", variants, "name=checkpoint[,name=checkpoint...]");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sc_synth->parsed())
      return ufrec::cmd::synth(synth_kind, out_dir, synth_seed, synth_users, synth_items);
    if (sc_prepare->parsed())
      return ufrec::cmd::prepare(data_path, cc_prepare.resolve(ablate, mode, ks), out_dir);
    if (sc_partition->parsed())
      return ufrec::cmd::partition(cc_partition.resolve(ablate, mode, ks), out_dir);
    if (sc_train->parsed()) return ufrec::cmd::train(cc_train.resolve(ablate, mode, ks), out_dir);
    if (sc_eval->parsed())
      return ufrec::cmd::evaluate_cmd(cc_eval.resolve(ablate, mode, ks), out_dir, eval_target);
    if (sc_study->parsed())
      return ufrec::cmd::study(cc_study.resolve(ablate, mode, ks), out_dir, seq_grid, item_grid);
    if (sc_sens->parsed()) return ufrec::cmd::sensitivity(cc_sens.resolve(ablate, mode, ks), out_dir);
    if (sc_case->parsed())
      return ufrec::cmd::case_dump_cmd(cc_case.resolve(ablate, mode, ks), out_dir, case_user,
                                       case_item, variants);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
