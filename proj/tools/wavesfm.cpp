#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "wavesfm/evalharness/experiment.hpp"

namespace ev = wavesfm::eval;

int main(int argc, char** argv) {
  CLI::App app{"wavesfm: masked wireless modeling experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::size_t runs = 0;
  bool dump_preds = false, quiet = false, print_config = false;

  for (const char* name : {"pretrain", "finetune", "evaluate", "simulate"}) {
    auto* sub = app.add_subcommand(name, std::string("run the ") + name + " stage");
    sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the run seed");
    sub->add_option("--out", out_dir, "override the output directory");
    sub->add_option("--runs", runs, "number of fine-tuning repeats")->check(CLI::PositiveNumber);
    sub->add_flag("--dump-preds", dump_preds, "write per-sample predictions");
    sub->add_flag("--print-config", print_config, "print the resolved config and exit");
    sub->add_flag("-q,--quiet", quiet, "no per-epoch progress");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return ev::kExitConfig;
  }
  const auto* sub = app.get_subcommands().front();

  ev::ExperimentConfig cfg;
  try {
    std::ifstream is(config_path);
    nlohmann::json j = nlohmann::json::parse(is, nullptr, true, true);
    if (!j.is_object()) throw ev::ConfigError("config must be a JSON object");
    j["stage"] = sub->get_name();
    cfg = ev::experiment_config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: cannot parse " << config_path << ": " << e.what() << '\n';
    return ev::kExitConfig;
  } catch (const ev::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return ev::kExitConfig;
  }
  if (sub->count("--seed")) cfg.seed = seed;
  if (sub->count("--out")) cfg.out_dir = out_dir;
  if (sub->count("--runs")) cfg.runs = runs;
  if (dump_preds) cfg.dump_preds = true;

  if (print_config) {
    std::cout << ev::to_json(cfg).dump(2) << '\n';
    return ev::kExitOk;
  }

  ev::RunOptions opts;
  if (!quiet) opts.log = [](const std::string& s) { std::cerr << s << '\n'; };
  const auto res = ev::run_experiment(cfg, opts);
  if (res.exit_code == ev::kExitOk) {
    std::cout << res.message << '\n';
    if (res.report.contains("metric_name")) {
      const auto& r = res.report;
      if (r.contains("metric")) std::cout << r["metric_name"].get<std::string>() << ' ' << r["metric"] << '\n';
      if (r.contains("mean")) std::cout << r["metric_name"].get<std::string>() << ' ' << r["mean"] << " +- " << r["std"] << '\n';
    }
  } else {
    std::cerr << res.message << '\n';
  }
  return res.exit_code;
}
