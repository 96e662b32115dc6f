// duat: synthetic-data segmentation workbench.
//
// Subcommands: synth, train, eval, predict, gradcheck, count, ablate.
// Shared flags: --config PATH, --seed N, --out DIR, --set key=value (repeat).
// Exit codes: 0 ok, 1 usage error, 2 data error, 3 numerical failure.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "duat/pipeline.hpp"

namespace {

struct CliArgs {
  std::string command;
  std::string config_path;
  std::string out_dir = "out";
  int seed = -1;  // unset
  std::vector<std::string> overrides;
};

duat::Config resolve_config(const CliArgs& args) {
  duat::Config cfg =
      args.config_path.empty() ? duat::Config() : duat::Config::from_file(args.config_path);
  if (args.seed >= 0) cfg.set("seed", std::to_string(args.seed));
  for (const auto& o : args.overrides) cfg.set(o);
  return cfg;
}

int dispatch(const CliArgs& args) {
  const duat::Config cfg = resolve_config(args);
  if (args.command == "synth") {
    duat::run_synth(cfg, args.out_dir);
    std::cout << "wrote dataset under " << args.out_dir << "\n";
    return 0;
  }
  if (args.command == "train") {
    const duat::TrainOutcome outcome = duat::run_train(cfg, args.out_dir);
    std::printf("trained %d steps; final train mDice %.4f; checkpoints in %s\n",
                outcome.steps_run, outcome.final_train_mdice, args.out_dir.c_str());
    return 0;
  }
  if (args.command == "eval") {
    const duat::EvalReport report = duat::run_eval(cfg, args.out_dir);
    std::printf("evaluated %zu samples: mDice %.4f, mIoU %.4f, MAE %.4f\n",
                report.samples.size(), report.mean_dice, report.mean_iou, report.mean_mae);
    return 0;
  }
  if (args.command == "predict") {
    const std::string path = duat::run_predict(cfg, args.out_dir);
    std::cout << "wrote " << path << "\n";
    return 0;
  }
  if (args.command == "gradcheck") {
    const int failures = duat::run_gradcheck(cfg, std::cout);
    return failures == 0 ? 0 : 3;
  }
  if (args.command == "count") {
    const duat::CountReport report = duat::run_count(cfg);
    duat::print_count(report, cfg, std::cout);
    return 0;
  }
  if (args.command == "ablate") {
    duat::run_ablate(cfg, args.out_dir, std::cout);
    return 0;
  }
  std::cerr << "unknown command '" << args.command << "'\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DuAT segmentation workbench"};
  app.require_subcommand(1);

  CliArgs args;
  const std::vector<std::string> commands = {"synth",     "train", "eval",  "predict",
                                             "gradcheck", "count", "ablate"};
  for (const auto& name : commands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", args.config_path, "configuration file (flat key = value)");
    sub->add_option("--seed", args.seed, "override the seed key");
    sub->add_option("--out", args.out_dir, "output directory");
    sub->add_option("--set", args.overrides, "override one key=value (repeatable)");
    sub->callback([&args, name] { args.command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints usage/help
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    return dispatch(args);
  } catch (const duat::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const duat::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const duat::ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
