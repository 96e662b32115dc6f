#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "duat/config.hpp"
#include "duat/costs.hpp"
#include "duat/loss.hpp"
#include "duat/metrics.hpp"
#include "duat/model.hpp"

namespace duat {

// Builders from the flat config.
DuatConfig model_config_from(const Config& cfg);
LossConfig loss_config_from(const Config& cfg);

struct TrainOutcome {
  double final_train_mdice = 0.0;
  double best_val_mdice = 0.0;
  int steps_run = 0;
  std::string final_checkpoint;
  std::string best_checkpoint;
  std::string log_path;
};

// Full training run: loads the manifests named in the config, trains for
// train.steps optimizer steps, logs one structured line per step and per
// validation pass, saves best-val and final checkpoints, and echoes the
// resolved config next to the outputs. Deterministic given the seed (the
// log's single '#' header line carries the only timestamp).
TrainOutcome run_train(const Config& cfg, const std::string& out_dir);

// Evaluates eval.checkpoint on eval.manifest; writes report.txt and
// size_curve.dat under out_dir and returns the report.
EvalReport run_eval(const Config& cfg, const std::string& out_dir);

// Generates the synthetic dataset and writes train/val/test manifests.
void run_synth(const Config& cfg, const std::string& out_dir);

// Single-image prediction: reads predict.input (P6), writes <id>_mask.pgm.
std::string run_predict(const Config& cfg, const std::string& out_dir);

// Finite-difference verification table; returns the number of failures.
int run_gradcheck(const Config& cfg, std::ostream& os);

struct CountReport {
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::vector<std::pair<std::string, std::int64_t>> param_groups;
  std::vector<std::pair<std::string, std::int64_t>> mac_sections;
};

// Exact parameter count plus metered MACs for one forward pass at the
// configured input size (batch 1).
CountReport run_count(const Config& cfg);
void print_count(const CountReport& report, const Config& cfg, std::ostream& os);

struct VariantResult {
  std::string token;    // config spelling, e.g. "wo_glsa"
  std::string display;  // table row label
  EvalReport report;
};

// Trains and evaluates every variant named in ablate.variants with the same
// seed and step budget, writes ablation_table.txt, returns the rows.
std::vector<VariantResult> run_ablate(const Config& cfg, const std::string& out_dir,
                                      std::ostream& os);

std::string variant_display_name(const std::string& token);
Config apply_variant(const Config& base, const std::string& token);

}  // namespace duat
