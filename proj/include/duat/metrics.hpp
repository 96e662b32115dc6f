#pragma once

#include <optional>
#include <string>
#include <vector>

#include "duat/tensor.hpp"

namespace duat {

struct SampleMetrics {
  std::string id;
  double dice = 0.0;
  double iou = 0.0;
  double mae = 0.0;
  double area_fraction = 0.0;  // |G| / (h*w)
};

struct SizeBin {
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;
  double mean_dice = 0.0;
};

// Aggregated evaluation document: per-sample rows, mean metrics, and the
// size-stratified dice profile (empty bins are omitted, not reported as 0).
struct EvalReport {
  std::vector<SampleMetrics> samples;
  double mean_dice = 0.0;
  double mean_iou = 0.0;
  double mean_mae = 0.0;
  std::vector<SizeBin> bins;

  static std::vector<double> default_bin_edges();  // 0, 0.05, 0.10, ..., 1.0
};

// Overlap metrics for one sample. dice = 2|P&G| / (|P|+|G|),
// iou = |P&G| / |P|G|; both-empty counts as perfect (1.0). mae is the mean
// absolute difference between the soft probability map and the mask.
SampleMetrics evaluate_sample(const std::string& id, const Tensor& pred_mask,
                              const Tensor& prob, const Tensor& mask);

// Bins samples by area fraction (half-open [lo,hi), last bin closed) and
// fills aggregate means. Fractions outside [0,1] are an error.
EvalReport build_report(std::vector<SampleMetrics> samples, const std::vector<double>& bin_edges);

// Line-delimited report: one "sample id=... dice=..." row per sample plus an
// "aggregate" footer; the companion table is gnuplot-ready (bin midpoints).
void write_report(const EvalReport& report, const std::string& report_path,
                  const std::string& curve_path);

}  // namespace duat
