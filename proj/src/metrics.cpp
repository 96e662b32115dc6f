#include "duat/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace duat {

std::vector<double> EvalReport::default_bin_edges() {
  std::vector<double> edges;
  for (int i = 0; i <= 20; ++i) edges.push_back(i * 0.05);
  return edges;
}

SampleMetrics evaluate_sample(const std::string& id, const Tensor& pred_mask, const Tensor& prob,
                              const Tensor& mask) {
  if (!(pred_mask.shape() == mask.shape()) || !(prob.shape() == mask.shape())) {
    throw ShapeError("metrics: prediction/mask shapes differ");
  }
  const double* p = pred_mask.data();
  const double* q = prob.data();
  const double* g = mask.data();
  const std::int64_t n = mask.numel();
  double inter = 0.0, psum = 0.0, gsum = 0.0, uni = 0.0, abs_err = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const bool pi = p[i] != 0.0;
    const bool gi = g[i] != 0.0;
    inter += pi && gi;
    uni += pi || gi;
    psum += pi;
    gsum += gi;
    abs_err += std::abs(q[i] - g[i]);
  }
  SampleMetrics m;
  m.id = id;
  m.dice = (psum + gsum) > 0.0 ? 2.0 * inter / (psum + gsum) : 1.0;
  m.iou = uni > 0.0 ? inter / uni : 1.0;
  m.mae = abs_err / static_cast<double>(n);
  m.area_fraction = gsum / static_cast<double>(n);
  return m;
}

EvalReport build_report(std::vector<SampleMetrics> samples,
                        const std::vector<double>& bin_edges) {
  if (bin_edges.size() < 2) throw DataError("report: need at least two bin edges");
  EvalReport report;
  report.samples = std::move(samples);

  double sd = 0.0, si = 0.0, sm = 0.0;
  for (const auto& s : report.samples) {
    if (s.area_fraction < 0.0 || s.area_fraction > 1.0) {
      throw DataError("report: area fraction outside [0,1] for sample " + s.id);
    }
    sd += s.dice;
    si += s.iou;
    sm += s.mae;
  }
  const double count = static_cast<double>(report.samples.size());
  if (count > 0) {
    report.mean_dice = sd / count;
    report.mean_iou = si / count;
    report.mean_mae = sm / count;
  }

  for (std::size_t b = 0; b + 1 < bin_edges.size(); ++b) {
    SizeBin bin;
    bin.lo = bin_edges[b];
    bin.hi = bin_edges[b + 1];
    double acc = 0.0;
    for (const auto& s : report.samples) {
      const bool last = b + 2 == bin_edges.size();
      const bool in_bin = s.area_fraction >= bin.lo &&
                          (last ? s.area_fraction <= bin.hi : s.area_fraction < bin.hi);
      if (in_bin) {
        ++bin.count;
        acc += s.dice;
      }
    }
    if (bin.count > 0) {
      bin.mean_dice = acc / bin.count;
      report.bins.push_back(bin);
    }
  }
  return report;
}

void write_report(const EvalReport& report, const std::string& report_path,
                  const std::string& curve_path) {
  std::ofstream os(report_path, std::ios::trunc);
  if (!os) throw DataError("report: cannot write " + report_path);
  char line[256];
  for (const auto& s : report.samples) {
    std::snprintf(line, sizeof(line),
                  "sample id=%s dice=%.6f iou=%.6f mae=%.6f area_fraction=%.6f", s.id.c_str(),
                  s.dice, s.iou, s.mae, s.area_fraction);
    os << line << "\n";
  }
  for (const auto& b : report.bins) {
    std::snprintf(line, sizeof(line), "bin lo=%.2f hi=%.2f count=%d mean_dice=%.6f", b.lo, b.hi,
                  b.count, b.mean_dice);
    os << line << "\n";
  }
  std::snprintf(line, sizeof(line), "aggregate n=%zu mdice=%.6f miou=%.6f mae=%.6f",
                report.samples.size(), report.mean_dice, report.mean_iou, report.mean_mae);
  os << line << "\n";

  std::ofstream curve(curve_path, std::ios::trunc);
  if (!curve) throw DataError("report: cannot write " + curve_path);
  curve << "# area_fraction_mid mean_dice count\n";
  for (const auto& b : report.bins) {
    std::snprintf(line, sizeof(line), "%.4f %.6f %d", 0.5 * (b.lo + b.hi), b.mean_dice, b.count);
    curve << line << "\n";
  }
}

}  // namespace duat
