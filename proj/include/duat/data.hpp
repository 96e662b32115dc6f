#pragma once

#include <string>
#include <vector>

#include "duat/tensor.hpp"

namespace duat::data {

// One dataset item. The image is (3,h,w) in [0,1] quantized to the 8-bit
// grid (so file round-trips are exact); the mask is (1,h,w) binary and never
// empty; area_fraction is exactly foreground count / (h*w).
struct Sample {
  std::string id;
  Tensor image;
  Tensor mask;
  double area_fraction = 0.0;
};

// Controls for the blob generator. Blobs are smooth random fields (Gaussian
// bumps plus low-pass noise) thresholded at the quantile that lands the
// foreground count inside the requested fraction range; the mask is the
// ideal pre-blur region. Boundary ambiguity blurs only the rendered edge,
// the mask is untouched.
struct GenSpec {
  int height = 64;
  int width = 64;
  int objects_min = 1;
  int objects_max = 3;
  double fraction_min = 0.01;
  double fraction_max = 0.25;
  double blur_sigma = 1.5;
  double contrast = 0.40;
  double noise = 0.08;
  std::uint64_t seed = 1;

  void validate() const;
};

// Deterministic per (spec, seed): sample i draws from stream (seed, i).
// Throws DataError when no foreground pixel count satisfies the fraction
// range after bounded retries.
std::vector<Sample> generate(const GenSpec& spec, int count);

// Netpbm binary rasters, maxval 255. Images are P6, masks P5 (binarized at
// > 127 on read). Comment lines in headers are honored.
void write_ppm(const std::string& path, const Tensor& image);
void write_pgm(const std::string& path, const Tensor& mask);
Tensor read_ppm(const std::string& path);
Tensor read_pgm(const std::string& path);

// Horizontal flip with p = 0.5 plus a uniform multiple-of-90-degree
// rotation. Exact pixel permutations: the mask transforms identically and
// the area fraction is preserved bit-for-bit.
Sample augment(const Sample& s, Rng& rng);

Tensor flip_horizontal(const Tensor& t);
Tensor rotate90(const Tensor& t, int quarter_turns);

// Deterministic shuffled partition; ratios must sum to 1. Partitions are
// disjoint and cover the input.
struct Split {
  std::vector<Sample> train, val, test;
};
Split split(std::vector<Sample> samples, double train_ratio, double val_ratio, double test_ratio,
            std::uint64_t seed);

// Manifest: one "id<TAB>image_path<TAB>mask_path<TAB>area_fraction" line per
// sample. Paths are stored as written.
struct ManifestEntry {
  std::string id;
  std::string image_path;
  std::string mask_path;
  double area_fraction = 0.0;
};

void write_dataset(const std::vector<Sample>& samples, const std::string& dir,
                   const std::string& manifest_name);
std::vector<ManifestEntry> read_manifest(const std::string& path);
Sample load_sample(const ManifestEntry& entry);

}  // namespace duat::data
