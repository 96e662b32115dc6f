#include "duat/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace duat::data {

void GenSpec::validate() const {
  if (height < 8 || width < 8) throw DataError("genspec: extents must be >= 8");
  if (objects_min < 1 || objects_max < objects_min) {
    throw DataError("genspec: bad object count range");
  }
  if (!(fraction_min > 0.0 && fraction_max < 1.0 && fraction_min <= fraction_max)) {
    throw DataError("genspec: fraction range must sit inside (0,1)");
  }
  if (blur_sigma < 0.0 || noise < 0.0 || contrast < 0.0) {
    throw DataError("genspec: blur/noise/contrast must be >= 0");
  }
}

namespace {

// Separable Gaussian blur with a border-normalized kernel.
void gaussian_blur_plane(std::vector<double>& plane, int h, int w, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  }
  std::vector<double> tmp(plane.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0, norm = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int xx = x + k;
        if (xx < 0 || xx >= w) continue;
        acc += kernel[static_cast<std::size_t>(k + radius)] * plane[y * w + xx];
        norm += kernel[static_cast<std::size_t>(k + radius)];
      }
      tmp[y * w + x] = acc / norm;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0, norm = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int yy = y + k;
        if (yy < 0 || yy >= h) continue;
        acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[yy * w + x];
        norm += kernel[static_cast<std::size_t>(k + radius)];
      }
      plane[y * w + x] = acc / norm;
    }
  }
}

double quantize8(double v) {
  v = std::min(std::max(v, 0.0), 1.0);
  return std::round(v * 255.0) / 255.0;
}

}  // namespace

std::vector<Sample> generate(const GenSpec& spec, int count) {
  spec.validate();
  const int h = spec.height, w = spec.width;
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;

  // Foreground pixel counts compatible with the fraction range.
  const std::int64_t k_min =
      std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(spec.fraction_min * hw)));
  const std::int64_t k_max =
      std::min<std::int64_t>(hw - 1, static_cast<std::int64_t>(std::floor(spec.fraction_max * hw)));

  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int idx = 0; idx < count; ++idx) {
    Rng rng = Rng::for_stream(spec.seed, static_cast<std::uint64_t>(idx));

    std::int64_t target = -1;
    for (int attempt = 0; attempt < 16 && k_min <= k_max; ++attempt) {
      const double f = rng.uniform(spec.fraction_min, spec.fraction_max);
      const std::int64_t k = std::llround(f * hw);
      if (k >= k_min && k <= k_max) {
        target = k;
        break;
      }
    }
    if (target < 0) {
      throw DataError("generate: no foreground count satisfies fraction range [" +
                      std::to_string(spec.fraction_min) + "," +
                      std::to_string(spec.fraction_max) + "] at " + std::to_string(h) + "x" +
                      std::to_string(w));
    }

    // Smooth field: Gaussian bumps plus low-pass noise.
    std::vector<double> field(static_cast<std::size_t>(hw), 0.0);
    const int objects = rng.uniform_int(spec.objects_min, spec.objects_max);
    const double blob_radius =
        std::sqrt(static_cast<double>(target) / (objects * 3.14159265358979323846));
    for (int o = 0; o < objects; ++o) {
      const double cy = rng.uniform(0.15, 0.85) * h;
      const double cx = rng.uniform(0.15, 0.85) * w;
      const double sy = blob_radius * rng.uniform(0.7, 1.5);
      const double sx = blob_radius * rng.uniform(0.7, 1.5);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double dy = (y - cy) / sy;
          const double dx = (x - cx) / sx;
          field[y * w + x] += std::exp(-0.5 * (dy * dy + dx * dx));
        }
      }
    }
    std::vector<double> rough(static_cast<std::size_t>(hw));
    for (auto& v : rough) v = rng.normal();
    gaussian_blur_plane(rough, h, w, std::max(2.0, h / 16.0));
    for (std::int64_t i = 0; i < hw; ++i) field[i] += 0.6 * rough[i];

    // Quantile threshold: take exactly `target` strongest positions
    // (value-descending, index-ascending ties).
    std::vector<std::int64_t> order(static_cast<std::size_t>(hw));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
      return field[a] > field[b];
    });
    std::vector<double> mask(static_cast<std::size_t>(hw), 0.0);
    for (std::int64_t i = 0; i < target; ++i) mask[order[i]] = 1.0;

    // Render: background/foreground colors separated by the contrast knob,
    // edge softened by blurring the coverage only near the boundary.
    std::vector<double> coverage = mask;
    gaussian_blur_plane(coverage, h, w, spec.blur_sigma);

    Sample s;
    char id[32];
    std::snprintf(id, sizeof(id), "s%06d", idx);
    s.id = id;
    s.image = Tensor::zeros(Shape{1, 3, h, w});
    s.mask = Tensor::from_vector(Shape{1, 1, h, w}, mask);
    s.area_fraction = static_cast<double>(target) / static_cast<double>(hw);

    double* img = s.image.mutable_data();
    for (int c = 0; c < 3; ++c) {
      const double bg = rng.uniform(0.25, 0.45);
      const double fg = std::min(1.0, bg + spec.contrast * rng.uniform(0.8, 1.2));
      for (std::int64_t i = 0; i < hw; ++i) {
        double v = bg + (fg - bg) * coverage[i] + spec.noise * rng.normal();
        img[c * hw + i] = quantize8(v);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

void write_pnm_header(std::ofstream& os, const char* magic, int w, int h) {
  os << magic << "\n" << w << " " << h << "\n255\n";
}

// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string next_token(std::istream& is) {
  std::string tok;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) throw DataError("netpbm: truncated header");
  return tok;
}

struct PnmHeader {
  int w = 0, h = 0, maxval = 0;
};

PnmHeader read_pnm_header(std::istream& is, const char* magic, const std::string& path) {
  const std::string m = next_token(is);
  if (m != magic) {
    throw DataError("netpbm: expected " + std::string(magic) + " in " + path + ", got " + m);
  }
  PnmHeader hdr;
  hdr.w = std::stoi(next_token(is));
  hdr.h = std::stoi(next_token(is));
  hdr.maxval = std::stoi(next_token(is));
  if (hdr.w < 1 || hdr.h < 1) throw DataError("netpbm: bad extents in " + path);
  if (hdr.maxval != 255) throw DataError("netpbm: only maxval 255 supported, in " + path);
  // Exactly one whitespace byte separates the header from the raster.
  return hdr;
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& image) {
  const Shape s = image.shape();
  if (s.n != 1 || s.c != 3) throw DataError("write_ppm: expected (1,3,h,w), got " + s.str());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("write_ppm: cannot open " + path);
  write_pnm_header(os, "P6", s.w, s.h);
  const double* p = image.data();
  const std::int64_t hw = static_cast<std::int64_t>(s.h) * s.w;
  std::vector<unsigned char> raster(static_cast<std::size_t>(hw) * 3);
  for (std::int64_t i = 0; i < hw; ++i) {
    for (int c = 0; c < 3; ++c) {
      const double v = std::min(std::max(p[c * hw + i], 0.0), 1.0);
      raster[static_cast<std::size_t>(i) * 3 + c] =
          static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  os.write(reinterpret_cast<const char*>(raster.data()),
           static_cast<std::streamsize>(raster.size()));
  if (!os) throw DataError("write_ppm: write failed for " + path);
}

void write_pgm(const std::string& path, const Tensor& mask) {
  const Shape s = mask.shape();
  if (s.n != 1 || s.c != 1) throw DataError("write_pgm: expected (1,1,h,w), got " + s.str());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("write_pgm: cannot open " + path);
  write_pnm_header(os, "P5", s.w, s.h);
  const double* p = mask.data();
  const std::int64_t hw = static_cast<std::int64_t>(s.h) * s.w;
  std::vector<unsigned char> raster(static_cast<std::size_t>(hw));
  for (std::int64_t i = 0; i < hw; ++i) {
    raster[static_cast<std::size_t>(i)] = p[i] != 0.0 ? 255 : 0;
  }
  os.write(reinterpret_cast<const char*>(raster.data()),
           static_cast<std::streamsize>(raster.size()));
  if (!os) throw DataError("write_pgm: write failed for " + path);
}

Tensor read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("read_ppm: cannot open " + path);
  const PnmHeader hdr = read_pnm_header(is, "P6", path);
  const std::int64_t hw = static_cast<std::int64_t>(hdr.h) * hdr.w;
  std::vector<unsigned char> raster(static_cast<std::size_t>(hw) * 3);
  is.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!is) throw DataError("read_ppm: truncated raster in " + path);
  std::vector<double> values(static_cast<std::size_t>(hw) * 3);
  for (std::int64_t i = 0; i < hw; ++i) {
    for (int c = 0; c < 3; ++c) {
      values[static_cast<std::size_t>(c * hw + i)] =
          raster[static_cast<std::size_t>(i) * 3 + c] / 255.0;
    }
  }
  return Tensor::from_vector(Shape{1, 3, hdr.h, hdr.w}, std::move(values));
}

Tensor read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("read_pgm: cannot open " + path);
  const PnmHeader hdr = read_pnm_header(is, "P5", path);
  const std::int64_t hw = static_cast<std::int64_t>(hdr.h) * hdr.w;
  std::vector<unsigned char> raster(static_cast<std::size_t>(hw));
  is.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!is) throw DataError("read_pgm: truncated raster in " + path);
  std::vector<double> values(static_cast<std::size_t>(hw));
  for (std::int64_t i = 0; i < hw; ++i) {
    values[static_cast<std::size_t>(i)] = raster[static_cast<std::size_t>(i)] > 127 ? 1.0 : 0.0;
  }
  return Tensor::from_vector(Shape{1, 1, hdr.h, hdr.w}, std::move(values));
}

Tensor flip_horizontal(const Tensor& t) {
  const Shape s = t.shape();
  Tensor out = make_tensor(s, false);
  const double* src = t.data();
  double* dst = out.mutable_data();
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      const std::int64_t base = (static_cast<std::int64_t>(b) * s.c + c) * s.h * s.w;
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          dst[base + y * s.w + x] = src[base + y * s.w + (s.w - 1 - x)];
        }
      }
    }
  }
  return out;
}

Tensor rotate90(const Tensor& t, int quarter_turns) {
  const int q = ((quarter_turns % 4) + 4) % 4;
  if (q == 0) {
    Tensor out = make_tensor(t.shape(), false);
    std::copy(t.data(), t.data() + t.numel(), out.mutable_data());
    return out;
  }
  const Shape s = t.shape();
  const bool swap = q % 2 == 1;
  const Shape os{s.n, s.c, swap ? s.w : s.h, swap ? s.h : s.w};
  Tensor out = make_tensor(os, false);
  const double* src = t.data();
  double* dst = out.mutable_data();
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      const std::int64_t sbase = (static_cast<std::int64_t>(b) * s.c + c) * s.h * s.w;
      const std::int64_t dbase = (static_cast<std::int64_t>(b) * s.c + c) * os.h * os.w;
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          int ny, nx;
          // Counter-clockwise quarter turns.
          if (q == 1) {
            ny = s.w - 1 - x;
            nx = y;
          } else if (q == 2) {
            ny = s.h - 1 - y;
            nx = s.w - 1 - x;
          } else {
            ny = x;
            nx = s.h - 1 - y;
          }
          dst[dbase + ny * os.w + nx] = src[sbase + y * s.w + x];
        }
      }
    }
  }
  return out;
}

Sample augment(const Sample& s, Rng& rng) {
  Sample out;
  out.id = s.id;
  out.area_fraction = s.area_fraction;
  const bool flip = rng.bernoulli(0.5);
  // Quarter turns swap the extents; non-square samples only get half turns
  // so batches keep a single shape.
  const bool square = s.image.h() == s.image.w();
  const int turns = square ? rng.uniform_int(0, 3) : 2 * rng.uniform_int(0, 1);
  Tensor img = flip ? flip_horizontal(s.image) : s.image;
  Tensor msk = flip ? flip_horizontal(s.mask) : s.mask;
  out.image = rotate90(img, turns);
  out.mask = rotate90(msk, turns);
  return out;
}

Split split(std::vector<Sample> samples, double train_ratio, double val_ratio, double test_ratio,
            std::uint64_t seed) {
  const double sum = train_ratio + val_ratio + test_ratio;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw DataError("split: ratios must sum to 1, got " + std::to_string(sum));
  }
  // Fisher-Yates with our own bounded draw for cross-platform determinism.
  Rng rng = Rng::for_stream(seed, 0x73706c6974ULL);
  for (std::size_t i = samples.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(samples[i - 1], samples[j]);
  }
  const std::size_t n = samples.size();
  const std::size_t n_train = static_cast<std::size_t>(std::llround(train_ratio * n));
  const std::size_t n_val = static_cast<std::size_t>(std::llround(val_ratio * n));
  Split out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) {
      out.train.push_back(std::move(samples[i]));
    } else if (i < n_train + n_val) {
      out.val.push_back(std::move(samples[i]));
    } else {
      out.test.push_back(std::move(samples[i]));
    }
  }
  return out;
}

void write_dataset(const std::vector<Sample>& samples, const std::string& dir,
                   const std::string& manifest_name) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / manifest_name, std::ios::trunc);
  if (!manifest) throw DataError("write_dataset: cannot write manifest in " + dir);
  char line[512];
  for (const auto& s : samples) {
    const std::string img = (fs::path(dir) / (s.id + ".ppm")).string();
    const std::string msk = (fs::path(dir) / (s.id + ".pgm")).string();
    write_ppm(img, s.image);
    write_pgm(msk, s.mask);
    std::snprintf(line, sizeof(line), "%s\t%s\t%s\t%.10f", s.id.c_str(), img.c_str(), msk.c_str(),
                  s.area_fraction);
    manifest << line << "\n";
  }
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("manifest: cannot open " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    ManifestEntry e;
    std::string frac;
    if (!std::getline(ss, e.id, '\t') || !std::getline(ss, e.image_path, '\t') ||
        !std::getline(ss, e.mask_path, '\t') || !std::getline(ss, frac)) {
      throw DataError("manifest: malformed line " + std::to_string(lineno) + " in " + path);
    }
    e.area_fraction = std::stod(frac);
    entries.push_back(std::move(e));
  }
  return entries;
}

Sample load_sample(const ManifestEntry& entry) {
  Sample s;
  s.id = entry.id;
  s.image = read_ppm(entry.image_path);
  s.mask = read_pgm(entry.mask_path);
  s.area_fraction = entry.area_fraction;
  return s;
}

}  // namespace duat::data
