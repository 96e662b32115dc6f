#include "duat/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace duat {

namespace {

constexpr char kMagic[8] = {'D', 'U', 'A', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("checkpoint: truncated integer");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_record(std::ostream& os, const std::string& name, const Tensor& t) {
  write_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  const unsigned char dtype = Engine::precision == Precision::f32 ? 0 : 1;
  os.write(reinterpret_cast<const char*>(&dtype), 1);
  const Shape& s = t.shape();
  write_u32(os, static_cast<std::uint32_t>(s.n));
  write_u32(os, static_cast<std::uint32_t>(s.c));
  write_u32(os, static_cast<std::uint32_t>(s.h));
  write_u32(os, static_cast<std::uint32_t>(s.w));
  if (dtype == 0) {
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      const float f = static_cast<float>(t.data()[i]);
      static_assert(sizeof(float) == 4);
      os.write(reinterpret_cast<const char*>(&f), 4);
    }
  } else {
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(sizeof(double) * t.numel()));
  }
}

struct LoadedRecord {
  Shape shape;
  std::vector<double> values;
};

std::unordered_map<std::string, LoadedRecord> read_all(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw DataError("checkpoint: bad magic in " + path);
  }
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = read_u32(is);
  std::unordered_map<std::string, LoadedRecord> records;
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    unsigned char dtype = 0;
    is.read(reinterpret_cast<char*>(&dtype), 1);
    if (!is || dtype > 1) throw DataError("checkpoint: bad record header for '" + name + "'");
    LoadedRecord rec;
    rec.shape.n = static_cast<int>(read_u32(is));
    rec.shape.c = static_cast<int>(read_u32(is));
    rec.shape.h = static_cast<int>(read_u32(is));
    rec.shape.w = static_cast<int>(read_u32(is));
    const std::int64_t n = rec.shape.numel();
    rec.values.resize(static_cast<std::size_t>(n));
    if (dtype == 0) {
      for (std::int64_t i = 0; i < n; ++i) {
        float f;
        is.read(reinterpret_cast<char*>(&f), 4);
        rec.values[static_cast<std::size_t>(i)] = static_cast<double>(f);
      }
    } else {
      is.read(reinterpret_cast<char*>(rec.values.data()),
              static_cast<std::streamsize>(sizeof(double) * n));
    }
    if (!is) throw DataError("checkpoint: truncated payload for '" + name + "'");
    records.emplace(std::move(name), std::move(rec));
  }
  return records;
}

void apply(const std::unordered_map<std::string, LoadedRecord>& records,
           const std::vector<nn::Module::NamedTensor>& slots, const char* kind) {
  for (const auto& slot : slots) {
    auto it = records.find(slot.name);
    if (it == records.end()) {
      throw DataError(std::string("checkpoint: missing ") + kind + " '" + slot.name + "'");
    }
    if (!(it->second.shape == slot.tensor->shape())) {
      throw DataError("checkpoint: shape mismatch for '" + slot.name + "': file " +
                      it->second.shape.str() + " vs model " + slot.tensor->shape().str());
    }
    std::memcpy(slot.tensor->mutable_data(), it->second.values.data(),
                sizeof(double) * it->second.values.size());
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<nn::Module::NamedTensor>& params,
                     const std::vector<nn::Module::NamedTensor>& buffers) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("checkpoint: cannot write " + path);
  os.write(kMagic, 8);
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(params.size() + buffers.size()));
  for (const auto& p : params) write_record(os, p.name, *p.tensor);
  for (const auto& b : buffers) write_record(os, b.name, *b.tensor);
  if (!os) throw DataError("checkpoint: write failed for " + path);
}

void load_checkpoint(const std::string& path, const std::vector<nn::Module::NamedTensor>& params,
                     const std::vector<nn::Module::NamedTensor>& buffers) {
  const auto records = read_all(path);
  if (records.size() != params.size() + buffers.size()) {
    throw DataError("checkpoint: record count mismatch in " + path);
  }
  apply(records, params, "parameter");
  apply(records, buffers, "buffer");
}

void save_checkpoint(const std::string& path, nn::Module& m) {
  save_checkpoint(path, m.named_params(), m.named_buffers());
}

void load_checkpoint(const std::string& path, nn::Module& m) {
  load_checkpoint(path, m.named_params(), m.named_buffers());
}

}  // namespace duat
