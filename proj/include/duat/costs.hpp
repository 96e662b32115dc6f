#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace duat {

// Multiply-accumulate accounting. When a meter is active, conv2d and matmul
// report their MAC counts (conv: k^2 * c_in/groups * c_out * h_out * w_out per
// batch element; matmul: batch * p * k * q); elementwise work, normalization,
// and activations are not counted. Sections give per-block subtotals.
class CostMeter {
 public:
  static CostMeter* active();

  // RAII activation (single-threaded, like the tape).
  class Use {
   public:
    explicit Use(CostMeter& m);
    ~Use();

   private:
    CostMeter* prev_;
  };

  // RAII named section; nested sections join with '.'.
  class Section {
   public:
    explicit Section(const std::string& name);
    ~Section();
  };

  void add_macs(std::int64_t m);

  std::int64_t total_macs() const { return total_; }
  // Insertion-ordered (section path, macs) pairs.
  const std::vector<std::pair<std::string, std::int64_t>>& sections() const { return sections_; }

 private:
  void push_section(const std::string& name);
  void pop_section();

  std::int64_t total_ = 0;
  std::vector<std::string> stack_;
  std::vector<std::pair<std::string, std::int64_t>> sections_;
};

}  // namespace duat
