#pragma once

#include <vector>

#include "duat/nn.hpp"

namespace duat {

// AdamW: Adam moment estimates with decoupled weight decay,
//   p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
// Parameters update in registry order, single-threaded, so steps are
// deterministic. lr = 0 leaves parameters bit-identical.
class AdamW {
 public:
  struct Options {
    double lr = 1e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  AdamW(std::vector<nn::Module::NamedTensor> params, Options opt);

  // Applies one update from the gradients currently stored on the
  // parameters, then clears them. Parameters without a gradient are skipped.
  void step();
  void zero_grad();

  const Options& options() const { return opt_; }

 private:
  std::vector<nn::Module::NamedTensor> params_;
  Options opt_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace duat
