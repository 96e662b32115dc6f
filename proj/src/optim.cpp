#include "duat/optim.hpp"

#include <cmath>

namespace duat {

AdamW::AdamW(std::vector<nn::Module::NamedTensor> params, Options opt)
    : params_(std::move(params)), opt_(opt) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::size_t n = static_cast<std::size_t>(params_[i].tensor->numel());
    m_[i].assign(n, 0.0);
    v_[i].assign(n, 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i].tensor;
    if (!p.has_grad()) continue;
    const std::vector<double>& g = p.grad();
    double* pd = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = opt_.beta1 * m[j] + (1.0 - opt_.beta1) * g[j];
      v[j] = opt_.beta2 * v[j] + (1.0 - opt_.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      const double upd = m_hat / (std::sqrt(v_hat) + opt_.eps) + opt_.weight_decay * pd[j];
      pd[j] = apply_precision(pd[j] - opt_.lr * upd);
    }
    p.zero_grad();
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor->zero_grad();
}

}  // namespace duat
