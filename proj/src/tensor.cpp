#include "duat/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <utility>

namespace duat {

Precision Engine::precision = Precision::f64;
bool Engine::strict_finite_checks = true;

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Box-Muller on two fresh uniforms; guard against log(0).
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

int Rng::uniform_int(int lo, int hi) {
  if (hi < lo) throw std::invalid_argument("Rng::uniform_int: empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
  return lo + static_cast<int>(next_u64() % span);
}

static std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::for_stream(std::uint64_t seed, std::uint64_t stream) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1)));
}

std::string Shape::str() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "(%d,%d,%d,%d)", n, c, h, w);
  return buf;
}

Tensor make_tensor(Shape s, bool requires_grad) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
    throw ShapeError("tensor shape has negative extent " + s.str());
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = s;
  impl->data.resize(static_cast<std::size_t>(s.numel()));
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape s, bool requires_grad) { return make_tensor(s, requires_grad); }

Tensor Tensor::full(Shape s, double value, bool requires_grad) {
  Tensor t = make_tensor(s, requires_grad);
  value = apply_precision(value);
  for (auto& v : t.impl_->data) v = value;
  return t;
}

Tensor Tensor::from_vector(Shape s, std::vector<double> values, bool requires_grad) {
  if (static_cast<std::int64_t>(values.size()) != s.numel()) {
    throw ShapeError("from_vector: got " + std::to_string(values.size()) +
                     " values for shape " + s.str());
  }
  Tensor t = make_tensor(s, requires_grad);
  t.impl_->data = std::move(values);
  if (Engine::precision == Precision::f32) {
    for (auto& v : t.impl_->data) v = apply_precision(v);
  }
  return t;
}

Tensor Tensor::uniform(Shape s, double lo, double hi, Rng& rng, bool requires_grad) {
  Tensor t = make_tensor(s, requires_grad);
  for (auto& v : t.impl_->data) v = apply_precision(rng.uniform(lo, hi));
  return t;
}

Tensor Tensor::normal(Shape s, double mean, double stddev, Rng& rng, bool requires_grad) {
  Tensor t = make_tensor(s, requires_grad);
  for (auto& v : t.impl_->data) v = apply_precision(mean + stddev * rng.normal());
  return t;
}

double Tensor::at(int i, int j, int k, int l) const {
  const Shape& s = impl_->shape;
  return impl_->data[((static_cast<std::size_t>(i) * s.c + j) * s.h + k) * s.w + l];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape().str());
  return impl_->data[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("tensor has no gradient; run backward first");
  return impl_->grad;
}

std::vector<double>& ensure_grad(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(static_cast<std::size_t>(t.shape.numel()), 0.0);
  return t.grad;
}

namespace {
Tape*& current_tape_slot() {
  thread_local Tape* current = nullptr;
  return current;
}
}  // namespace

Tape::Scope::Scope(Tape& t) : prev_(current_tape_slot()) { current_tape_slot() = &t; }
Tape::Scope::~Scope() { current_tape_slot() = prev_; }

Tape* Tape::current() { return current_tape_slot(); }

void Tape::record(const Tensor& out, std::function<void()> backward) {
  if (consumed_) throw std::logic_error("recording onto a consumed tape");
  nodes_.push_back(Node{out.impl_ptr(), std::move(backward)});
}

void Tape::backward(const Tensor& root) {
  if (consumed_) throw std::logic_error("backward on a consumed tape");
  if (nodes_.empty()) throw std::logic_error("backward on an empty tape");
  if (!root.defined() || root.shape() != Shape{1, 1, 1, 1}) {
    throw ShapeError("backward root must be a scalar (1,1,1,1)");
  }
  consumed_ = true;
  ensure_grad(*root.impl()) [0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->out->grad.empty()) continue;  // not reachable from the root
    it->fn();
  }
}

bool grad_enabled(std::initializer_list<const Tensor*> inputs) {
  if (Tape::current() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void check_all_finite(const Tensor& t, const char* what) {
  const double* p = t.data();
  const std::int64_t n = t.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) {
      throw NumericError(std::string(what) + ": non-finite value at flat index " +
                         std::to_string(i));
    }
  }
}

void finalize_op(Tensor& out, const char* op) {
  TensorImpl& impl = *out.impl();
  if (Engine::precision == Precision::f32) {
    for (auto& v : impl.data) v = static_cast<double>(static_cast<float>(v));
  }
  static thread_local std::uint64_t op_counter = 0;
  ++op_counter;
  const bool scalar = impl.shape.numel() == 1;
  if (Engine::strict_finite_checks || scalar || (op_counter & 63u) == 0) {
    check_all_finite(out, op);
  }
}

}  // namespace duat
