#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "duat/base.hpp"

namespace duat {

// Dense 4-D extent (batch, channel, height, width). All feature maps, masks,
// parameters, and scalars in the project use this one layout; a scalar is
// (1,1,1,1) and a per-channel bias is (1,c,1,1).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::int64_t numel() const {
    return static_cast<std::int64_t>(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until backward reaches this tensor
  bool requires_grad = false;
};

// Value-semantic handle to a dense 4-D array. Results of ops are treated as
// immutable once published; leaf tensors (parameters, inputs) may be mutated
// in place between tapes via mutable_data().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor full(Shape s, double value, bool requires_grad = false);
  static Tensor from_vector(Shape s, std::vector<double> values, bool requires_grad = false);
  static Tensor uniform(Shape s, double lo, double hi, Rng& rng, bool requires_grad = false);
  static Tensor normal(Shape s, double mean, double stddev, Rng& rng, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int n() const { return impl_->shape.n; }
  int c() const { return impl_->shape.c; }
  int h() const { return impl_->shape.h; }
  int w() const { return impl_->shape.w; }
  std::int64_t numel() const { return impl_->shape.numel(); }

  const double* data() const { return impl_->data.data(); }
  double* mutable_data() { return impl_->data.data(); }
  const std::vector<double>& values() const { return impl_->data; }

  double at(int i, int j, int k, int l) const;
  double item() const;  // requires scalar shape

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad() { impl_->grad.clear(); }

  // Identity of the underlying buffer; used by the tape and the optimizer.
  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend class Tape;
  friend Tensor make_tensor(Shape, bool);
};

// Allocates an uninitialized-op-result tensor (internal to op implementations).
Tensor make_tensor(Shape s, bool requires_grad);

// Ensures t.grad is allocated (zero-filled) and returns it.
std::vector<double>& ensure_grad(TensorImpl& t);

// Reverse-mode tape. Ops record one node per result while a tape is active
// (Tape::Scope); backward() runs the nodes in reverse recording order, which
// is a valid topological order by construction. A tape is consumable exactly
// once. Tapes are single-threaded; parallel evaluation is only permitted
// across independent tapes.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // RAII activation of this tape as the recording target.
  class Scope {
   public:
    explicit Scope(Tape& t);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* current();

  // Registers a backward step for `out`. `backward` reads out.grad and
  // accumulates into the grads of the inputs it captured.
  void record(const Tensor& out, std::function<void()> backward);

  // Reverse sweep from a scalar root. Populates grad on every reachable
  // tensor whose subgraph requested gradients.
  void backward(const Tensor& root);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::shared_ptr<TensorImpl> out;
    std::function<void()> fn;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// True when a tape is active and any listed tensor wants gradients.
bool grad_enabled(std::initializer_list<const Tensor*> inputs);

// Op epilogue: applies f32 rounding in train precision and runs the finite
// check policy. Throws NumericError naming `op` when NaN/Inf is found.
void finalize_op(Tensor& out, const char* op);

// Scans all elements; throws NumericError if any is non-finite.
void check_all_finite(const Tensor& t, const char* what);

}  // namespace duat
