#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hmtgin/tensor.hpp"

namespace hmtgin {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;

  void accumulate(const Tensor& g);
};

// Shared handle to a value that may take part in a recorded computation.
// Copies alias the same node, so a parameter can be referenced from many
// places and still collect a single gradient.
class Var {
 public:
  Var() = default;

  static Var constant(Tensor value);
  static Var parameter(Tensor value);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient, or zeros of the value's shape when nothing has flowed in.
  Tensor grad() const;
  void zero_grad() { node_->grad = Tensor(); }

  Node* node() const { return node_.get(); }

 private:
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
  friend class Tape;
};

struct NamedParameter {
  std::string name;
  Var var;
};

// Ordered record of primitive applications. Every op computes its forward
// value eagerly; it is appended to the tape only when recording is on and at
// least one input requires a gradient.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const { return record_; }
  std::size_t size() const { return entries_.size(); }

  Var matmul(const Var& a, const Var& b);
  Var transpose(const Var& a);
  Var reshape(const Var& a, Shape shape);

  // Elementwise with broadcasting over extents equal to 1.
  Var add(const Var& a, const Var& b);
  Var sub(const Var& a, const Var& b);
  Var mul(const Var& a, const Var& b);
  Var scale(const Var& a, double c);

  Var concat(std::span<const Var> parts, std::size_t axis);
  Var gather_rows(const Var& t, std::span<const std::size_t> indices);
  // t with rows[k] added into row indices[k]; repeated indices accumulate.
  Var scatter_add_rows(const Var& t, std::span<const std::size_t> indices,
                       const Var& rows);

  Var sum_rows(const Var& t);  // [n x d] -> [n]
  Var sum(const Var& t);       // -> scalar
  Var mean(const Var& t);

  Var leaky_relu(const Var& t, double slope);
  Var sigmoid(const Var& t);
  Var log_sigmoid(const Var& t);

  // Per-column standardization with batch statistics, then gamma/beta.
  Var batch_norm(const Var& x, const Var& gamma, const Var& beta, double eps);

  // Mean over rows of -log softmax(logits)[label].
  Var softmax_cross_entropy(const Var& logits,
                            std::span<const std::size_t> labels);

  // Populates d(loss)/d(v) for every gradient-requiring leaf reachable from
  // loss. Leaf gradients accumulate across calls until zeroed.
  void backward(const Var& loss);

 private:
  using BackwardFn = std::function<void(const Tensor& grad_out)>;

  struct Entry {
    std::vector<Var> inputs;
    Var output;
    BackwardFn backward;
  };

  Var record(Tensor value, std::vector<Var> inputs, BackwardFn fn);

  bool record_;
  std::vector<Entry> entries_;
};

// Scalar helpers shared by the tape and by test oracles.
double sigmoid(double x);
double log_sigmoid(double x);  // -softplus(-x)

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  bool passed = true;

  const GradCheckEntry* worst() const;
};

// Compares backward() against central differences for every coordinate of
// every parameter. Relative error is |a - n| / max(1, |a|, |n|).
GradCheckReport grad_check(const std::function<Var(Tape&)>& f,
                           std::span<const NamedParameter> params,
                           double step = 1e-5, double tolerance = 1e-5);

namespace testing {
// Scales the leaky-ReLU backward rule by 1.5 so a gradient check can be shown
// to fail. Never enabled outside tests and the gradcheck fault flag.
void set_corrupt_backward(bool enabled);
bool corrupt_backward();
}  // namespace testing

}  // namespace hmtgin
