#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nisnn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

// Storage shared between Tensor handles. Only the grad slot (and, for leaf
// parameters, the optimizer) mutates data after construction.
struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  Tape* tape = nullptr;  // set when the tensor is the output of a recorded op
  std::ptrdiff_t node = -1;

  void accumulate_grad(std::span<const float> g);
  std::vector<float>& grad_buffer();  // allocates zeros on first use
};

/// Dense row-major float32 array with an optional gradient slot.
///
/// Handles are cheap to copy and share storage. A default-constructed
/// Tensor is empty and only useful as a placeholder.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor from_data(Shape shape, std::vector<float> data);
  /// Leaf tensor that collects gradients.
  static Tensor parameter(Shape shape, std::vector<float> data);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const float> data() const { return impl_->data; }
  /// Writable view; meant for initialisation and optimizer updates of leaves.
  std::span<float> mutable_data() { return impl_->data; }
  float item() const;
  float at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const float> grad() const { return impl_->grad; }
  void zero_grad();

  bool is_leaf() const { return impl_->node < 0; }
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

  /// Deep copy without tape linkage or gradient.
  Tensor detach() const;

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Reverse-mode autodiff tape. Nodes are stored in creation order, which is
/// a valid topological order because an op can only consume tensors that
/// already exist.
class Tape {
 public:
  struct Node {
    std::string_view op;
    std::vector<std::size_t> parents;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::vector<std::shared_ptr<TensorImpl>> outputs;
    std::function<void(const Node&)> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Recorded op; returns the node index.
  std::size_t record(std::string_view op, std::vector<std::shared_ptr<TensorImpl>> inputs,
                     std::vector<std::shared_ptr<TensorImpl>> outputs,
                     std::function<void(const Node&)> backward);

  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  void clear() { nodes_.clear(); }

  /// Tape that ops on this thread record onto, or nullptr (no recording).
  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<Node> nodes_;
};

/// Makes a tape the active one for the current thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Temporarily disables recording on this thread.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// Runs backward on the tape that produced `loss`.
void backward(const Tensor& loss);

/// Per-thread counters of primitive kernel invocations, keyed by kernel
/// name. Used to check that spiking layers run a fixed kernel sequence.
class OpCounter {
 public:
  static void bump(std::string_view name, std::uint64_t n = 1);
  static std::map<std::string, std::uint64_t> snapshot();
  static void reset();
};

/// Builds an op result. When a tape is active and any input needs a
/// gradient, the result is recorded and `fn` becomes its backward rule.
/// `fn` reads output grads from node.outputs and accumulates into inputs.
Tensor make_result(std::string_view op, Shape shape, std::vector<float> data,
                   std::initializer_list<Tensor> inputs, std::function<void(const Tape::Node&)> fn);

/// Multi-output variant of make_result.
std::vector<Tensor> make_results(std::string_view op, std::vector<Shape> shapes,
                                 std::vector<std::vector<float>> data,
                                 std::initializer_list<Tensor> inputs,
                                 std::function<void(const Tape::Node&)> fn);

}  // namespace nisnn
