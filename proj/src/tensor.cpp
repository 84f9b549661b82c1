#include "nisnn/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "nisnn/errors.hpp"

namespace nisnn {

namespace {

thread_local Tape* g_active_tape = nullptr;
thread_local std::map<std::string, std::uint64_t> g_op_counts;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void TensorImpl::accumulate_grad(std::span<const float> g) {
  auto& buf = grad_buffer();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

std::vector<float>& TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0F);
  return grad;
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0F); }

Tensor Tensor::full(Shape shape, float value) {
  std::size_t n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<float>(n, value));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data) {
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (data.size() != shape_numel(shape)) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::parameter(Shape shape, std::vector<float> data) {
  Tensor t = from_data(std::move(shape), std::move(data));
  t.impl_->requires_grad = true;
  return t;
}

float Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

float Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw DimensionError("index rank mismatch for " + shape_str(shape()));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= impl_->shape[axis]) throw DimensionError("index out of range for " + shape_str(shape()));
    flat = flat * impl_->shape[axis] + i;
    ++axis;
  }
  return impl_->data[flat];
}

void Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw ContractError("requires_grad can only be changed on leaf tensors");
  impl_->requires_grad = on;
  if (!on) impl_->grad.clear();
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0F);
}

Tensor Tensor::detach() const { return from_data(shape(), impl_->data); }

std::size_t Tape::record(std::string_view op, std::vector<std::shared_ptr<TensorImpl>> inputs,
                         std::vector<std::shared_ptr<TensorImpl>> outputs,
                         std::function<void(const Node&)> backward) {
  Node node;
  node.op = op;
  for (const auto& in : inputs) {
    if (in->tape == this && in->node >= 0) node.parents.push_back(static_cast<std::size_t>(in->node));
  }
  std::size_t index = nodes_.size();
  for (auto& out : outputs) {
    out->tape = this;
    out->node = static_cast<std::ptrdiff_t>(index);
  }
  node.inputs = std::move(inputs);
  node.outputs = std::move(outputs);
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return index;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  const auto& impl = loss.impl();
  if (impl->tape != this || impl->node < 0) throw ContractError("loss was not recorded on this tape");
  auto last = static_cast<std::size_t>(impl->node);
  // Intermediate grads are per-call; leaf grads accumulate across calls.
  for (std::size_t i = 0; i <= last; ++i) {
    for (auto& out : nodes_[i].outputs) out->grad.clear();
  }
  impl->grad_buffer()[0] = 1.0F;
  for (std::size_t i = last + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    bool live = std::any_of(node.outputs.begin(), node.outputs.end(),
                            [](const auto& o) { return !o->grad.empty(); });
    if (live && node.backward) node.backward(node);
  }
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.impl()->tape == nullptr) {
    throw ContractError("backward requires a loss recorded on a tape");
  }
  loss.impl()->tape->backward(loss);
}

void OpCounter::bump(std::string_view name, std::uint64_t n) { g_op_counts[std::string(name)] += n; }
std::map<std::string, std::uint64_t> OpCounter::snapshot() { return g_op_counts; }
void OpCounter::reset() { g_op_counts.clear(); }

std::vector<Tensor> make_results(std::string_view op, std::vector<Shape> shapes,
                                 std::vector<std::vector<float>> data,
                                 std::initializer_list<Tensor> inputs,
                                 std::function<void(const Tape::Node&)> fn) {
  std::vector<Tensor> results;
  results.reserve(shapes.size());
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    results.push_back(Tensor::from_data(std::move(shapes[i]), std::move(data[i])));
  }
  Tape* tape = Tape::active();
  bool needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (tape == nullptr || !needs_grad || !fn) return results;

  std::vector<std::shared_ptr<TensorImpl>> in_impls;
  for (const Tensor& t : inputs) {
    in_impls.push_back(t.defined() ? t.impl() : std::make_shared<TensorImpl>());
  }
  std::vector<std::shared_ptr<TensorImpl>> out_impls;
  for (auto& r : results) {
    r.impl()->requires_grad = true;
    out_impls.push_back(r.impl());
  }
  tape->record(op, std::move(in_impls), std::move(out_impls), std::move(fn));
  return results;
}

Tensor make_result(std::string_view op, Shape shape, std::vector<float> data,
                   std::initializer_list<Tensor> inputs, std::function<void(const Tape::Node&)> fn) {
  std::vector<Shape> shapes;
  shapes.push_back(std::move(shape));
  std::vector<std::vector<float>> payload;
  payload.push_back(std::move(data));
  return make_results(op, std::move(shapes), std::move(payload), inputs, std::move(fn))[0];
}

}  // namespace nisnn
