// Copyright 2026 The LDLC Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LDLC_TENSOR_HPP_
#define LDLC_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ldlc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor;

namespace detail {

using BackwardFn = std::function<void(std::span<const double> grad_output)>;

// One executed differentiable operation. The node owns handles to its inputs
// so the graph stays alive as long as its output does.
struct Node {
  std::string name;
  std::vector<Tensor> inputs;
  BackwardFn backward;
  bool consumed = false;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty when no gradient has been populated
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
};

}  // namespace detail

// Dense row-major float64 tensor with optional reverse-mode gradient
// tracking. Copies are shallow: two Tensor handles may refer to the same
// storage, which is how parameters are shared between the graph and the
// optimizer. Use clone() for a deep copy.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  // Mutating data of a tensor that is part of a live graph invalidates the
  // recorded backward pass; only optimizers and loaders should do this.
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value);

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad();

  // True if every element is finite.
  bool is_finite() const;

  Tensor detach() const;
  Tensor clone() const;

  bool is_leaf() const { return impl_->grad_fn == nullptr; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  detail::TensorImpl* impl() const { return impl_.get(); }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Topologically ordered record of the operations that produced a tensor.
class Graph {
 public:
  static Graph trace(const Tensor& root);

  // Inputs precede outputs.
  const std::vector<detail::TensorImpl*>& order() const { return order_; }
  std::size_t node_count() const;

 private:
  std::vector<detail::TensorImpl*> order_;
};

// Reverse-mode sweep from a scalar loss. Every requires_grad tensor reachable
// from the loss accumulates d(loss)/d(tensor) into its grad buffer. The graph
// is consumed: saved buffers are released and a second call throws.
void backward(const Tensor& loss);

// Builds the result of a differentiable op. When recording is enabled and any
// input requires a gradient, a node is attached whose backward function
// receives d(loss)/d(output).
Tensor make_result(std::string_view op_name, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, detail::BackwardFn backward_fn);

// Adds `values` into the gradient buffer of `t` if it requires one.
void accumulate_grad(const Tensor& t, std::span<const double> values);
// Returns the (zero-initialised on first use) gradient buffer of `t`, or an
// empty span when `t` does not require a gradient.
std::span<double> grad_buffer(const Tensor& t);

// Binary dump: "TNSR", u32 rank, u32 dims[rank], f64 payload; little endian.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace ldlc

#endif  // LDLC_TENSOR_HPP_
