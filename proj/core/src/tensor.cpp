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

#include "ldlc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "ldlc/binary_io.hpp"
#include "ldlc/error.hpp"

namespace ldlc {

namespace {

constexpr const char* kModule = "tensor-autodiff";

thread_local bool g_grad_enabled = true;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : impl_(std::make_shared<detail::TensorImpl>()) {
  impl_->data.assign(1, 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (shape_numel(shape) != data.size()) {
    throw Error(kModule, "data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_string(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw Error(kModule, "item() on tensor of shape " + shape_string(shape()));
  }
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool value) {
  if (!is_leaf() && !value) {
    throw Error(kModule, "cannot clear requires_grad on a non-leaf tensor");
  }
  impl_->requires_grad = value;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

bool Tensor::is_finite() const {
  return std::all_of(impl_->data.begin(), impl_->data.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->data, impl_->requires_grad && is_leaf());
  return t;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(std::string_view op_name, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, detail::BackwardFn backward_fn) {
  Tensor out(std::move(shape), std::move(data), false);
  if (!g_grad_enabled) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  auto node = std::make_shared<detail::Node>();
  node->name = std::string(op_name);
  node->inputs = std::move(inputs);
  node->backward = std::move(backward_fn);
  out.impl()->requires_grad = true;
  out.impl()->grad_fn = std::move(node);
  return out;
}

std::span<double> grad_buffer(const Tensor& t) {
  auto* impl = t.impl();
  if (!impl->requires_grad) return {};
  if (impl->grad.empty()) impl->grad.assign(impl->data.size(), 0.0);
  return impl->grad;
}

void accumulate_grad(const Tensor& t, std::span<const double> values) {
  auto buf = grad_buffer(t);
  if (buf.empty()) return;
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += values[i];
}

Graph Graph::trace(const Tensor& root) {
  Graph g;
  std::unordered_set<detail::TensorImpl*> visited;
  // Iterative post-order DFS; a frame is (impl, next input index).
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(root.impl(), 0);
  visited.insert(root.impl());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto& fn = impl->grad_fn;
    if (fn && fn->consumed) {
      throw Error(kModule, "graph already consumed by a previous backward pass");
    }
    if (fn && next < fn->inputs.size()) {
      auto* child = fn->inputs[next++].impl();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    g.order_.push_back(impl);
    stack.pop_back();
  }
  return g;
}

std::size_t Graph::node_count() const {
  return static_cast<std::size_t>(std::count_if(
      order_.begin(), order_.end(), [](auto* impl) { return impl->grad_fn != nullptr; }));
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw Error(kModule, "backward requires a scalar loss, got shape " +
                             shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw Error(kModule, "loss does not depend on any tensor requiring a gradient");
  }
  const Graph graph = Graph::trace(loss);
  auto seed = grad_buffer(loss);
  seed[0] += 1.0;
  const auto& order = graph.order();
  // Inputs released by a processed node may be the only owners of nodes
  // still pending in the sweep, so they stay alive until it finishes.
  std::vector<Tensor> keep_alive;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* impl = *it;
    auto fn = impl->grad_fn;
    if (!fn) continue;
    if (impl->grad.empty()) impl->grad.assign(impl->data.size(), 0.0);
    fn->backward(impl->grad);
    fn->backward = nullptr;
    for (auto& in : fn->inputs) keep_alive.push_back(std::move(in));
    fn->inputs.clear();
    fn->consumed = true;
  }
}

void write_tensor(std::ostream& out, const Tensor& t) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(12 + 4 * t.rank() + 8 * t.numel());
  for (char c : std::string_view("TNSR")) bytes.push_back(static_cast<std::uint8_t>(c));
  bio::put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) bio::put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(d));
  for (double v : t.data()) bio::put_f64(bytes, v);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

namespace {

std::uint32_t read_u32(std::istream& in) {
  std::uint8_t b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error(kModule, "truncated tensor stream");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

Tensor read_tensor(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "TNSR") {
    throw Error(kModule, "bad tensor magic");
  }
  const auto rank = read_u32(in);
  if (rank > 8) throw Error(kModule, "implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = read_u32(in);
  const auto n = shape_numel(shape);
  std::vector<std::uint8_t> payload(8 * n);
  if (!in.read(reinterpret_cast<char*>(payload.data()),
               static_cast<std::streamsize>(payload.size()))) {
    throw Error(kModule, "truncated tensor payload");
  }
  bio::Reader reader(payload, kModule);
  std::vector<double> data(n);
  for (auto& v : data) v = reader.get_f64();
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(kModule, "cannot open '" + path + "' for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(kModule, "cannot open '" + path + "'");
  return read_tensor(in);
}

}  // namespace ldlc
