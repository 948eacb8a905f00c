#pragma once

// Dense float64 tensors with a dynamic reverse-mode tape.
//
// A Tensor is a cheap handle onto a shared node. Ops create new nodes and,
// when any input requires a gradient, record their parents and a backward
// closure. backward() topologically sorts the recorded graph and runs the
// closures once each. Graphs are single-threaded; distinct graphs may be
// built concurrently as long as no leaf is mutated meanwhile.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace plaus {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // pushes this->grad into parents

  std::vector<double>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  // Mutable access for leaves (optimizer steps, weight edits). Never call on
  // a tensor that participates in a live graph.
  std::span<double> mutable_data() { return node_->data; }
  std::vector<double> to_vector() const { return node_->data; }

  double item() const;
  double at(std::size_t r, std::size_t c) const;
  double operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  // Gradient w.r.t. this tensor after backward(); zeros if none arrived.
  std::vector<double> grad() const;
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  // Deep copy of data, detached from any graph.
  Tensor clone(bool requires_grad = false) const;
  Tensor detach() const { return clone(false); }

  // Internal: used by ops.
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
// node on the path; leaves keep theirs until zero_grad().
void backward(const Tensor& loss);

}  // namespace plaus
