#include "gansearch/autodiff.hpp"

namespace gansearch {

Value GradientContext::constant(Tensor t) {
  Node n;
  n.value = std::move(t);
  n.needs_grad = false;
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

Value GradientContext::leaf(Parameter& p) {
  auto it = leaf_ids_.find(&p);
  if (it != leaf_ids_.end()) return Value{it->second};
  Node n;
  n.value = p.value;  // copy; the tape owns a frozen snapshot for this pass
  n.needs_grad = recording_;
  n.param = recording_ ? &p : nullptr;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  leaf_ids_.emplace(&p, id);
  if (recording_) touched_.push_back(&p);
  return Value{id};
}

Value GradientContext::make(Tensor out, bool needs_grad, BackFn back) {
  Node n;
  n.value = std::move(out);
  n.needs_grad = recording_ && needs_grad;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

void GradientContext::add_grad(Value v, const Tensor& g) {
  Node& n = nodes_[static_cast<size_t>(v.id)];
  if (!n.needs_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    check_same_shape(n.grad, g, "add_grad");
    n.grad.vec() += g.vec();
  }
}

void GradientContext::add_grad_move(Value v, Tensor&& g) {
  Node& n = nodes_[static_cast<size_t>(v.id)];
  if (!n.needs_grad) return;
  if (!n.has_grad) {
    n.grad = std::move(g);
    n.has_grad = true;
  } else {
    check_same_shape(n.grad, g, "add_grad");
    n.grad.vec() += g.vec();
  }
}

Tensor* GradientContext::grad_buffer(Value v) {
  Node& n = nodes_[static_cast<size_t>(v.id)];
  if (!n.needs_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return &n.grad;
}

void GradientContext::backward(Value loss) {
  if (!recording_) throw Error("backward() on a non-recording context");
  if (backward_done_) throw Error("backward() called twice on one context");
  backward_done_ = true;
  Node& top = nodes_[static_cast<size_t>(loss.id)];
  if (top.value.numel() != 1)
    throw ShapeError("backward() needs a scalar loss, got " + top.value.shape_str());
  if (!top.needs_grad) return;  // loss does not depend on any leaf
  top.grad = Tensor::full({1}, 1.0f);
  top.has_grad = true;

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.has_grad) continue;
    if (n.back) n.back(*this, n.grad);
    if (n.param) n.param->gradient.vec() += n.grad.vec();
    // free as we go; nodes above `id` were already consumed
    n.grad = Tensor();
    n.has_grad = false;
  }
}

}  // namespace gansearch
