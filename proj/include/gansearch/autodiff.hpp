#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <unordered_map>
#include <vector>

#include "gansearch/tensor.hpp"

namespace gansearch {

// Trainable tensor plus its gradient and Adam state.
struct Parameter {
  Tensor value;
  Tensor gradient;
  Tensor adam_m;
  Tensor adam_v;
  int64_t step_count = 0;

  Parameter() = default;
  explicit Parameter(Tensor v)
      : value(std::move(v)),
        gradient(value.shape()),
        adam_m(value.shape()),
        adam_v(value.shape()) {}

  void zero_grad() { gradient.fill(0.0f); }
};

// Handle into a GradientContext's node list.
struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Ops append nodes during the forward pass; backward()
// walks the tape in reverse and accumulates into Parameter::gradient for
// every participating leaf. One backward per context.
//
// A context is confined to one logical thread; concurrent forwards must use
// separate contexts.
class GradientContext {
 public:
  // backward-pass callback: receives the context and the node's output grad.
  using BackFn = std::function<void(GradientContext&, const Tensor&)>;

  explicit GradientContext(bool recording = true) : recording_(recording) {}

  GradientContext(const GradientContext&) = delete;
  GradientContext& operator=(const GradientContext&) = delete;

  bool recording() const { return recording_; }

  // Non-differentiable input.
  Value constant(Tensor t);

  // Differentiable leaf; repeated calls with the same Parameter return the
  // same node so gradients from all uses accumulate once.
  Value leaf(Parameter& p);

  const Tensor& value(Value v) const { return nodes_[static_cast<size_t>(v.id)].value; }
  bool needs_grad(Value v) const { return nodes_[static_cast<size_t>(v.id)].needs_grad; }

  // Used by op implementations: register a result node. `back` may be empty
  // when no parent needs gradients.
  Value make(Tensor out, bool needs_grad, BackFn back);

  // Accumulate into a node's gradient buffer (allocating it on first use).
  void add_grad(Value v, const Tensor& g);
  // Variant that avoids a temporary when the caller owns the tensor.
  void add_grad_move(Value v, Tensor&& g);
  Tensor* grad_buffer(Value v);

  // Reverse sweep from a scalar loss; fills Parameter::gradient (+=) for all
  // participating leaves. Node gradients are released as the sweep passes.
  void backward(Value loss);

  // Every Parameter registered through leaf(), in registration order.
  std::vector<Parameter*> touched_parameters() const { return touched_; }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;       // allocated lazily during backward
    bool has_grad = false;
    bool needs_grad = false;
    BackFn back;
    Parameter* param = nullptr;
  };

  std::deque<Node> nodes_;  // deque: node references stay valid as the tape grows
  std::unordered_map<Parameter*, int> leaf_ids_;
  std::vector<Parameter*> touched_;
  bool recording_ = true;
  bool backward_done_ = false;
};

}  // namespace gansearch
