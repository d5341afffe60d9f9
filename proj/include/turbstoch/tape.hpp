#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "turbstoch/tensor.hpp"

namespace turbstoch {

// Trainable (or frozen) tensor with its gradient accumulator.
struct Parameter {
    std::string name;
    Tensor3 value;
    Tensor3 grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Tensor3 v, bool train = true)
        : name(std::move(n)), value(std::move(v)), grad(value.batch, value.channels, value.length),
          trainable(train) {}

    void zero_grad() { grad.fill(0.0); }
};

class Tape;

// Value handle produced by differentiable ops. node < 0 means the value is a
// constant (not recorded); such Vars flow through ops without building graph.
struct Var {
    std::shared_ptr<const Tensor3> val;
    int node = -1;
    Tape* tape = nullptr;

    Var() = default;
    const Tensor3& v() const { return *val; }
    double item() const { return val->data[0]; }
    bool recorded() const { return node >= 0; }
};

// Wrap a plain tensor as a constant Var.
Var constant(Tensor3 v);
Var constant(double v);

// Reverse-mode tape. Records primitive ops in execution order; backward()
// replays them in exact reverse order. One tape per logical thread.
class Tape {
public:
    // Registers a node; `back` reads grad(out) and accumulates into input grads.
    int push(int64_t b, int64_t c, int64_t l, std::function<void(Tape&)> back);

    // Registers a parameter as a leaf; backward accumulates into p.grad.
    Var leaf(Parameter& p);

    // Gradient buffer of a node, zero-allocated on first touch.
    Tensor3& grad(int node);
    bool touched(int node) const { return node >= 0 && has_grad_[size_t(node)]; }

    void backward(const Var& loss);

    // Drops all nodes and gradients; the tape is reusable afterwards.
    void reset();

    size_t num_nodes() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

private:
    struct Node {
        std::function<void(Tape&)> back;
        int64_t b, c, l;
    };
    std::vector<Node> nodes_;
    std::vector<Tensor3> grads_;
    std::vector<bool> has_grad_;
    bool consumed_ = false;
};

}  // namespace turbstoch
