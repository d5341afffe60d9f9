#include "turbstoch/tape.hpp"

#include "turbstoch/errors.hpp"

namespace turbstoch {

Var constant(Tensor3 v) {
    Var out;
    out.val = std::make_shared<Tensor3>(std::move(v));
    return out;
}

Var constant(double v) { return constant(Tensor3::scalar(v)); }

int Tape::push(int64_t b, int64_t c, int64_t l, std::function<void(Tape&)> back) {
    if (consumed_) throw StateError("tape already consumed; reset() before recording");
    nodes_.push_back(Node{std::move(back), b, c, l});
    grads_.emplace_back();
    has_grad_.push_back(false);
    return int(nodes_.size()) - 1;
}

Var Tape::leaf(Parameter& p) {
    Parameter* pp = &p;
    Var out;
    out.val = std::shared_ptr<const Tensor3>(&p.value, [](const Tensor3*) {});
    out.tape = this;
    int node = push(p.value.batch, p.value.channels, p.value.length, [pp](Tape&) {});
    // backward closure needs its own node id
    nodes_[size_t(node)].back = [pp, node](Tape& t) {
        if (!t.touched(node)) return;
        const Tensor3& g = t.grad(node);
        for (size_t i = 0; i < g.data.size(); ++i) pp->grad.data[i] += g.data[i];
    };
    out.node = node;
    return out;
}

Tensor3& Tape::grad(int node) {
    auto idx = size_t(node);
    if (!has_grad_[idx]) {
        const Node& n = nodes_[idx];
        grads_[idx] = Tensor3(n.b, n.c, n.l, 0.0);
        has_grad_[idx] = true;
    }
    return grads_[idx];
}

void Tape::backward(const Var& loss) {
    if (consumed_) throw StateError("tape already consumed");
    if (!loss.val || !loss.val->is_scalar()) throw ContractError("backward requires a scalar loss");
    if (!loss.recorded() || loss.tape != this)
        throw ContractError("loss was not recorded on this tape");
    grad(loss.node).data[0] = 1.0;
    for (int i = loss.node; i >= 0; --i) {
        if (has_grad_[size_t(i)] && nodes_[size_t(i)].back) nodes_[size_t(i)].back(*this);
    }
    consumed_ = true;
}

void Tape::reset() {
    nodes_.clear();
    grads_.clear();
    has_grad_.clear();
    consumed_ = false;
}

}  // namespace turbstoch
