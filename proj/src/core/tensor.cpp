#include "core/tensor.hpp"

#include <sstream>

#include "core/error.hpp"

namespace steerlab {

namespace {
thread_local GradTape* g_active_tape = nullptr;
}

GradTape* GradTape::active() { return g_active_tape; }

TapeScope::TapeScope() : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

NoGradScope::NoGradScope() : prev_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = prev_; }

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); i++) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    n->data.assign(size_t(shape_numel(shape)), 0.0f);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.vec().begin(), t.vec().end(), value);
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<float> data,
                    bool requires_grad) {
    if (shape_numel(shape) != int64_t(data.size()))
        throw ContractError("tensor data length " + std::to_string(data.size()) +
                            " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(float value) { return from({1}, {value}); }

float Tensor::item() const {
    if (numel() != 1)
        throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->data[0];
}

void Tensor::backward() const {
    if (numel() != 1)
        throw ContractError("backward() requires a scalar loss, got " +
                            shape_str(shape()));
    GradTape* tape = GradTape::active();
    if (!tape)
        throw ContractError("backward() called with no active gradient tape");
    node_->ensure_grad();
    node_->grad[0] = 1.0f;
    tape->run_backward();
}

bool Tensor::all_zero() const {
    for (float v : node_->data)
        if (v != 0.0f) return false;
    return true;
}

}  // namespace steerlab
