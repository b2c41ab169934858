#pragma once
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace steerlab {

struct TensorNode {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad;     // allocated on first use
    bool requires_grad = false;  // leaf parameter: gradient is retained
    bool needs_grad = false;     // gradient must flow through this node

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0f);
    }
};

using NodePtr = std::shared_ptr<TensorNode>;

// Records backward closures in forward order; backward() replays them in
// reverse, visiting each exactly once. One tape is active per thread at a
// time (see TapeScope); ops record onto it only when an input needs grad.
class GradTape {
  public:
    void record(std::function<void()> fn) { entries_.push_back(std::move(fn)); }
    void run_backward() {
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    }
    size_t size() const { return entries_.size(); }
    static GradTape* active();

  private:
    std::vector<std::function<void()>> entries_;
    friend struct TapeScope;
};

// RAII activation of a fresh tape. Scopes nest; the innermost wins, so a
// no-grad region inside training is expressed with NoGradScope below.
struct TapeScope {
    TapeScope();
    ~TapeScope();
    GradTape tape;

  private:
    GradTape* prev_;
};

struct NoGradScope {
    NoGradScope();
    ~NoGradScope();

  private:
    GradTape* prev_;
};

// Value-semantics handle over a shared node. Copies alias the same storage;
// tensors are treated as immutable after creation except for grad buffers
// and explicit in-place parameter updates by the optimizer.
class Tensor {
  public:
    Tensor() = default;
    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, float value);
    static Tensor from(std::vector<int> shape, std::vector<float> data,
                       bool requires_grad = false);
    static Tensor scalar(float value);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[size_t(i)]; }
    int rank() const { return int(node_->shape.size()); }
    int64_t numel() const { return int64_t(node_->data.size()); }

    float* data() { return node_->data.data(); }
    const float* data() const { return node_->data.data(); }
    std::vector<float>& vec() { return node_->data; }
    const std::vector<float>& vec() const { return node_->data; }

    bool requires_grad() const { return node_->requires_grad; }
    bool needs_grad() const { return node_->needs_grad; }
    void set_requires_grad(bool v) {
        node_->requires_grad = v;
        node_->needs_grad = v;
    }
    float* grad() {
        node_->ensure_grad();
        return node_->grad.data();
    }
    const std::vector<float>& grad_vec() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() {
        node_->ensure_grad();
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
    }

    float item() const;       // scalar tensors only
    void backward() const;    // scalar loss on the active tape

    NodePtr node() const { return node_; }

    // True when every element is exactly 0.0 (either sign). Used by hook
    // and weight-merge sites to keep "adapter off" bit-identical to "no
    // adapter" (x + 0.0f is not an identity for x = -0.0).
    bool all_zero() const;

  private:
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}
    NodePtr node_;
};

std::string shape_str(const std::vector<int>& shape);
int64_t shape_numel(const std::vector<int>& shape);

// Parameter lists exchanged between models, optimizer and checkpoints.
using NamedParams = std::vector<std::pair<std::string, Tensor>>;

}  // namespace steerlab
