#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ssmi/errors.hpp"
#include "ssmi/rng.hpp"

namespace ssmi {

// Dense row-major f64 tensor. Gradients live beside the data and are only
// allocated once something accumulates into them.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty, or same length as data
    bool on_graph = false;     // true when produced by a recorded op

    std::size_t numel() const { return data.size(); }
    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    bool tracked() const { return requires_grad || on_graph; }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
    void accumulate(std::span<const double> g) {
        ensure_grad();
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
    }
    void zero_grad() { grad.clear(); }
};

using TensorPtr = std::shared_ptr<Tensor>;

std::string shape_str(const std::vector<std::size_t>& shape);

TensorPtr tensor(std::vector<std::size_t> shape, std::vector<double> data,
                 bool requires_grad = false);
TensorPtr zeros(std::vector<std::size_t> shape, bool requires_grad = false);
TensorPtr full(std::vector<std::size_t> shape, double v, bool requires_grad = false);
TensorPtr scalar(double v);
TensorPtr eye(std::size_t n);
TensorPtr randn(std::vector<std::size_t> shape, Rng& rng, double stddev,
                bool requires_grad = false);

inline double value(const TensorPtr& t) { return t->data.at(0); }

// ---------------------------------------------------------------------------
// Recording tape. One thread-local instance; ops append nodes in execution
// order, backward() replays them in reverse.
// ---------------------------------------------------------------------------

struct TapeNode {
    TensorPtr out;
    std::function<void()> back;
};

class Tape {
public:
    void record(TensorPtr out, std::function<void()> back) {
        nodes_.push_back({std::move(out), std::move(back)});
    }
    void clear() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }
    const std::vector<TapeNode>& nodes() const { return nodes_; }
    bool recording() const { return recording_; }
    void set_recording(bool on) { recording_ = on; }

private:
    std::vector<TapeNode> nodes_;
    bool recording_ = true;
};

Tape& tape();

// Disables op recording for the current thread while alive (evaluation paths).
class NoGradGuard {
public:
    NoGradGuard() : prev_(tape().recording()) { tape().set_recording(false); }
    ~NoGradGuard() { tape().set_recording(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Seeds d(loss)/d(loss) = 1 and runs the tape backwards. Gradients accumulate
// additively into every tracked tensor reachable from loss.
void backward(const TensorPtr& loss);

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

enum class Elementwise { add, sub, mul };

// [m×k]@[k×n] -> [m×n]; also [m×k]@[k] -> [m].
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
// Pointwise with suffix-shape broadcast of b onto a.
TensorPtr elementwise(const TensorPtr& a, const TensorPtr& b, Elementwise kind);
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double c);

// Max-subtracted softmax over the last axis.
TensorPtr softmax_last(const TensorPtr& x);
// [T×T] attention scores; row i is a softmax over columns j <= i, zero above.
TensorPtr causal_softmax(const TensorPtr& scores);
// 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
TensorPtr gelu(const TensorPtr& x);

TensorPtr transpose(const TensorPtr& x);  // 2-d
TensorPtr reshape(const TensorPtr& x, std::vector<std::size_t> new_shape);
TensorPtr slice_cols(const TensorPtr& x, std::size_t j0, std::size_t w);
TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
TensorPtr slice_rows(const TensorPtr& x, std::size_t i0, std::size_t h);
TensorPtr concat_rows(const TensorPtr& top, const TensorPtr& bottom);
// Embedding lookup; gradient scatter-adds into the table rows.
TensorPtr gather_rows(const TensorPtr& table, const std::vector<std::uint32_t>& ids);

TensorPtr sum(const TensorPtr& x);  // -> scalar shape {1}
// (1/rows) * sum of squared elementwise difference (mean over rows, sum over
// the feature axis).
TensorPtr mse(const TensorPtr& pred, const TensorPtr& target);
// Mean over rows of -log softmax(logits)[target id].
TensorPtr cross_entropy(const TensorPtr& logits, const std::vector<std::uint32_t>& ids);

// ---------------------------------------------------------------------------
// Adam with bias correction. Moment buffers persist across steps; step()
// consumes and clears the gradients.
// ---------------------------------------------------------------------------
class Adam {
public:
    explicit Adam(std::vector<TensorPtr> params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    // Scales all gradients so the global L2 norm is at most max_norm.
    // Returns the pre-clip norm.
    double clip_grad_norm(double max_norm);
    void step();
    void set_lr(double lr) { lr_ = lr; }
    std::size_t steps_taken() const { return t_; }
    const std::vector<TensorPtr>& params() const { return params_; }

private:
    std::vector<TensorPtr> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

}  // namespace ssmi
