#include "ssmi/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ssmi {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

void check_finite(const std::vector<double>& v, const char* op) {
    for (double x : v) {
        if (!std::isfinite(x)) throw Error(std::string(op) + ": non-finite value produced");
    }
}

TensorPtr make_out(std::vector<std::size_t> shape, std::vector<double> data, const char* op) {
    check_finite(data, op);
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    return t;
}

bool should_record(std::initializer_list<const TensorPtr*> inputs) {
    if (!tape().recording()) return false;
    for (const TensorPtr* p : inputs) {
        if (*p && (*p)->tracked()) return true;
    }
    return false;
}

void mark(const TensorPtr& out) { out->on_graph = true; }

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

TensorPtr tensor(std::vector<std::size_t> shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("tensor: shape " + shape_str(shape) + " does not match " +
                             std::to_string(data.size()) + " values");
    }
    check_finite(data, "tensor");
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr zeros(std::vector<std::size_t> shape, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

TensorPtr full(std::vector<std::size_t> shape, double v, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
}

TensorPtr scalar(double v) { return tensor({1}, {v}); }

TensorPtr eye(std::size_t n) {
    auto t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t->data[i * n + i] = 1.0;
    return t;
}

TensorPtr randn(std::vector<std::size_t> shape, Rng& rng, double stddev, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    for (auto& x : data) x = stddev * rng.normal();
    return tensor(std::move(shape), std::move(data), requires_grad);
}

Tape& tape() {
    thread_local Tape t;
    return t;
}

void backward(const TensorPtr& loss) {
    if (!loss || loss->numel() != 1) {
        throw ContractError("backward: loss must be a scalar (1 element)");
    }
    loss->ensure_grad();
    loss->grad[0] += 1.0;
    const auto& nodes = tape().nodes();
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        if (!it->out->grad.empty()) it->back();
    }
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 2 || b->shape.empty() || b->shape.size() > 2) {
        throw DimensionError("matmul: need 2-d lhs and 1/2-d rhs, got " +
                             shape_str(a->shape) + " x " + shape_str(b->shape));
    }
    const std::size_t m = a->shape[0], k = a->shape[1];
    const bool vec = b->shape.size() == 1;
    const std::size_t bk = b->shape[0];
    const std::size_t n = vec ? 1 : b->shape[1];
    if (bk != k) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a->shape) +
                             " x " + shape_str(b->shape));
    }

    std::vector<double> out(m * n, 0.0);
    {
        const double* pa = a->data.data();
        const double* pb = b->data.data();
        double* pc = out.data();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t l = 0; l < k; ++l) {
                const double av = pa[i * k + l];
                const double* brow = pb + l * n;
                double* crow = pc + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
    auto out_t = make_out(vec ? std::vector<std::size_t>{m} : std::vector<std::size_t>{m, n},
                          std::move(out), "matmul");
    if (should_record({&a, &b})) {
        mark(out_t);
        TensorPtr av = a, bv = b, ov = out_t;
        std::size_t M = m, K = k, N = n;
        tape().record(out_t, [av, bv, ov, M, K, N]() {
            const double* g = ov->grad.data();
            if (av->tracked()) {
                av->ensure_grad();
                double* da = av->grad.data();
                const double* pb = bv->data.data();
                // da[i,l] += dot(g[i,:], b[l,:])
                for (std::size_t i = 0; i < M; ++i) {
                    for (std::size_t l = 0; l < K; ++l) {
                        double s = 0.0;
                        const double* grow = g + i * N;
                        const double* brow = pb + l * N;
                        for (std::size_t j = 0; j < N; ++j) s += grow[j] * brow[j];
                        da[i * K + l] += s;
                    }
                }
            }
            if (bv->tracked()) {
                bv->ensure_grad();
                double* db = bv->grad.data();
                const double* pa = av->data.data();
                // db[l,:] += sum_i a[i,l] * g[i,:]
                for (std::size_t i = 0; i < M; ++i) {
                    const double* grow = g + i * N;
                    for (std::size_t l = 0; l < K; ++l) {
                        const double av_il = pa[i * K + l];
                        double* drow = db + l * N;
                        for (std::size_t j = 0; j < N; ++j) drow[j] += av_il * grow[j];
                    }
                }
            }
        });
    }
    return out_t;
}

// ---------------------------------------------------------------------------
// elementwise with suffix broadcast
// ---------------------------------------------------------------------------

namespace {

bool suffix_broadcastable(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    if (b.size() > a.size()) return false;
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (b[b.size() - 1 - i] != a[a.size() - 1 - i]) return false;
    }
    return true;
}

}  // namespace

TensorPtr elementwise(const TensorPtr& a, const TensorPtr& b, Elementwise kind) {
    if (!suffix_broadcastable(a->shape, b->shape)) {
        throw DimensionError("elementwise: " + shape_str(b->shape) +
                             " is not a suffix of " + shape_str(a->shape));
    }
    const std::size_t n = a->numel();
    const std::size_t bn = b->numel() == 0 ? 1 : b->numel();
    std::vector<double> out(n);
    const double* pa = a->data.data();
    const double* pb = b->data.data();
    switch (kind) {
        case Elementwise::add:
            for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] + pb[i % bn];
            break;
        case Elementwise::sub:
            for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] - pb[i % bn];
            break;
        case Elementwise::mul:
            for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] * pb[i % bn];
            break;
    }
    auto out_t = make_out(a->shape, std::move(out), "elementwise");
    if (should_record({&a, &b})) {
        mark(out_t);
        TensorPtr av = a, bv = b, ov = out_t;
        tape().record(out_t, [av, bv, ov, kind, n, bn]() {
            const double* g = ov->grad.data();
            if (av->tracked()) {
                av->ensure_grad();
                double* da = av->grad.data();
                if (kind == Elementwise::mul) {
                    const double* pb = bv->data.data();
                    for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * pb[i % bn];
                } else {
                    for (std::size_t i = 0; i < n; ++i) da[i] += g[i];
                }
            }
            if (bv->tracked()) {
                bv->ensure_grad();
                double* db = bv->grad.data();
                const double sign = kind == Elementwise::sub ? -1.0 : 1.0;
                if (kind == Elementwise::mul) {
                    const double* pa = av->data.data();
                    for (std::size_t i = 0; i < n; ++i) db[i % bn] += g[i] * pa[i];
                } else {
                    for (std::size_t i = 0; i < n; ++i) db[i % bn] += sign * g[i];
                }
            }
        });
    }
    return out_t;
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) { return elementwise(a, b, Elementwise::add); }
TensorPtr sub(const TensorPtr& a, const TensorPtr& b) { return elementwise(a, b, Elementwise::sub); }
TensorPtr mul(const TensorPtr& a, const TensorPtr& b) { return elementwise(a, b, Elementwise::mul); }

TensorPtr scale(const TensorPtr& a, double c) {
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * c;
    auto out_t = make_out(a->shape, std::move(out), "scale");
    if (should_record({&a})) {
        mark(out_t);
        TensorPtr av = a, ov = out_t;
        tape().record(out_t, [av, ov, c]() {
            if (!av->tracked()) return;
            av->ensure_grad();
            for (std::size_t i = 0; i < av->grad.size(); ++i) av->grad[i] += ov->grad[i] * c;
        });
    }
    return out_t;
}

// ---------------------------------------------------------------------------
// softmax family
// ---------------------------------------------------------------------------

TensorPtr softmax_last(const TensorPtr& x) {
    if (x->shape.empty()) throw DimensionError("softmax: rank-0 input");
    const std::size_t n = x->shape.back();
    const std::size_t rows = x->numel() / n;
    std::vector<double> out(x->numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* px = x->data.data() + r * n;
        double* po = out.data() + r * n;
        double mx = px[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, px[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            po[j] = std::exp(px[j] - mx);
            z += po[j];
        }
        for (std::size_t j = 0; j < n; ++j) po[j] /= z;
    }
    auto out_t = make_out(x->shape, std::move(out), "softmax");
    if (should_record({&x})) {
        mark(out_t);
        TensorPtr xv = x, ov = out_t;
        tape().record(out_t, [xv, ov, rows, n]() {
            if (!xv->tracked()) return;
            xv->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* p = ov->data.data() + r * n;
                const double* g = ov->grad.data() + r * n;
                double* dx = xv->grad.data() + r * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += p[j] * g[j];
                for (std::size_t j = 0; j < n; ++j) dx[j] += p[j] * (g[j] - dot);
            }
        });
    }
    return out_t;
}

TensorPtr causal_softmax(const TensorPtr& scores) {
    if (scores->shape.size() != 2 || scores->shape[0] != scores->shape[1]) {
        throw DimensionError("causal_softmax: need square scores, got " + shape_str(scores->shape));
    }
    const std::size_t t_len = scores->shape[0];
    std::vector<double> out(scores->numel(), 0.0);
    for (std::size_t i = 0; i < t_len; ++i) {
        const double* px = scores->data.data() + i * t_len;
        double* po = out.data() + i * t_len;
        double mx = px[0];
        for (std::size_t j = 1; j <= i; ++j) mx = std::max(mx, px[j]);
        double z = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
            po[j] = std::exp(px[j] - mx);
            z += po[j];
        }
        for (std::size_t j = 0; j <= i; ++j) po[j] /= z;
    }
    auto out_t = make_out(scores->shape, std::move(out), "causal_softmax");
    if (should_record({&scores})) {
        mark(out_t);
        TensorPtr xv = scores, ov = out_t;
        tape().record(out_t, [xv, ov, t_len]() {
            if (!xv->tracked()) return;
            xv->ensure_grad();
            for (std::size_t i = 0; i < t_len; ++i) {
                const double* p = ov->data.data() + i * t_len;
                const double* g = ov->grad.data() + i * t_len;
                double* dx = xv->grad.data() + i * t_len;
                double dot = 0.0;
                for (std::size_t j = 0; j <= i; ++j) dot += p[j] * g[j];
                for (std::size_t j = 0; j <= i; ++j) dx[j] += p[j] * (g[j] - dot);
            }
        });
    }
    return out_t;
}

TensorPtr gelu(const TensorPtr& x) {
    constexpr double c0 = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double c1 = 0.044715;
    std::vector<double> out(x->numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x->data[i];
        out[i] = 0.5 * v * (1.0 + std::tanh(c0 * (v + c1 * v * v * v)));
    }
    auto out_t = make_out(x->shape, std::move(out), "gelu");
    if (should_record({&x})) {
        mark(out_t);
        TensorPtr xv = x, ov = out_t;
        tape().record(out_t, [xv, ov]() {
            if (!xv->tracked()) return;
            xv->ensure_grad();
            for (std::size_t i = 0; i < xv->grad.size(); ++i) {
                const double v = xv->data[i];
                const double u = c0 * (v + c1 * v * v * v);
                const double th = std::tanh(u);
                const double d = 0.5 * (1.0 + th) +
                                 0.5 * v * (1.0 - th * th) * c0 * (1.0 + 3.0 * c1 * v * v);
                xv->grad[i] += ov->grad[i] * d;
            }
        });
    }
    return out_t;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

TensorPtr transpose(const TensorPtr& x) {
    if (x->shape.size() != 2) throw DimensionError("transpose: need 2-d, got " + shape_str(x->shape));
    const std::size_t m = x->shape[0], n = x->shape[1];
    std::vector<double> out(x->numel());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x->data[i * n + j];
    auto out_t = make_out({n, m}, std::move(out), "transpose");
    if (should_record({&x})) {
        mark(out_t);
        TensorPtr xv = x, ov = out_t;
        tape().record(out_t, [xv, ov, m, n]() {
            if (!xv->tracked()) return;
            xv->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) xv->grad[i * n + j] += ov->grad[j * m + i];
        });
    }
    return out_t;
}

TensorPtr reshape(const TensorPtr& x, std::vector<std::size_t> new_shape) {
    if (shape_numel(new_shape) != x->numel()) {
        throw DimensionError("reshape: " + shape_str(x->shape) + " to " + shape_str(new_shape) +
                             " changes element count");
    }
    auto out_t = make_out(std::move(new_shape), x->data, "reshape");
    if (should_record({&x})) {
        mark(out_t);
        TensorPtr xv = x, ov = out_t;
        tape().record(out_t, [xv, ov]() {
            if (!xv->tracked()) return;
            xv->accumulate(ov->grad);
        });
    }
    return out_t;
}

TensorPtr slice_cols(const TensorPtr& x, std::size_t j0, std::size_t w) {
    if (x->shape.size() != 2) throw DimensionError("slice_cols: need 2-d, got " + shape_str(x->shape));
    const std::size_t m = x->shape[0], n = x->shape[1];
    if (j0 + w > n) throw DimensionError("slice_cols: range past width " + std::to_string(n));
    std::vector<double> out(m * w);
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(x->data.data() + i * n + j0, w, out.data() + i * w);
    auto out_t = make_out({m, w}, std::move(out), "slice_cols");
    if (should_record({&x})) {
        mark(out_t);
        TensorPtr xv = x, ov = out_t;
        tape().record(out_t, [xv, ov, m, n, j0, w]() {
            if (!xv->tracked()) return;
            xv->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < w; ++j)
                    xv->grad[i * n + j0 + j] += ov->grad[i * w + j];
        });
    }
    return out_t;
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no parts");
    const std::size_t m = parts[0]->shape[0];
    std::size_t n = 0;
    for (const auto& p : parts) {
        if (p->shape.size() != 2 || p->shape[0] != m) {
            throw DimensionError("concat_cols: row counts disagree");
        }
        n += p->shape[1];
    }
    std::vector<double> out(m * n);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t w = p->shape[1];
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(p->data.data() + i * w, w, out.data() + i * n + off);
        off += w;
    }
    auto out_t = make_out({m, n}, std::move(out), "concat_cols");
    bool track = tape().recording() &&
                 std::any_of(parts.begin(), parts.end(),
                             [](const TensorPtr& p) { return p->tracked(); });
    if (track) {
        mark(out_t);
        std::vector<TensorPtr> pv = parts;
        TensorPtr ov = out_t;
        tape().record(out_t, [pv, ov, m, n]() {
            std::size_t off = 0;
            for (const auto& p : pv) {
                const std::size_t w = p->shape[1];
                if (p->tracked()) {
                    p->ensure_grad();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < w; ++j)
                            p->grad[i * w + j] += ov->grad[i * n + off + j];
                }
                off += w;
            }
        });
    }
    return out_t;
}

TensorPtr slice_rows(const TensorPtr& x, std::size_t i0, std::size_t h) {
    if (x->shape.size() != 2) throw DimensionError("slice_rows: need 2-d, got " + shape_str(x->shape));
    const std::size_t m = x->shape[0], n = x->shape[1];
    if (i0 + h > m) throw DimensionError("slice_rows: range past height " + std::to_string(m));
    std::vector<double> out(x->data.begin() + i0 * n, x->data.begin() + (i0 + h) * n);
    auto out_t = make_out({h, n}, std::move(out), "slice_rows");
    if (should_record({&x})) {
        mark(out_t);
        TensorPtr xv = x, ov = out_t;
        tape().record(out_t, [xv, ov, i0, h, n]() {
            if (!xv->tracked()) return;
            xv->ensure_grad();
            for (std::size_t i = 0; i < h * n; ++i) xv->grad[i0 * n + i] += ov->grad[i];
        });
    }
    return out_t;
}

TensorPtr concat_rows(const TensorPtr& top, const TensorPtr& bottom) {
    if (top->shape.size() != 2 || bottom->shape.size() != 2 || top->shape[1] != bottom->shape[1]) {
        throw DimensionError("concat_rows: widths disagree, " + shape_str(top->shape) + " vs " +
                             shape_str(bottom->shape));
    }
    const std::size_t n = top->shape[1];
    std::vector<double> out;
    out.reserve(top->numel() + bottom->numel());
    out.insert(out.end(), top->data.begin(), top->data.end());
    out.insert(out.end(), bottom->data.begin(), bottom->data.end());
    auto out_t = make_out({top->shape[0] + bottom->shape[0], n}, std::move(out), "concat_rows");
    if (should_record({&top, &bottom})) {
        mark(out_t);
        TensorPtr tv = top, bv = bottom, ov = out_t;
        tape().record(out_t, [tv, bv, ov]() {
            const std::size_t tn = tv->numel();
            if (tv->tracked()) {
                tv->ensure_grad();
                for (std::size_t i = 0; i < tn; ++i) tv->grad[i] += ov->grad[i];
            }
            if (bv->tracked()) {
                bv->ensure_grad();
                for (std::size_t i = 0; i < bv->numel(); ++i) bv->grad[i] += ov->grad[tn + i];
            }
        });
    }
    return out_t;
}

TensorPtr gather_rows(const TensorPtr& table, const std::vector<std::uint32_t>& ids) {
    if (table->shape.size() != 2) {
        throw DimensionError("gather_rows: need 2-d table, got " + shape_str(table->shape));
    }
    const std::size_t rows = table->shape[0], n = table->shape[1];
    std::vector<double> out(ids.size() * n);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= rows) {
            throw IndexError("gather_rows: id " + std::to_string(ids[i]) + " out of range " +
                             std::to_string(rows));
        }
        std::copy_n(table->data.data() + std::size_t(ids[i]) * n, n, out.data() + i * n);
    }
    auto out_t = make_out({ids.size(), n}, std::move(out), "gather_rows");
    if (should_record({&table})) {
        mark(out_t);
        TensorPtr tv = table, ov = out_t;
        std::vector<std::uint32_t> idv = ids;
        tape().record(out_t, [tv, ov, idv, n]() {
            if (!tv->tracked()) return;
            tv->ensure_grad();
            for (std::size_t i = 0; i < idv.size(); ++i)
                for (std::size_t j = 0; j < n; ++j)
                    tv->grad[std::size_t(idv[i]) * n + j] += ov->grad[i * n + j];
        });
    }
    return out_t;
}

// ---------------------------------------------------------------------------
// reductions / losses
// ---------------------------------------------------------------------------

TensorPtr sum(const TensorPtr& x) {
    double s = 0.0;
    for (double v : x->data) s += v;
    auto out_t = make_out({1}, {s}, "sum");
    if (should_record({&x})) {
        mark(out_t);
        TensorPtr xv = x, ov = out_t;
        tape().record(out_t, [xv, ov]() {
            if (!xv->tracked()) return;
            xv->ensure_grad();
            const double g = ov->grad[0];
            for (double& d : xv->grad) d += g;
        });
    }
    return out_t;
}

TensorPtr mse(const TensorPtr& pred, const TensorPtr& target) {
    if (pred->shape != target->shape) {
        throw DimensionError("mse: shapes disagree, " + shape_str(pred->shape) + " vs " +
                             shape_str(target->shape));
    }
    const std::size_t t_rows = pred->rows();
    double s = 0.0;
    for (std::size_t i = 0; i < pred->numel(); ++i) {
        const double d = pred->data[i] - target->data[i];
        s += d * d;
    }
    s /= static_cast<double>(t_rows);
    auto out_t = make_out({1}, {s}, "mse");
    if (should_record({&pred, &target})) {
        mark(out_t);
        TensorPtr pv = pred, tv = target, ov = out_t;
        tape().record(out_t, [pv, tv, ov, t_rows]() {
            const double g = ov->grad[0] * 2.0 / static_cast<double>(t_rows);
            if (pv->tracked()) {
                pv->ensure_grad();
                for (std::size_t i = 0; i < pv->numel(); ++i)
                    pv->grad[i] += g * (pv->data[i] - tv->data[i]);
            }
            if (tv->tracked()) {
                tv->ensure_grad();
                for (std::size_t i = 0; i < tv->numel(); ++i)
                    tv->grad[i] -= g * (pv->data[i] - tv->data[i]);
            }
        });
    }
    return out_t;
}

TensorPtr cross_entropy(const TensorPtr& logits, const std::vector<std::uint32_t>& ids) {
    if (logits->shape.size() != 2) {
        throw DimensionError("cross_entropy: need 2-d logits, got " + shape_str(logits->shape));
    }
    const std::size_t t_rows = logits->shape[0], vocab = logits->shape[1];
    if (ids.size() != t_rows) {
        throw DimensionError("cross_entropy: " + std::to_string(ids.size()) + " targets for " +
                             std::to_string(t_rows) + " rows");
    }
    double loss = 0.0;
    for (std::size_t r = 0; r < t_rows; ++r) {
        if (ids[r] >= vocab) {
            throw IndexError("cross_entropy: target id " + std::to_string(ids[r]) +
                             " out of range " + std::to_string(vocab));
        }
        const double* x = logits->data.data() + r * vocab;
        double mx = x[0];
        for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < vocab; ++j) z += std::exp(x[j] - mx);
        loss += mx + std::log(z) - x[ids[r]];
    }
    loss /= static_cast<double>(t_rows);
    auto out_t = make_out({1}, {loss}, "cross_entropy");
    if (should_record({&logits})) {
        mark(out_t);
        TensorPtr lv = logits, ov = out_t;
        std::vector<std::uint32_t> idv = ids;
        tape().record(out_t, [lv, ov, idv, t_rows, vocab]() {
            if (!lv->tracked()) return;
            lv->ensure_grad();
            const double g = ov->grad[0] / static_cast<double>(t_rows);
            for (std::size_t r = 0; r < t_rows; ++r) {
                const double* x = lv->data.data() + r * vocab;
                double* dx = lv->grad.data() + r * vocab;
                double mx = x[0];
                for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, x[j]);
                double z = 0.0;
                for (std::size_t j = 0; j < vocab; ++j) z += std::exp(x[j] - mx);
                for (std::size_t j = 0; j < vocab; ++j) {
                    double p = std::exp(x[j] - mx) / z;
                    dx[j] += g * (p - (idv[r] == j ? 1.0 : 0.0));
                }
            }
        });
    }
    return out_t;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(std::vector<TensorPtr> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(params_[i]->numel(), 0.0);
        v_[i].assign(params_[i]->numel(), 0.0);
    }
}

double Adam::clip_grad_norm(double max_norm) {
    double sq = 0.0;
    for (const auto& p : params_) {
        if (p->grad.empty()) throw ContractError("clip_grad_norm: parameter missing gradient");
        for (double g : p->grad) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (const auto& p : params_)
            for (double& g : p->grad) g *= s;
    }
    return norm;
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = *params_[i];
        if (p.grad.empty()) throw ContractError("adam_step: parameter missing gradient");
        double* m = m_[i].data();
        double* v = v_[i].data();
        for (std::size_t j = 0; j < p.numel(); ++j) {
            const double g = p.grad[j];
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
        p.zero_grad();
    }
}

}  // namespace ssmi
