#include "ssmi/ssm.hpp"

#include <algorithm>
#include <cmath>

namespace ssmi {

namespace {

// Modified Gram-Schmidt over columns, two passes. Near-dependent columns
// (never hit in practice for Gaussian draws) fall back to a basis vector.
void orthogonalize_columns(std::vector<double>& a, std::size_t n) {
    auto col_dot = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) s += a[r * n + i] * a[r * n + j];
        return s;
    };
    for (std::size_t j = 0; j < n; ++j) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t i = 0; i < j; ++i) {
                const double proj = col_dot(i, j);
                for (std::size_t r = 0; r < n; ++r) a[r * n + j] -= proj * a[r * n + i];
            }
        }
        double norm = std::sqrt(col_dot(j, j));
        if (norm < 1e-10) {
            for (std::size_t r = 0; r < n; ++r) a[r * n + j] = r == j ? 1.0 : 0.0;
            for (std::size_t i = 0; i < j; ++i) {
                const double proj = col_dot(i, j);
                for (std::size_t r = 0; r < n; ++r) a[r * n + j] -= proj * a[r * n + i];
            }
            norm = std::sqrt(col_dot(j, j));
        }
        for (std::size_t r = 0; r < n; ++r) a[r * n + j] /= norm;
    }
}

// y = M x for square/rectangular row-major M [rows x cols]
void matvec_into(const double* m, std::size_t rows, std::size_t cols, const double* x,
                 double* y) {
    for (std::size_t i = 0; i < rows; ++i) {
        double s = 0.0;
        const double* row = m + i * cols;
        for (std::size_t j = 0; j < cols; ++j) s += row[j] * x[j];
        y[i] = s;
    }
}

// y += M^T x, M [rows x cols], x len rows, y len cols
void matvec_t_add(const double* m, std::size_t rows, std::size_t cols, const double* x,
                  double* y) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double xi = x[i];
        const double* row = m + i * cols;
        for (std::size_t j = 0; j < cols; ++j) y[j] += xi * row[j];
    }
}

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

SsmParams init_stable(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t d_v,
                      double scale) {
    if (n < 1 || d < 1 || d_v < 1) throw ContractError("init_stable: sizes must be >= 1");
    if (!(scale > 0.0 && scale < 1.0)) {
        throw ContractError("init_stable: scale must be in (0,1), got " + std::to_string(scale));
    }
    Rng root(seed);
    Rng ra = root.fork(1), rb = root.fork(2), rc = root.fork(3), rd = root.fork(4),
        rv = root.fork(5);

    std::vector<double> a(n * n);
    for (auto& x : a) x = ra.normal();
    orthogonalize_columns(a, n);
    for (auto& x : a) x *= scale;

    SsmParams p;
    p.n = n;
    p.d = d;
    p.d_v = d_v;
    p.A = tensor({n, n}, std::move(a));
    p.B = randn({n, d}, rb, 0.02);
    p.C = randn({d, n}, rc, 0.02);
    p.D = randn({d, d}, rd, 0.02);
    p.W_v = randn({d, d_v}, rv, 0.02);
    return p;
}

double spectral_radius_estimate(const Tensor& a, std::size_t iters) {
    const std::size_t n = a.shape[0];
    Rng r(0x5eedu);
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = r.normal();
    double nx = norm2(x);
    for (auto& v : x) v /= nx;
    double rho = 0.0;
    for (std::size_t k = 0; k < iters; ++k) {
        matvec_into(a.data.data(), n, n, x.data(), y.data());
        rho = norm2(y);
        if (rho == 0.0) return 0.0;
        for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / rho;
    }
    return rho;
}

double spectral_norm_estimate(const Tensor& a, std::size_t iters) {
    const std::size_t m = a.shape[0], n = a.shape[1];
    Rng r(0x5eedu);
    std::vector<double> x(n), ax(m), gx(n);
    for (auto& v : x) v = r.normal();
    double nx = norm2(x);
    for (auto& v : x) v /= nx;
    double sigma2 = 0.0;
    for (std::size_t k = 0; k < iters; ++k) {
        matvec_into(a.data.data(), m, n, x.data(), ax.data());
        std::fill(gx.begin(), gx.end(), 0.0);
        matvec_t_add(a.data.data(), m, n, ax.data(), gx.data());
        sigma2 = norm2(gx);
        if (sigma2 == 0.0) return 0.0;
        for (std::size_t i = 0; i < n; ++i) x[i] = gx[i] / sigma2;
    }
    return std::sqrt(sigma2);
}

TensorPtr scan(const SsmParams& p, const TensorPtr& H, bool state_path) {
    if (H->shape.size() != 2 || H->shape[1] != p.d) {
        throw DimensionError("scan: input " + shape_str(H->shape) + " does not match width " +
                             std::to_string(p.d));
    }
    const std::size_t T = H->shape[0], n = p.n, d = p.d;

    // Forward, keeping s_0..s_{T-1} for the reverse pass.
    std::vector<double> states(T * n, 0.0);
    std::vector<double> out(T * d, 0.0);
    {
        std::vector<double> s(n, 0.0), s_next(n);
        const double* h = H->data.data();
        for (std::size_t t = 0; t < T; ++t) {
            std::copy(s.begin(), s.end(), states.begin() + t * n);
            double* y = out.data() + t * d;
            if (state_path) matvec_into(p.C->data.data(), d, n, s.data(), y);
            const double* ht = h + t * d;
            for (std::size_t i = 0; i < d; ++i) {
                double acc = 0.0;
                const double* drow = p.D->data.data() + i * d;
                for (std::size_t j = 0; j < d; ++j) acc += drow[j] * ht[j];
                y[i] += acc;
            }
            if (state_path && t + 1 < T) {
                matvec_into(p.A->data.data(), n, n, s.data(), s_next.data());
                for (std::size_t i = 0; i < n; ++i) {
                    double acc = 0.0;
                    const double* brow = p.B->data.data() + i * d;
                    for (std::size_t j = 0; j < d; ++j) acc += brow[j] * ht[j];
                    s_next[i] += acc;
                }
                s.swap(s_next);
            }
        }
    }

    auto out_t = tensor({T, d}, std::move(out));
    const bool track = tape().recording() &&
                       (H->tracked() || p.A->tracked() || p.B->tracked() || p.C->tracked() ||
                        p.D->tracked());
    if (track) {
        out_t->on_graph = true;
        SsmParams pc = p;
        TensorPtr Hv = H, ov = out_t;
        auto st = std::make_shared<std::vector<double>>(std::move(states));
        tape().record(out_t, [pc, Hv, ov, st, T, n, d, state_path]() {
            const double* g = ov->grad.data();
            const double* h = Hv->data.data();
            const bool need_h = Hv->tracked();
            if (need_h) Hv->ensure_grad();
            const bool dA = state_path && pc.A->tracked();
            const bool dB = state_path && pc.B->tracked();
            const bool dC = state_path && pc.C->tracked();
            const bool dD = pc.D->tracked();
            if (dA) pc.A->ensure_grad();
            if (dB) pc.B->ensure_grad();
            if (dC) pc.C->ensure_grad();
            if (dD) pc.D->ensure_grad();

            std::vector<double> lam(n, 0.0), lam_prev(n);
            for (std::size_t tt = T; tt-- > 0;) {
                const double* gy = g + tt * d;       // dL/dy_t
                const double* s_t = st->data() + tt * n;
                const double* h_t = h + tt * d;
                // lam currently holds dL/ds_{t+1}
                if (dA) {
                    double* da = pc.A->grad.data();
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < n; ++j) da[i * n + j] += lam[i] * s_t[j];
                }
                if (dB) {
                    double* db = pc.B->grad.data();
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) db[i * d + j] += lam[i] * h_t[j];
                }
                if (dC) {
                    double* dc = pc.C->grad.data();
                    for (std::size_t i = 0; i < d; ++i)
                        for (std::size_t j = 0; j < n; ++j) dc[i * n + j] += gy[i] * s_t[j];
                }
                if (dD) {
                    double* dd = pc.D->grad.data();
                    for (std::size_t i = 0; i < d; ++i)
                        for (std::size_t j = 0; j < d; ++j) dd[i * d + j] += gy[i] * h_t[j];
                }
                if (need_h) {
                    double* gh = Hv->grad.data() + tt * d;
                    matvec_t_add(pc.D->data.data(), d, d, gy, gh);  // D^T gy
                    if (state_path) matvec_t_add(pc.B->data.data(), n, d, lam.data(), gh);
                }
                if (state_path) {
                    // dL/ds_t = C^T gy + A^T lam
                    std::fill(lam_prev.begin(), lam_prev.end(), 0.0);
                    matvec_t_add(pc.C->data.data(), d, n, gy, lam_prev.data());
                    matvec_t_add(pc.A->data.data(), n, n, lam.data(), lam_prev.data());
                    lam.swap(lam_prev);
                }
            }
        });
    }
    return out_t;
}

std::vector<TensorPtr> impulse_response(const SsmParams& p, std::size_t K) {
    if (K < 1) throw ContractError("impulse_response: K must be >= 1");
    const std::size_t n = p.n, d = p.d;
    std::vector<TensorPtr> kernels;
    kernels.reserve(K);
    kernels.push_back(tensor({d, d}, p.D->data));

    // P = A^{k-1} B, updated in place; G_k = C P.
    std::vector<double> P(p.B->data), P_next(n * d);
    for (std::size_t k = 1; k < K; ++k) {
        std::vector<double> g(d * d, 0.0);
        const double* c = p.C->data.data();
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t l = 0; l < n; ++l) {
                const double cv = c[i * n + l];
                const double* prow = P.data() + l * d;
                double* grow = g.data() + i * d;
                for (std::size_t j = 0; j < d; ++j) grow[j] += cv * prow[j];
            }
        }
        kernels.push_back(tensor({d, d}, std::move(g)));
        if (k + 1 < K) {
            const double* a = p.A->data.data();
            std::fill(P_next.begin(), P_next.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t l = 0; l < n; ++l) {
                    const double av = a[i * n + l];
                    const double* prow = P.data() + l * d;
                    double* nrow = P_next.data() + i * d;
                    for (std::size_t j = 0; j < d; ++j) nrow[j] += av * prow[j];
                }
            }
            P.swap(P_next);
        }
    }
    return kernels;
}

TensorPtr resolvent_apply(const SsmParams& p, const TensorPtr& H) {
    if (H->shape.size() != 2 || H->shape[1] != p.d) {
        throw DimensionError("resolvent_apply: input " + shape_str(H->shape) +
                             " does not match width " + std::to_string(p.d));
    }
    const double rho = spectral_radius_estimate(*p.A);
    if (rho >= 1.0 - 1e-12) {
        throw StabilityError("resolvent_apply: spectral radius estimate " + std::to_string(rho) +
                             " >= 1, series does not converge");
    }
    const std::size_t T = H->shape[0], d = p.d;
    std::size_t K;
    if (rho <= 0.0) {
        K = 2;  // A = 0: only G_0, G_1 are nonzero
    } else {
        const double k_needed = std::log(1e-12) / std::log(rho);
        K = static_cast<std::size_t>(std::floor(k_needed)) + 1;
        K = std::max<std::size_t>(K, 2);
    }
    K = std::min(K, T);  // the series is exact once K covers the sequence

    auto kernels = impulse_response(p, K);
    std::vector<double> out(T * d, 0.0);
    const double* h = H->data.data();
    for (std::size_t t = 0; t < T; ++t) {
        double* y = out.data() + t * d;
        const std::size_t kmax = std::min(t + 1, K);
        for (std::size_t k = 0; k < kmax; ++k) {
            const double* gk = kernels[k]->data.data();
            const double* ht = h + (t - k) * d;
            for (std::size_t i = 0; i < d; ++i) {
                double acc = 0.0;
                const double* grow = gk + i * d;
                for (std::size_t j = 0; j < d; ++j) acc += grow[j] * ht[j];
                y[i] += acc;
            }
        }
    }
    return tensor({T, d}, std::move(out));
}

TensorPtr condition_on_visual(const SsmParams& p, const TensorPtr& H, const TensorPtr& V) {
    if (V->shape != std::vector<std::size_t>{p.d_v}) {
        throw DimensionError("condition_on_visual: visual embedding " + shape_str(V->shape) +
                             " does not match width " + std::to_string(p.d_v));
    }
    auto wv = matmul(p.W_v, V);  // [d]
    return add(H, wv);           // broadcast over timesteps
}

void enforce_stability(SsmParams& p) {
    const double rho = spectral_radius_estimate(*p.A);
    if (rho >= 0.999) {
        const double s = 0.99 / rho;
        for (double& x : p.A->data) x *= s;
    }
}

}  // namespace ssmi
