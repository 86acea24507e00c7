#pragma once

#include <cstdint>
#include <vector>

#include "ssmi/tensor.hpp"

namespace ssmi {

enum class VisualMode { additive, prefix };

// One state space memory module:
//   s_{t+1} = A s_t + B h_t
//   y_t     = C s_t + D h_t          (s_0 = 0)
// W_v projects the visual embedding into the module input.
struct SsmParams {
    TensorPtr A;    // [n x n] state transition
    TensorPtr B;    // [n x d] input map
    TensorPtr C;    // [d x n] readout
    TensorPtr D;    // [d x d] feedthrough
    TensorPtr W_v;  // [d x d_v] visual conditioning projection
    std::size_t n = 0, d = 0, d_v = 0;

    std::vector<TensorPtr> tensors() const { return {A, B, C, D, W_v}; }
};

// A = scale * (orthogonalized Gaussian), so the spectral radius equals scale
// exactly; B, C, D, W_v ~ N(0, 0.02^2). Deterministic in seed.
SsmParams init_stable(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t d_v,
                      double scale);

// Spectral radius estimate: normalized power iteration, returns ||A x_k||
// after `iters` steps. Exact for scaled-orthogonal A.
double spectral_radius_estimate(const Tensor& a, std::size_t iters = 50);
// Largest singular value estimate (power iteration on A^T A).
double spectral_norm_estimate(const Tensor& a, std::size_t iters = 50);

// Sequential scan of the recurrence over H [T x d] (rows are timesteps).
// Differentiable through A, B, C, D and H (fused reverse pass).
// state_path=false zeroes the state contribution: y_t = D h_t.
TensorPtr scan(const SsmParams& p, const TensorPtr& H, bool state_path = true);

// Convolution kernels equivalent to scan: G_0 = D, G_k = C A^{k-1} B.
// Plain values (no gradient recording) — this is the oracle path.
std::vector<TensorPtr> impulse_response(const SsmParams& p, std::size_t K);

// Y via the truncated resolvent series (kernel convolution). Truncation K is
// chosen so rho(A)^K < 1e-12, capped at the sequence length where the series
// is exact. Requires rho(A) < 1. Oracle path, no gradient recording.
TensorPtr resolvent_apply(const SsmParams& p, const TensorPtr& H);

// h'_t = h_t + W_v V, broadcast over timesteps. Differentiable.
TensorPtr condition_on_visual(const SsmParams& p, const TensorPtr& H, const TensorPtr& V);

// Post-optimizer guard: if the spectral radius estimate reaches 0.999,
// rescale A by 0.99/estimate.
void enforce_stability(SsmParams& p);

}  // namespace ssmi
