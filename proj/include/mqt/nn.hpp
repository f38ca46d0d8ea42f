#pragma once

#include <cstdint>
#include <random>

#include "mqt/tensor.hpp"

namespace mqt {

struct LayerNormParams {
    Tensor gamma;  // [C]
    Tensor beta;   // [C]
    double epsilon = 1e-5;
};

struct MhsaParams {
    Tensor w_q, w_k, w_v, w_o;  // all [C x C]
    std::int64_t num_heads = 4;
    // Attention logit scale uses d = C / num_heads by default; when true,
    // uses d = C instead.
    bool scale_full_dim = false;
};

struct MlpParams {
    Tensor w1, b1;  // [C x rC], [rC]
    Tensor w2, b2;  // [rC x C], [C]
};

struct ConvParams {
    Tensor kernel;  // [k x k x Cin x Cout]
    Tensor bias;    // [Cout]
    std::int64_t stride = 1;
    std::int64_t padding = 0;
};

// Learned additive embeddings: e_q for a query bank [N x C], e_k for a
// flattened feature [HW x C].
struct PositionalEncodings {
    Tensor e_q;
    Tensor e_k;
};

// Channel-axis normalization over the last dimension of a rank-2 tensor,
// population variance, then affine gamma/beta.
Tensor layer_norm(const Tensor& x, const LayerNormParams& p);

// Adds a [C] bias to every row of an [L x C] tensor.
Tensor add_bias_rows(const Tensor& x, const Tensor& bias);

// Multi-head attention, pre-projected inputs [L_q x C] and [L_k x C].
Tensor mhsa(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in, const MhsaParams& p);

// w2 * gelu(w1 * x + b1) + b2, applied row-wise.
Tensor mlp_block(const Tensor& x, const MlpParams& p);

Tensor conv2d(const Tensor& x, const ConvParams& p);

// --- init helpers (deterministic given the engine state) ---
Tensor uniform_tensor(Shape shape, double halfwidth, std::mt19937_64& rng, bool requires_grad = true);
// Xavier-uniform over fan_in/fan_out inferred from the shape: [in x out] for
// matrices, [k x k x Cin x Cout] for conv kernels.
Tensor xavier_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true);

}  // namespace mqt
