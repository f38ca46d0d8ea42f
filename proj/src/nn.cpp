#include "mqt/nn.hpp"

#include <cmath>

namespace mqt {

Tensor layer_norm(const Tensor& x, const LayerNormParams& p) {
    if (x.rank() != 2)
        throw DimensionError("layer_norm: expected [L x C], got " + shape_str(x.shape()));
    const auto l = x.dim(0), c = x.dim(1);
    if (p.gamma.rank() != 1 || p.gamma.dim(0) != c || p.beta.rank() != 1 || p.beta.dim(0) != c)
        throw DimensionError("layer_norm: gamma " + shape_str(p.gamma.shape()) + " / beta " +
                             shape_str(p.beta.shape()) + " vs channels " + std::to_string(c));
    if (p.epsilon <= 0.0) throw ContractError("layer_norm: epsilon must be positive");

    std::vector<double> out(static_cast<std::size_t>(l * c));
    std::vector<double> xhat(static_cast<std::size_t>(l * c));
    std::vector<double> inv_std(static_cast<std::size_t>(l));
    const auto& xd = x.data();
    const auto& gd = p.gamma.data();
    const auto& bd = p.beta.data();
    for (std::int64_t i = 0; i < l; ++i) {
        const double* row = xd.data() + i * c;
        double mu = 0.0;
        for (std::int64_t j = 0; j < c; ++j) mu += row[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::int64_t j = 0; j < c; ++j) {
            const double d = row[j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + p.epsilon);
        inv_std[static_cast<std::size_t>(i)] = inv;
        for (std::int64_t j = 0; j < c; ++j) {
            const double xh = (row[j] - mu) * inv;
            xhat[static_cast<std::size_t>(i * c + j)] = xh;
            out[static_cast<std::size_t>(i * c + j)] = gd[static_cast<std::size_t>(j)] * xh + bd[static_cast<std::size_t>(j)];
        }
    }
    auto xi = x.impl();
    auto gi = p.gamma.impl();
    auto bi = p.beta.impl();
    return make_op_node(
        {l, c}, std::move(out), {x, p.gamma, p.beta},
        [xi, gi, bi, l, c, xhat, inv_std](TensorImpl& self) {
            if (gi->requires_grad) gi->ensure_grad();
            if (bi->requires_grad) bi->ensure_grad();
            if (xi->requires_grad) xi->ensure_grad();
            for (std::int64_t i = 0; i < l; ++i) {
                const double* gy = self.grad.data() + i * c;
                const double* xh = xhat.data() + i * c;
                if (gi->requires_grad || bi->requires_grad) {
                    for (std::int64_t j = 0; j < c; ++j) {
                        if (gi->requires_grad) gi->grad[static_cast<std::size_t>(j)] += gy[j] * xh[j];
                        if (bi->requires_grad) bi->grad[static_cast<std::size_t>(j)] += gy[j];
                    }
                }
                if (xi->requires_grad) {
                    double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat*xhat)
                    for (std::int64_t j = 0; j < c; ++j) {
                        const double dxh = gy[j] * gi->data[static_cast<std::size_t>(j)];
                        m1 += dxh;
                        m2 += dxh * xh[j];
                    }
                    m1 /= static_cast<double>(c);
                    m2 /= static_cast<double>(c);
                    const double inv = inv_std[static_cast<std::size_t>(i)];
                    for (std::int64_t j = 0; j < c; ++j) {
                        const double dxh = gy[j] * gi->data[static_cast<std::size_t>(j)];
                        xi->grad[static_cast<std::size_t>(i * c + j)] += inv * (dxh - m1 - xh[j] * m2);
                    }
                }
            }
        });
}

Tensor add_bias_rows(const Tensor& x, const Tensor& bias) {
    if (x.rank() != 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1))
        throw DimensionError("add_bias_rows: " + shape_str(x.shape()) + " vs bias " +
                             shape_str(bias.shape()));
    const auto l = x.dim(0), c = x.dim(1);
    std::vector<double> out(x.data());
    for (std::int64_t i = 0; i < l; ++i)
        for (std::int64_t j = 0; j < c; ++j)
            out[static_cast<std::size_t>(i * c + j)] += bias.data()[static_cast<std::size_t>(j)];
    auto xi = x.impl();
    auto bi = bias.impl();
    return make_op_node({l, c}, std::move(out), {x, bias}, [xi, bi, l, c](TensorImpl& self) {
        if (xi->requires_grad) {
            xi->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) xi->grad[i] += self.grad[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            for (std::int64_t i = 0; i < l; ++i)
                for (std::int64_t j = 0; j < c; ++j)
                    bi->grad[static_cast<std::size_t>(j)] += self.grad[static_cast<std::size_t>(i * c + j)];
        }
    });
}

Tensor mhsa(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in, const MhsaParams& p) {
    if (q_in.rank() != 2 || k_in.rank() != 2 || v_in.rank() != 2)
        throw DimensionError("mhsa: rank-2 inputs required");
    const auto c = p.w_q.dim(0);
    if (p.w_q.shape() != Shape{c, c} || p.w_k.shape() != Shape{c, c} ||
        p.w_v.shape() != Shape{c, c} || p.w_o.shape() != Shape{c, c})
        throw DimensionError("mhsa: projection matrices must all be square C x C");
    if (q_in.dim(1) != c || k_in.dim(1) != c || v_in.dim(1) != c)
        throw DimensionError("mhsa: channel mismatch, q " + shape_str(q_in.shape()) + " k " +
                             shape_str(k_in.shape()) + " v " + shape_str(v_in.shape()) +
                             " vs C=" + std::to_string(c));
    if (k_in.dim(0) != v_in.dim(0))
        throw ContractError("mhsa: key/value length mismatch");
    if (k_in.dim(0) < 1) throw ContractError("mhsa: empty key/value sequence");
    if (p.num_heads < 1 || c % p.num_heads != 0)
        throw ContractError("mhsa: num_heads must divide C (" + std::to_string(p.num_heads) +
                            " vs " + std::to_string(c) + ")");

    const std::int64_t d = c / p.num_heads;
    const double logit_scale = 1.0 / std::sqrt(static_cast<double>(p.scale_full_dim ? c : d));
    const Tensor q = matmul(q_in, p.w_q);
    const Tensor k = matmul(k_in, p.w_k);
    const Tensor v = matmul(v_in, p.w_v);
    const std::vector<std::int64_t> head_sizes(static_cast<std::size_t>(p.num_heads), d);
    const auto qh = split_cols(q, head_sizes);
    const auto kh = split_cols(k, head_sizes);
    const auto vh = split_cols(v, head_sizes);
    std::vector<Tensor> heads;
    heads.reserve(static_cast<std::size_t>(p.num_heads));
    for (std::int64_t h = 0; h < p.num_heads; ++h) {
        const auto hs = static_cast<std::size_t>(h);
        Tensor logits = scale(matmul(qh[hs], transpose(kh[hs])), logit_scale);
        Tensor attn = softmax_rows(logits);
        heads.push_back(matmul(attn, vh[hs]));
    }
    return matmul(concat_cols(heads), p.w_o);
}

Tensor mlp_block(const Tensor& x, const MlpParams& p) {
    Tensor h = gelu(add_bias_rows(matmul(x, p.w1), p.b1));
    return add_bias_rows(matmul(h, p.w2), p.b2);
}

Tensor conv2d(const Tensor& x, const ConvParams& p) {
    return conv2d(x, p.kernel, p.bias, p.stride, p.padding);
}

Tensor uniform_tensor(Shape shape, double halfwidth, std::mt19937_64& rng, bool requires_grad) {
    const auto n = shape_numel(shape);
    std::uniform_real_distribution<double> dist(-halfwidth, halfwidth);
    std::vector<double> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = dist(rng);
    return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor xavier_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad) {
    std::int64_t fan_in = 0, fan_out = 0;
    if (shape.size() == 2) {
        fan_in = shape[0];
        fan_out = shape[1];
    } else if (shape.size() == 4) {
        fan_in = shape[0] * shape[1] * shape[2];
        fan_out = shape[0] * shape[1] * shape[3];
    } else {
        throw ContractError("xavier_tensor: unsupported shape " + shape_str(shape));
    }
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform_tensor(std::move(shape), a, rng, requires_grad);
}

}  // namespace mqt
