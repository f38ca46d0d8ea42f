#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mqt/errors.hpp"

namespace mqt {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // sized lazily; empty means all-zero
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;  // accumulates into parents' grads
    std::string name;

    bool is_leaf() const { return parents.empty(); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

using NodePtr = std::shared_ptr<TensorImpl>;

// Value-semantic handle over a graph node. Copies share storage; the graph
// is define-by-run and rebuilt on every forward pass.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::int64_t rank() const { return static_cast<std::int64_t>(impl_->shape.size()); }
    std::int64_t dim(std::int64_t i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return impl_->numel(); }

    std::vector<double>& data() { return impl_->data; }
    const std::vector<double>& data() const { return impl_->data; }
    double item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        impl_->requires_grad = v;
        return *this;
    }
    std::vector<double>& grad() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    void zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

    const std::string& name() const { return impl_->name; }
    Tensor& set_name(std::string n) {
        impl_->name = std::move(n);
        return *this;
    }

    // Reverse-mode pass from a scalar. Leaf grads accumulate across calls;
    // interior grads are reset per call.
    void backward() const;

    NodePtr impl() const { return impl_; }

private:
    NodePtr impl_;
};

// Graph-node factory for fused ops defined outside this module (losses etc.).
Tensor make_op_node(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                    std::function<void(TensorImpl&)> backward_fn);

// --- elementwise suite ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor gelu(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);  // 2-D
Tensor concat_rows(const std::vector<Tensor>& parts);
std::vector<Tensor> split_rows(const Tensor& a, const std::vector<std::int64_t>& sizes);
Tensor concat_cols(const std::vector<Tensor>& parts);
std::vector<Tensor> split_cols(const Tensor& a, const std::vector<std::int64_t>& sizes);
Tensor sum_all(const Tensor& a);   // -> shape {1}
Tensor mean_rows(const Tensor& a); // [m x n] -> [m]
Tensor var_rows(const Tensor& a);  // population variance, [m x n] -> [m]

// --- matrix / attention primitives ---
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& a);

// --- dense-prediction primitives ---
// x is [H x W x C] row-major; align-corners-false, edge-clamped sampling.
Tensor bilinear_resample(const Tensor& x, std::int64_t out_h, std::int64_t out_w);
// Cross-correlation; kernel [k x k x Cin x Cout], zero padding.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::int64_t stride,
              std::int64_t padding);
// Row-wise L2 normalization with a small epsilon floor under the sqrt.
Tensor normalize_rows(const Tensor& x, double eps = 1e-12);

}  // namespace mqt
