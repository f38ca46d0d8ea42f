#include "mqt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace mqt {

std::int64_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), static_cast<std::int64_t>(1),
                           std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace {

void check_positive_dims(const Shape& shape) {
    for (auto d : shape) {
        if (d <= 0) throw DimensionError("nonpositive dimension in shape " + shape_str(shape));
    }
}

NodePtr new_impl(Shape shape, std::vector<double> data) {
    check_positive_dims(shape);
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
        throw DimensionError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorImpl>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    return n;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

void require_rank2(const char* op, const Tensor& a) {
    if (a.rank() != 2)
        throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " +
                             shape_str(a.shape()));
}

bool any_requires_grad(const std::vector<Tensor>& parents) {
    for (const auto& p : parents)
        if (p.requires_grad()) return true;
    return false;
}

// C[m x n] += op(A) * op(B)
void gemm_acc(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, bool ta,
              const double* b, bool tb, double* c) {
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = ta ? a[p * m + i] : a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = tb ? nullptr : b + p * n;
            double* crow = c + i * n;
            if (tb) {
                for (std::int64_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
            } else {
                for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

}  // namespace

Tensor make_op_node(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                    std::function<void(TensorImpl&)> backward_fn) {
    auto n = new_impl(std::move(shape), std::move(data));
    n->requires_grad = any_requires_grad(parents);
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.impl());
    n->backward_fn = std::move(backward_fn);
    return Tensor(n);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const auto n = shape_numel(shape);
    auto impl = new_impl(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    impl->requires_grad = requires_grad;
    return Tensor(impl);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    auto impl = new_impl(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value));
    impl->requires_grad = requires_grad;
    return Tensor(impl);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    auto impl = new_impl(std::move(shape), std::move(data));
    impl->requires_grad = requires_grad;
    return Tensor(impl);
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item(): tensor has " + std::to_string(numel()) + " elements");
    return impl_->data[0];
}

void Tensor::backward() const {
    if (!impl_) throw ContractError("backward(): undefined tensor");
    if (numel() != 1)
        throw ContractError("backward(): loss must be scalar, got shape " + shape_str(shape()));
    if (!impl_->requires_grad) return;

    // Topological order over the grad-tracking subgraph, iterative DFS.
    std::vector<TensorImpl*> topo;
    std::unordered_set<TensorImpl*> visited;
    struct Frame {
        TensorImpl* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({impl_.get(), 0});
    visited.insert(impl_.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            TensorImpl* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            topo.push_back(f.node);
            stack.pop_back();
        }
    }

    // Interior grads reset per pass; leaf grads accumulate across passes.
    for (TensorImpl* n : topo) {
        if (n->is_leaf())
            n->ensure_grad();
        else
            n->grad.assign(n->data.size(), 0.0);
    }
    impl_->grad[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        TensorImpl* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------
// elementwise suite
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    auto ai = a.impl();
    auto bi = b.impl();
    return make_op_node(a.shape(), std::move(out), {a, b}, [ai, bi](TensorImpl& self) {
        if (ai->requires_grad) {
            ai->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) ai->grad[i] += self.grad[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) bi->grad[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
    auto ai = a.impl();
    auto bi = b.impl();
    return make_op_node(a.shape(), std::move(out), {a, b}, [ai, bi](TensorImpl& self) {
        if (ai->requires_grad) {
            ai->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) ai->grad[i] += self.grad[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) bi->grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
    auto ai = a.impl();
    auto bi = b.impl();
    return make_op_node(a.shape(), std::move(out), {a, b}, [ai, bi](TensorImpl& self) {
        if (ai->requires_grad) {
            ai->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                ai->grad[i] += self.grad[i] * bi->data[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                bi->grad[i] += self.grad[i] * ai->data[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.data());
    for (auto& v : out) v *= s;
    auto ai = a.impl();
    return make_op_node(a.shape(), std::move(out), {a}, [ai, s](TensorImpl& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) ai->grad[i] += s * self.grad[i];
    });
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Tensor gelu(const Tensor& a) {
    std::vector<double> out(a.data().size());
    const auto& ad = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = ad[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    auto ai = a.impl();
    return make_op_node(a.shape(), std::move(out), {a}, [ai](TensorImpl& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double x = ai->data[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            ai->grad[i] += self.grad[i] * (cdf + x * pdf);
        }
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                             shape_str(shape));
    auto ai = a.impl();
    return make_op_node(std::move(shape), a.data(), {a}, [ai](TensorImpl& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) ai->grad[i] += self.grad[i];
    });
}

Tensor transpose(const Tensor& a) {
    require_rank2("transpose", a);
    const auto m = a.dim(0), n = a.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m * n));
    const auto& ad = a.data();
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) out[static_cast<std::size_t>(j * m + i)] = ad[static_cast<std::size_t>(i * n + j)];
    auto ai = a.impl();
    return make_op_node({n, m}, std::move(out), {a}, [ai, m, n](TensorImpl& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::int64_t j = 0; j < n; ++j)
            for (std::int64_t i = 0; i < m; ++i)
                ai->grad[static_cast<std::size_t>(i * n + j)] +=
                    self.grad[static_cast<std::size_t>(j * m + i)];
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: no inputs");
    const auto cols = parts[0].dim(1);
    std::int64_t rows = 0;
    for (const auto& p : parts) {
        require_rank2("concat_rows", p);
        if (p.dim(1) != cols)
            throw DimensionError("concat_rows: column mismatch " + shape_str(p.shape()) +
                                 " vs " + shape_str(parts[0].shape()));
        rows += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(rows * cols));
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    std::vector<NodePtr> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    return make_op_node({rows, cols}, std::move(out), parts, [impls](TensorImpl& self) {
        std::size_t off = 0;
        for (const auto& pi : impls) {
            const std::size_t n = pi->data.size();
            if (pi->requires_grad) {
                pi->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) pi->grad[i] += self.grad[off + i];
            }
            off += n;
        }
    });
}

std::vector<Tensor> split_rows(const Tensor& a, const std::vector<std::int64_t>& sizes) {
    require_rank2("split_rows", a);
    const auto cols = a.dim(1);
    std::int64_t total = 0;
    for (auto s : sizes) total += s;
    if (total != a.dim(0))
        throw DimensionError("split_rows: sizes sum to " + std::to_string(total) +
                             " but tensor has " + std::to_string(a.dim(0)) + " rows");
    std::vector<Tensor> outs;
    auto ai = a.impl();
    std::int64_t row0 = 0;
    for (auto s : sizes) {
        const std::size_t off = static_cast<std::size_t>(row0 * cols);
        const std::size_t n = static_cast<std::size_t>(s * cols);
        std::vector<double> d(a.data().begin() + off, a.data().begin() + off + n);
        outs.push_back(make_op_node({s, cols}, std::move(d), {a}, [ai, off](TensorImpl& self) {
            if (!ai->requires_grad) return;
            ai->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) ai->grad[off + i] += self.grad[i];
        }));
        row0 += s;
    }
    return outs;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    const auto rows = parts[0].dim(0);
    std::int64_t cols = 0;
    for (const auto& p : parts) {
        require_rank2("concat_cols", p);
        if (p.dim(0) != rows)
            throw DimensionError("concat_cols: row mismatch " + shape_str(p.shape()) + " vs " +
                                 shape_str(parts[0].shape()));
        cols += p.dim(1);
    }
    std::vector<double> out(static_cast<std::size_t>(rows * cols));
    std::int64_t col0 = 0;
    for (const auto& p : parts) {
        const auto pc = p.dim(1);
        for (std::int64_t i = 0; i < rows; ++i)
            for (std::int64_t j = 0; j < pc; ++j)
                out[static_cast<std::size_t>(i * cols + col0 + j)] =
                    p.data()[static_cast<std::size_t>(i * pc + j)];
        col0 += pc;
    }
    std::vector<NodePtr> impls;
    std::vector<std::int64_t> widths;
    for (const auto& p : parts) {
        impls.push_back(p.impl());
        widths.push_back(p.dim(1));
    }
    return make_op_node({rows, cols}, std::move(out), parts,
                        [impls, widths, rows, cols](TensorImpl& self) {
                            std::int64_t col0 = 0;
                            for (std::size_t k = 0; k < impls.size(); ++k) {
                                const auto pc = widths[k];
                                if (impls[k]->requires_grad) {
                                    impls[k]->ensure_grad();
                                    for (std::int64_t i = 0; i < rows; ++i)
                                        for (std::int64_t j = 0; j < pc; ++j)
                                            impls[k]->grad[static_cast<std::size_t>(i * pc + j)] +=
                                                self.grad[static_cast<std::size_t>(i * cols + col0 + j)];
                                }
                                col0 += pc;
                            }
                        });
}

std::vector<Tensor> split_cols(const Tensor& a, const std::vector<std::int64_t>& sizes) {
    require_rank2("split_cols", a);
    const auto rows = a.dim(0), cols = a.dim(1);
    std::int64_t total = 0;
    for (auto s : sizes) total += s;
    if (total != cols)
        throw DimensionError("split_cols: sizes sum to " + std::to_string(total) +
                             " but tensor has " + std::to_string(cols) + " columns");
    std::vector<Tensor> outs;
    auto ai = a.impl();
    std::int64_t col0 = 0;
    for (auto s : sizes) {
        std::vector<double> d(static_cast<std::size_t>(rows * s));
        for (std::int64_t i = 0; i < rows; ++i)
            for (std::int64_t j = 0; j < s; ++j)
                d[static_cast<std::size_t>(i * s + j)] =
                    a.data()[static_cast<std::size_t>(i * cols + col0 + j)];
        const std::int64_t c0 = col0;
        outs.push_back(
            make_op_node({rows, s}, std::move(d), {a}, [ai, rows, cols, s, c0](TensorImpl& self) {
                if (!ai->requires_grad) return;
                ai->ensure_grad();
                for (std::int64_t i = 0; i < rows; ++i)
                    for (std::int64_t j = 0; j < s; ++j)
                        ai->grad[static_cast<std::size_t>(i * cols + c0 + j)] +=
                            self.grad[static_cast<std::size_t>(i * s + j)];
            }));
        col0 += s;
    }
    return outs;
}

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    auto ai = a.impl();
    return make_op_node({1}, {s}, {a}, [ai](TensorImpl& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        const double g = self.grad[0];
        for (auto& gv : ai->grad) gv += g;
    });
}

Tensor mean_rows(const Tensor& a) {
    require_rank2("mean_rows", a);
    const auto m = a.dim(0), n = a.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m), 0.0);
    for (std::int64_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < n; ++j) s += a.data()[static_cast<std::size_t>(i * n + j)];
        out[static_cast<std::size_t>(i)] = s / static_cast<double>(n);
    }
    auto ai = a.impl();
    return make_op_node({m}, std::move(out), {a}, [ai, m, n](TensorImpl& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::int64_t i = 0; i < m; ++i) {
            const double g = self.grad[static_cast<std::size_t>(i)] / static_cast<double>(n);
            for (std::int64_t j = 0; j < n; ++j) ai->grad[static_cast<std::size_t>(i * n + j)] += g;
        }
    });
}

Tensor var_rows(const Tensor& a) {
    require_rank2("var_rows", a);
    const auto m = a.dim(0), n = a.dim(1);
    std::vector<double> mu(static_cast<std::size_t>(m), 0.0);
    std::vector<double> out(static_cast<std::size_t>(m), 0.0);
    for (std::int64_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < n; ++j) s += a.data()[static_cast<std::size_t>(i * n + j)];
        mu[static_cast<std::size_t>(i)] = s / static_cast<double>(n);
        double v = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            const double d = a.data()[static_cast<std::size_t>(i * n + j)] - mu[static_cast<std::size_t>(i)];
            v += d * d;
        }
        out[static_cast<std::size_t>(i)] = v / static_cast<double>(n);
    }
    auto ai = a.impl();
    return make_op_node({m}, std::move(out), {a}, [ai, m, n, mu](TensorImpl& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::int64_t i = 0; i < m; ++i) {
            const double g = self.grad[static_cast<std::size_t>(i)] * 2.0 / static_cast<double>(n);
            for (std::int64_t j = 0; j < n; ++j)
                ai->grad[static_cast<std::size_t>(i * n + j)] +=
                    g * (ai->data[static_cast<std::size_t>(i * n + j)] - mu[static_cast<std::size_t>(i)]);
        }
    });
}

// ---------------------------------------------------------------------------
// matrix / attention primitives
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2("matmul", a);
    require_rank2("matmul", b);
    if (a.dim(1) != b.dim(0))
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
    gemm_acc(m, n, k, a.data().data(), false, b.data().data(), false, out.data());
    auto ai = a.impl();
    auto bi = b.impl();
    return make_op_node({m, n}, std::move(out), {a, b}, [ai, bi, m, k, n](TensorImpl& self) {
        if (ai->requires_grad) {
            ai->ensure_grad();
            // dA += dC * B^T
            gemm_acc(m, k, n, self.grad.data(), false, bi->data.data(), true, ai->grad.data());
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            // dB += A^T * dC
            gemm_acc(k, n, m, ai->data.data(), true, self.grad.data(), false, bi->grad.data());
        }
    });
}

Tensor softmax_rows(const Tensor& a) {
    require_rank2("softmax_rows", a);
    const auto m = a.dim(0), n = a.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m * n));
    for (std::int64_t i = 0; i < m; ++i) {
        const double* row = a.data().data() + i * n;
        double* orow = out.data() + i * n;
        double mx = row[0];
        for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            z += orow[j];
        }
        for (std::int64_t j = 0; j < n; ++j) orow[j] /= z;
    }
    auto ai = a.impl();
    Tensor result = make_op_node({m, n}, std::move(out), {a}, [ai, m, n](TensorImpl& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        for (std::int64_t i = 0; i < m; ++i) {
            const double* y = self.data.data() + i * n;
            const double* g = self.grad.data() + i * n;
            double dot = 0.0;
            for (std::int64_t j = 0; j < n; ++j) dot += y[j] * g[j];
            for (std::int64_t j = 0; j < n; ++j)
                ai->grad[static_cast<std::size_t>(i * n + j)] += y[j] * (g[j] - dot);
        }
    });
    return result;
}

// ---------------------------------------------------------------------------
// dense-prediction primitives
// ---------------------------------------------------------------------------

namespace {

struct BilinearTap {
    std::int64_t i0, i1;
    double w0, w1;
};

// align-corners-false source coordinate with edge clamping
BilinearTap bilinear_tap(std::int64_t out_i, std::int64_t in_n, std::int64_t out_n) {
    const double src = (static_cast<double>(out_i) + 0.5) * static_cast<double>(in_n) /
                           static_cast<double>(out_n) -
                       0.5;
    double f = std::floor(src);
    double frac = src - f;
    std::int64_t i0 = static_cast<std::int64_t>(f);
    std::int64_t i1 = i0 + 1;
    i0 = std::clamp<std::int64_t>(i0, 0, in_n - 1);
    i1 = std::clamp<std::int64_t>(i1, 0, in_n - 1);
    return {i0, i1, 1.0 - frac, frac};
}

}  // namespace

Tensor bilinear_resample(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
    if (x.rank() != 3)
        throw DimensionError("bilinear_resample: expected [HxWxC], got " + shape_str(x.shape()));
    if (out_h < 1 || out_w < 1)
        throw ContractError("bilinear_resample: nonpositive target size " +
                            std::to_string(out_h) + "x" + std::to_string(out_w));
    const auto h = x.dim(0), w = x.dim(1), c = x.dim(2);
    std::vector<BilinearTap> ty(static_cast<std::size_t>(out_h)), tx(static_cast<std::size_t>(out_w));
    for (std::int64_t i = 0; i < out_h; ++i) ty[static_cast<std::size_t>(i)] = bilinear_tap(i, h, out_h);
    for (std::int64_t j = 0; j < out_w; ++j) tx[static_cast<std::size_t>(j)] = bilinear_tap(j, w, out_w);
    std::vector<double> out(static_cast<std::size_t>(out_h * out_w * c));
    const auto& xd = x.data();
    for (std::int64_t i = 0; i < out_h; ++i) {
        const auto& a = ty[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < out_w; ++j) {
            const auto& b = tx[static_cast<std::size_t>(j)];
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const double v = a.w0 * (b.w0 * xd[static_cast<std::size_t>((a.i0 * w + b.i0) * c + ch)] +
                                         b.w1 * xd[static_cast<std::size_t>((a.i0 * w + b.i1) * c + ch)]) +
                                 a.w1 * (b.w0 * xd[static_cast<std::size_t>((a.i1 * w + b.i0) * c + ch)] +
                                         b.w1 * xd[static_cast<std::size_t>((a.i1 * w + b.i1) * c + ch)]);
                out[static_cast<std::size_t>((i * out_w + j) * c + ch)] = v;
            }
        }
    }
    auto xi = x.impl();
    return make_op_node({out_h, out_w, c}, std::move(out), {x},
                        [xi, ty, tx, w, c, out_h, out_w](TensorImpl& self) {
                            if (!xi->requires_grad) return;
                            xi->ensure_grad();
                            for (std::int64_t i = 0; i < out_h; ++i) {
                                const auto& a = ty[static_cast<std::size_t>(i)];
                                for (std::int64_t j = 0; j < out_w; ++j) {
                                    const auto& b = tx[static_cast<std::size_t>(j)];
                                    for (std::int64_t ch = 0; ch < c; ++ch) {
                                        const double g =
                                            self.grad[static_cast<std::size_t>((i * out_w + j) * c + ch)];
                                        xi->grad[static_cast<std::size_t>((a.i0 * w + b.i0) * c + ch)] += a.w0 * b.w0 * g;
                                        xi->grad[static_cast<std::size_t>((a.i0 * w + b.i1) * c + ch)] += a.w0 * b.w1 * g;
                                        xi->grad[static_cast<std::size_t>((a.i1 * w + b.i0) * c + ch)] += a.w1 * b.w0 * g;
                                        xi->grad[static_cast<std::size_t>((a.i1 * w + b.i1) * c + ch)] += a.w1 * b.w1 * g;
                                    }
                                }
                            }
                        });
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::int64_t stride,
              std::int64_t padding) {
    if (x.rank() != 3)
        throw DimensionError("conv2d: expected input [HxWxCin], got " + shape_str(x.shape()));
    if (kernel.rank() != 4 || kernel.dim(0) != kernel.dim(1))
        throw DimensionError("conv2d: expected kernel [kxkxCinxCout], got " +
                             shape_str(kernel.shape()));
    if (kernel.dim(2) != x.dim(2))
        throw DimensionError("conv2d: input channels " + shape_str(x.shape()) +
                             " vs kernel " + shape_str(kernel.shape()));
    if (bias.rank() != 1 || bias.dim(0) != kernel.dim(3))
        throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " vs kernel " +
                             shape_str(kernel.shape()));
    if (stride < 1) throw ContractError("conv2d: stride must be positive");
    const auto h = x.dim(0), w = x.dim(1), cin = x.dim(2);
    const auto k = kernel.dim(0), cout = kernel.dim(3);
    const auto oh = (h + 2 * padding - k) / stride + 1;
    const auto ow = (w + 2 * padding - k) / stride + 1;
    if (oh < 1 || ow < 1)
        throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) +
                             " does not fit input " + shape_str(x.shape()));
    std::vector<double> out(static_cast<std::size_t>(oh * ow * cout));
    const auto& xd = x.data();
    const auto& kd = kernel.data();
    const auto& bd = bias.data();
    for (std::int64_t oy = 0; oy < oh; ++oy) {
        for (std::int64_t ox = 0; ox < ow; ++ox) {
            double* op = out.data() + (oy * ow + ox) * cout;
            for (std::int64_t co = 0; co < cout; ++co) op[co] = bd[static_cast<std::size_t>(co)];
            for (std::int64_t ky = 0; ky < k; ++ky) {
                const std::int64_t iy = oy * stride + ky - padding;
                if (iy < 0 || iy >= h) continue;
                for (std::int64_t kx = 0; kx < k; ++kx) {
                    const std::int64_t ix = ox * stride + kx - padding;
                    if (ix < 0 || ix >= w) continue;
                    const double* xp = xd.data() + (iy * w + ix) * cin;
                    const double* kp = kd.data() + ((ky * k + kx) * cin) * cout;
                    for (std::int64_t ci = 0; ci < cin; ++ci) {
                        const double xv = xp[ci];
                        if (xv == 0.0) continue;
                        const double* kr = kp + ci * cout;
                        for (std::int64_t co = 0; co < cout; ++co) op[co] += xv * kr[co];
                    }
                }
            }
        }
    }
    auto xi = x.impl();
    auto ki = kernel.impl();
    auto bi = bias.impl();
    return make_op_node(
        {oh, ow, cout}, std::move(out), {x, kernel, bias},
        [xi, ki, bi, h, w, cin, k, cout, oh, ow, stride, padding](TensorImpl& self) {
            const bool gx = xi->requires_grad, gk = ki->requires_grad, gb = bi->requires_grad;
            if (gx) xi->ensure_grad();
            if (gk) ki->ensure_grad();
            if (gb) bi->ensure_grad();
            for (std::int64_t oy = 0; oy < oh; ++oy) {
                for (std::int64_t ox = 0; ox < ow; ++ox) {
                    const double* gp = self.grad.data() + (oy * ow + ox) * cout;
                    if (gb)
                        for (std::int64_t co = 0; co < cout; ++co)
                            bi->grad[static_cast<std::size_t>(co)] += gp[co];
                    for (std::int64_t ky = 0; ky < k; ++ky) {
                        const std::int64_t iy = oy * stride + ky - padding;
                        if (iy < 0 || iy >= h) continue;
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            const std::int64_t ix = ox * stride + kx - padding;
                            if (ix < 0 || ix >= w) continue;
                            const std::size_t xoff = static_cast<std::size_t>((iy * w + ix) * cin);
                            const std::size_t koff = static_cast<std::size_t>(((ky * k + kx) * cin) * cout);
                            for (std::int64_t ci = 0; ci < cin; ++ci) {
                                const double xv = xi->data[xoff + static_cast<std::size_t>(ci)];
                                const double* kr = ki->data.data() + koff + ci * cout;
                                double acc = 0.0;
                                for (std::int64_t co = 0; co < cout; ++co) {
                                    const double g = gp[co];
                                    acc += g * kr[co];
                                    if (gk) ki->grad[koff + static_cast<std::size_t>(ci * cout + co)] += g * xv;
                                }
                                if (gx) xi->grad[xoff + static_cast<std::size_t>(ci)] += acc;
                            }
                        }
                    }
                }
            }
        });
}

Tensor normalize_rows(const Tensor& x, double eps) {
    require_rank2("normalize_rows", x);
    const auto m = x.dim(0), n = x.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m * n));
    std::vector<double> norms(static_cast<std::size_t>(m));
    for (std::int64_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            const double v = x.data()[static_cast<std::size_t>(i * n + j)];
            s += v * v;
        }
        const double nm = std::sqrt(s + eps);
        norms[static_cast<std::size_t>(i)] = nm;
        for (std::int64_t j = 0; j < n; ++j)
            out[static_cast<std::size_t>(i * n + j)] = x.data()[static_cast<std::size_t>(i * n + j)] / nm;
    }
    auto xi = x.impl();
    return make_op_node({m, n}, std::move(out), {x}, [xi, m, n, norms](TensorImpl& self) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        for (std::int64_t i = 0; i < m; ++i) {
            const double* y = self.data.data() + i * n;
            const double* g = self.grad.data() + i * n;
            double dot = 0.0;
            for (std::int64_t j = 0; j < n; ++j) dot += y[j] * g[j];
            const double inv = 1.0 / norms[static_cast<std::size_t>(i)];
            for (std::int64_t j = 0; j < n; ++j)
                xi->grad[static_cast<std::size_t>(i * n + j)] += inv * (g[j] - y[j] * dot);
        }
    });
}

}  // namespace mqt
