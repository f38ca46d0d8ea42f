#include "mqt/losses.hpp"

#include <algorithm>
#include <cmath>

namespace mqt {

double LossWeights::for_kind(const std::string& kind) const {
    if (kind == "seg") return seg;
    if (kind == "depth") return depth;
    if (kind == "normals") return normals;
    if (kind == "edge") return edge;
    if (kind == "partseg") return partseg;
    if (kind == "sal") return sal;
    throw ConfigError("no loss weight for task kind '" + kind + "'");
}

namespace {

void check_valid_mask(const char* op, std::size_t n, const std::vector<std::uint8_t>& valid) {
    if (!valid.empty() && valid.size() != n)
        throw DimensionError(std::string(op) + ": mask length " + std::to_string(valid.size()) +
                             " vs " + std::to_string(n) + " elements");
}

bool is_valid(const std::vector<std::uint8_t>& valid, std::size_t i) {
    return valid.empty() || valid[i] != 0;
}

}  // namespace

Tensor loss_cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& targets,
                          const std::vector<std::uint8_t>& valid) {
    if (logits.rank() != 2)
        throw DimensionError("loss_cross_entropy: expected [P x K] logits, got " +
                             shape_str(logits.shape()));
    const auto p = logits.dim(0), k = logits.dim(1);
    if (static_cast<std::int64_t>(targets.size()) != p)
        throw DimensionError("loss_cross_entropy: " + std::to_string(targets.size()) +
                             " targets vs " + std::to_string(p) + " pixels");
    check_valid_mask("loss_cross_entropy", targets.size(), valid);

    double total = 0.0;
    std::int64_t count = 0;
    std::vector<double> probs(static_cast<std::size_t>(p * k), 0.0);
    for (std::int64_t i = 0; i < p; ++i) {
        if (!is_valid(valid, static_cast<std::size_t>(i))) continue;
        const auto tgt = targets[static_cast<std::size_t>(i)];
        if (tgt < 0 || tgt >= k)
            throw ContractError("loss_cross_entropy: class index " + std::to_string(tgt) +
                                " out of range [0, " + std::to_string(k) + ")");
        const double* row = logits.data().data() + i * k;
        double mx = row[0];
        for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::int64_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
        for (std::int64_t j = 0; j < k; ++j)
            probs[static_cast<std::size_t>(i * k + j)] = std::exp(row[j] - mx) / z;
        total += std::log(z) - (row[tgt] - mx);
        ++count;
    }
    const double loss = count > 0 ? total / static_cast<double>(count) : 0.0;
    auto li = logits.impl();
    return make_op_node({1}, {loss}, {logits},
                        [li, targets, valid, probs, p, k, count](TensorImpl& self) {
                            if (!li->requires_grad || count == 0) return;
                            li->ensure_grad();
                            const double g = self.grad[0] / static_cast<double>(count);
                            for (std::int64_t i = 0; i < p; ++i) {
                                if (!is_valid(valid, static_cast<std::size_t>(i))) continue;
                                const auto tgt = targets[static_cast<std::size_t>(i)];
                                for (std::int64_t j = 0; j < k; ++j) {
                                    double d = probs[static_cast<std::size_t>(i * k + j)];
                                    if (j == tgt) d -= 1.0;
                                    li->grad[static_cast<std::size_t>(i * k + j)] += g * d;
                                }
                            }
                        });
}

Tensor loss_l1(const Tensor& pred, const std::vector<double>& target,
               const std::vector<std::uint8_t>& valid) {
    if (pred.data().size() != target.size())
        throw DimensionError("loss_l1: prediction has " + std::to_string(pred.data().size()) +
                             " elements vs target " + std::to_string(target.size()));
    check_valid_mask("loss_l1", target.size(), valid);
    double total = 0.0;
    std::int64_t count = 0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (!is_valid(valid, i)) continue;
        total += std::abs(pred.data()[i] - target[i]);
        ++count;
    }
    const double loss = count > 0 ? total / static_cast<double>(count) : 0.0;
    auto pi = pred.impl();
    return make_op_node({1}, {loss}, {pred}, [pi, target, valid, count](TensorImpl& self) {
        if (!pi->requires_grad || count == 0) return;
        pi->ensure_grad();
        const double g = self.grad[0] / static_cast<double>(count);
        for (std::size_t i = 0; i < target.size(); ++i) {
            if (!is_valid(valid, i)) continue;
            const double d = pi->data[i] - target[i];
            pi->grad[i] += d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
        }
    });
}

Tensor loss_balanced_bce(const Tensor& logits, const std::vector<double>& targets,
                         const std::vector<std::uint8_t>& valid) {
    if (logits.data().size() != targets.size())
        throw DimensionError("loss_balanced_bce: " + std::to_string(logits.data().size()) +
                             " logits vs " + std::to_string(targets.size()) + " targets");
    check_valid_mask("loss_balanced_bce", targets.size(), valid);
    std::int64_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (!is_valid(valid, i)) continue;
        if (targets[i] != 0.0 && targets[i] != 1.0)
            throw ContractError("loss_balanced_bce: targets must be binary");
        (targets[i] == 1.0 ? pos : neg)++;
    }
    const std::int64_t count = pos + neg;
    double w_pos, w_neg;
    if (count == 0) {
        w_pos = w_neg = 0.0;
    } else if (pos == 0) {
        w_pos = 0.0;
        w_neg = 1.0;
    } else if (neg == 0) {
        w_pos = 1.0;
        w_neg = 0.0;
    } else {
        w_pos = static_cast<double>(neg) / static_cast<double>(count);
        w_neg = 1.0 - w_pos;
    }

    // numerically safe: -log sigmoid(z) = softplus(-z)
    auto softplus = [](double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); };
    double total = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (!is_valid(valid, i)) continue;
        const double z = logits.data()[i];
        total += targets[i] == 1.0 ? w_pos * softplus(-z) : w_neg * softplus(z);
    }
    const double loss = count > 0 ? total / static_cast<double>(count) : 0.0;
    auto li = logits.impl();
    return make_op_node({1}, {loss}, {logits},
                        [li, targets, valid, w_pos, w_neg, count](TensorImpl& self) {
                            if (!li->requires_grad || count == 0) return;
                            li->ensure_grad();
                            const double g = self.grad[0] / static_cast<double>(count);
                            for (std::size_t i = 0; i < targets.size(); ++i) {
                                if (!is_valid(valid, i)) continue;
                                const double s = 1.0 / (1.0 + std::exp(-li->data[i]));
                                const double w = targets[i] == 1.0 ? w_pos : w_neg;
                                li->grad[i] += g * w * (s - targets[i]);
                            }
                        });
}

Tensor loss_bce(const Tensor& logits, const std::vector<double>& targets,
                const std::vector<std::uint8_t>& valid) {
    if (logits.data().size() != targets.size())
        throw DimensionError("loss_bce: " + std::to_string(logits.data().size()) + " logits vs " +
                             std::to_string(targets.size()) + " targets");
    check_valid_mask("loss_bce", targets.size(), valid);
    auto softplus = [](double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); };
    double total = 0.0;
    std::int64_t count = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (!is_valid(valid, i)) continue;
        if (targets[i] != 0.0 && targets[i] != 1.0)
            throw ContractError("loss_bce: targets must be binary");
        const double z = logits.data()[i];
        total += targets[i] == 1.0 ? softplus(-z) : softplus(z);
        ++count;
    }
    const double loss = count > 0 ? total / static_cast<double>(count) : 0.0;
    auto li = logits.impl();
    return make_op_node({1}, {loss}, {logits}, [li, targets, valid, count](TensorImpl& self) {
        if (!li->requires_grad || count == 0) return;
        li->ensure_grad();
        const double g = self.grad[0] / static_cast<double>(count);
        for (std::size_t i = 0; i < targets.size(); ++i) {
            if (!is_valid(valid, i)) continue;
            const double s = 1.0 / (1.0 + std::exp(-li->data[i]));
            li->grad[i] += g * (s - targets[i]);
        }
    });
}

Tensor total_loss(const std::vector<std::pair<std::string, Tensor>>& kind_losses,
                  const LossWeights& w) {
    Tensor acc = Tensor::scalar(0.0);
    for (const auto& [kind, loss] : kind_losses)
        acc = add(acc, scale(loss, w.for_kind(kind)));
    return acc;
}

}  // namespace mqt
