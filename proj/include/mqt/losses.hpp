#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mqt/tensor.hpp"

namespace mqt {

struct LossWeights {
    double seg = 1.0;
    double depth = 1.0;
    double normals = 10.0;
    double edge = 50.0;
    double partseg = 2.0;
    double sal = 5.0;

    double for_kind(const std::string& kind) const;  // throws ConfigError on unknown kind
};

// Mean over valid pixels of -log softmax at the target class.
// logits [P x K]; valid empty means all pixels count.
Tensor loss_cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& targets,
                          const std::vector<std::uint8_t>& valid = {});

// Mean absolute error over valid elements.
Tensor loss_l1(const Tensor& pred, const std::vector<double>& target,
               const std::vector<std::uint8_t>& valid = {});

// Class-balanced BCE on logits: weight beta = #neg/#total on positives and
// 1-beta on negatives; degenerate all-one / all-zero targets get weight 1 on
// the class that exists. Sum normalized by valid pixel count.
Tensor loss_balanced_bce(const Tensor& logits, const std::vector<double>& targets,
                         const std::vector<std::uint8_t>& valid = {});

// Plain binary cross-entropy on logits; the two-class case of cross-entropy
// for single-channel maps (saliency).
Tensor loss_bce(const Tensor& logits, const std::vector<double>& targets,
                const std::vector<std::uint8_t>& valid = {});

// Sum of lambda_kind * loss over the configured tasks.
Tensor total_loss(const std::vector<std::pair<std::string, Tensor>>& kind_losses,
                  const LossWeights& w);

}  // namespace mqt
