#pragma once

#include <cstdint>
#include <vector>

namespace mqt {

// Mean IoU over the classes present in the ground truth.
double metric_miou(const std::vector<std::int64_t>& pred, const std::vector<std::int64_t>& gt,
                   std::int64_t num_classes, const std::vector<std::uint8_t>& valid = {});

double metric_rmse(const std::vector<double>& pred, const std::vector<double>& gt,
                   const std::vector<std::uint8_t>& valid = {});

// Mean angular error in degrees; inputs are P x 3 interleaved vectors,
// re-normalized defensively, dot clamped to [-1, 1]. valid is per pixel.
double metric_merr(const std::vector<double>& pred, const std::vector<double>& gt,
                   const std::vector<std::uint8_t>& valid = {});

// Max F1 over 255 evenly spaced thresholds i/256, i = 1..255; predictions are
// score >= threshold. F = 0 when precision + recall = 0.
double metric_maxf(const std::vector<double>& scores, const std::vector<std::uint8_t>& gt);

// Dataset-scale F at the single best shared threshold, with greedy
// nearest-neighbor boundary matching within 0.0075 * image diagonal.
// Throws ContractError when the dataset has no ground-truth boundary pixels.
double metric_odsf(const std::vector<std::vector<double>>& score_maps,
                   const std::vector<std::vector<std::uint8_t>>& gt_maps, std::int64_t h,
                   std::int64_t w);

}  // namespace mqt
