#include "mqt/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "mqt/errors.hpp"

namespace mqt {

namespace {

bool is_valid(const std::vector<std::uint8_t>& valid, std::size_t i) {
    return valid.empty() || valid[i] != 0;
}

constexpr double kRadToDeg = 57.29577951308232;

}  // namespace

double metric_miou(const std::vector<std::int64_t>& pred, const std::vector<std::int64_t>& gt,
                   std::int64_t num_classes, const std::vector<std::uint8_t>& valid) {
    if (pred.size() != gt.size())
        throw DimensionError("metric_miou: size mismatch " + std::to_string(pred.size()) + " vs " +
                             std::to_string(gt.size()));
    std::vector<std::int64_t> inter(static_cast<std::size_t>(num_classes), 0);
    std::vector<std::int64_t> pred_count(static_cast<std::size_t>(num_classes), 0);
    std::vector<std::int64_t> gt_count(static_cast<std::size_t>(num_classes), 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!is_valid(valid, i)) continue;
        const auto p = pred[i], g = gt[i];
        if (p < 0 || p >= num_classes || g < 0 || g >= num_classes)
            throw ContractError("metric_miou: class index out of range");
        ++pred_count[static_cast<std::size_t>(p)];
        ++gt_count[static_cast<std::size_t>(g)];
        if (p == g) ++inter[static_cast<std::size_t>(p)];
    }
    double sum = 0.0;
    std::int64_t present = 0;
    for (std::int64_t c = 0; c < num_classes; ++c) {
        const auto cs = static_cast<std::size_t>(c);
        if (gt_count[cs] == 0) continue;  // class absent in gt excluded from the mean
        const auto uni = pred_count[cs] + gt_count[cs] - inter[cs];
        sum += static_cast<double>(inter[cs]) / static_cast<double>(uni);
        ++present;
    }
    return present > 0 ? sum / static_cast<double>(present) : 0.0;
}

double metric_rmse(const std::vector<double>& pred, const std::vector<double>& gt,
                   const std::vector<std::uint8_t>& valid) {
    if (pred.size() != gt.size())
        throw DimensionError("metric_rmse: size mismatch " + std::to_string(pred.size()) + " vs " +
                             std::to_string(gt.size()));
    double sum = 0.0;
    std::int64_t count = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!is_valid(valid, i)) continue;
        const double d = pred[i] - gt[i];
        sum += d * d;
        ++count;
    }
    return count > 0 ? std::sqrt(sum / static_cast<double>(count)) : 0.0;
}

double metric_merr(const std::vector<double>& pred, const std::vector<double>& gt,
                   const std::vector<std::uint8_t>& valid) {
    if (pred.size() != gt.size() || pred.size() % 3 != 0)
        throw DimensionError("metric_merr: expected matching P x 3 vector fields");
    const std::size_t pixels = pred.size() / 3;
    double sum = 0.0;
    std::int64_t count = 0;
    for (std::size_t i = 0; i < pixels; ++i) {
        if (!is_valid(valid, i)) continue;
        double np = 0.0, ng = 0.0, dot = 0.0;
        for (int j = 0; j < 3; ++j) {
            np += pred[3 * i + j] * pred[3 * i + j];
            ng += gt[3 * i + j] * gt[3 * i + j];
            dot += pred[3 * i + j] * gt[3 * i + j];
        }
        np = std::sqrt(np);
        ng = std::sqrt(ng);
        if (np > 0.0 && ng > 0.0) dot /= (np * ng);
        dot = std::clamp(dot, -1.0, 1.0);
        sum += std::acos(dot) * kRadToDeg;
        ++count;
    }
    return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

double metric_maxf(const std::vector<double>& scores, const std::vector<std::uint8_t>& gt) {
    if (scores.size() != gt.size())
        throw DimensionError("metric_maxf: size mismatch " + std::to_string(scores.size()) +
                             " vs " + std::to_string(gt.size()));
    std::int64_t total_pos = 0;
    for (auto g : gt) total_pos += g != 0;
    double best = 0.0;
    for (int i = 1; i <= 255; ++i) {
        const double thr = static_cast<double>(i) / 256.0;
        std::int64_t tp = 0, fp = 0;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (scores[j] >= thr) (gt[j] != 0 ? tp : fp)++;
        }
        if (tp + fp == 0) continue;
        const double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double rec = total_pos > 0 ? static_cast<double>(tp) / static_cast<double>(total_pos) : 0.0;
        if (prec + rec > 0.0) best = std::max(best, 2.0 * prec * rec / (prec + rec));
    }
    return best;
}

double metric_odsf(const std::vector<std::vector<double>>& score_maps,
                   const std::vector<std::vector<std::uint8_t>>& gt_maps, std::int64_t h,
                   std::int64_t w) {
    if (score_maps.size() != gt_maps.size())
        throw DimensionError("metric_odsf: dataset size mismatch");
    const std::size_t pixels = static_cast<std::size_t>(h * w);
    std::int64_t total_gt = 0;
    for (const auto& g : gt_maps) {
        if (g.size() != pixels) throw DimensionError("metric_odsf: gt map size mismatch");
        for (auto v : g) total_gt += v != 0;
    }
    if (total_gt == 0) throw ContractError("metric_odsf: no ground-truth boundary pixels in dataset");

    const double tau = 0.0075 * std::sqrt(static_cast<double>(h * h + w * w));
    const std::int64_t win = static_cast<std::int64_t>(std::floor(tau));

    double best = 0.0;
    for (int i = 1; i <= 255; ++i) {
        const double thr = static_cast<double>(i) / 256.0;
        std::int64_t total_pred = 0, matched = 0;
        for (std::size_t img = 0; img < score_maps.size(); ++img) {
            const auto& sc = score_maps[img];
            if (sc.size() != pixels) throw DimensionError("metric_odsf: score map size mismatch");
            const auto& gm = gt_maps[img];
            std::vector<std::uint8_t> taken(pixels, 0);
            for (std::int64_t y = 0; y < h; ++y) {
                for (std::int64_t x = 0; x < w; ++x) {
                    if (sc[static_cast<std::size_t>(y * w + x)] < thr) continue;
                    ++total_pred;
                    // greedy nearest unmatched gt pixel within tau
                    double best_d = tau + 1.0;
                    std::int64_t best_idx = -1;
                    for (std::int64_t dy = -win; dy <= win; ++dy) {
                        const std::int64_t gy = y + dy;
                        if (gy < 0 || gy >= h) continue;
                        for (std::int64_t dx = -win; dx <= win; ++dx) {
                            const std::int64_t gx = x + dx;
                            if (gx < 0 || gx >= w) continue;
                            const auto gi = static_cast<std::size_t>(gy * w + gx);
                            if (gm[gi] == 0 || taken[gi]) continue;
                            const double d = std::sqrt(static_cast<double>(dy * dy + dx * dx));
                            if (d <= tau && d < best_d) {
                                best_d = d;
                                best_idx = static_cast<std::int64_t>(gi);
                            }
                        }
                    }
                    if (best_idx >= 0) {
                        taken[static_cast<std::size_t>(best_idx)] = 1;
                        ++matched;
                    }
                }
            }
        }
        if (total_pred == 0) continue;
        const double prec = static_cast<double>(matched) / static_cast<double>(total_pred);
        const double rec = static_cast<double>(matched) / static_cast<double>(total_gt);
        if (prec + rec > 0.0) best = std::max(best, 2.0 * prec * rec / (prec + rec));
    }
    return best;
}

}  // namespace mqt
