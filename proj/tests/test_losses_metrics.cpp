#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mqt/losses.hpp"
#include "mqt/metrics.hpp"

using namespace mqt;

namespace {

double fd_check_scalar_loss(const std::function<Tensor()>& build, Tensor& leaf) {
    leaf.zero_grad();
    build().backward();
    const auto analytic = leaf.grad();
    double worst = 0.0;
    for (std::size_t i = 0; i < leaf.data().size(); ++i) {
        const double orig = leaf.data()[i];
        const double h = 1e-5 * std::max(1.0, std::abs(orig));
        leaf.data()[i] = orig + h;
        const double fp = build().item();
        leaf.data()[i] = orig - h;
        const double fm = build().item();
        leaf.data()[i] = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        worst = std::max(worst, std::abs(analytic[i] - numeric) /
                                    std::max({1.0, std::abs(analytic[i]), std::abs(numeric)}));
    }
    return worst;
}

}  // namespace

TEST_CASE("cross entropy closed forms") {
    // confident correct predictions
    Tensor good = Tensor::from_data({2, 3}, {30, 0, 0, 0, 30, 0});
    CHECK(loss_cross_entropy(good, {0, 1}).item() < 1e-3);

    // uniform logits over K classes
    for (std::int64_t k : {2, 3, 7}) {
        Tensor uniform = Tensor::zeros({4, k});
        CHECK(loss_cross_entropy(uniform, {0, 1 % k, 0, (k - 1)}).item() ==
              doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-14));
    }

    // hand-computed 2-pixel 2-class case
    Tensor logits = Tensor::from_data({2, 2}, {1.0, 0.0, 0.5, 1.5});
    const double l0 = std::log(1.0 + std::exp(-1.0));        // target 0, margin 1
    const double l1 = std::log(1.0 + std::exp(0.5 - 1.5));   // target 1, margin 1
    CHECK(loss_cross_entropy(logits, {0, 1}).item() ==
          doctest::Approx(0.5 * (l0 + l1)).epsilon(1e-14));

    CHECK_THROWS_AS(loss_cross_entropy(logits, {0, 2}), ContractError);
    CHECK_THROWS_AS(loss_cross_entropy(logits, {0}), DimensionError);
}

TEST_CASE("cross entropy respects the ignore mask") {
    Tensor logits = Tensor::from_data({2, 2}, {5.0, 0.0, 0.0, 0.0});
    const double masked = loss_cross_entropy(logits, {0, 0}, {1, 0}).item();
    CHECK(masked == doctest::Approx(std::log(1.0 + std::exp(-5.0))).epsilon(1e-14));
}

TEST_CASE("l1 loss closed forms") {
    Tensor same = Tensor::from_data({3}, {1.0, -2.0, 0.5});
    CHECK(loss_l1(same, {1.0, -2.0, 0.5}).item() == 0.0);

    Tensor pred = Tensor::from_data({2}, {1.0, 2.0});
    CHECK(loss_l1(pred, {1.0, 4.0}).item() == doctest::Approx(1.0).epsilon(1e-14));

    std::mt19937_64 rng(30);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    std::vector<double> p(40), t(40);
    for (std::size_t i = 0; i < 40; ++i) {
        p[i] = dist(rng);
        t[i] = dist(rng);
    }
    double brute = 0.0;
    for (std::size_t i = 0; i < 40; ++i) brute += std::abs(p[i] - t[i]);
    brute /= 40.0;
    CHECK(loss_l1(Tensor::from_data({40}, p), t).item() == doctest::Approx(brute).epsilon(1e-14));
}

TEST_CASE("balanced bce closed forms and degenerate targets") {
    Tensor confident = Tensor::from_data({4}, {20.0, -20.0, 20.0, -20.0});
    CHECK(loss_balanced_bce(confident, {1, 0, 1, 0}).item() < 1e-3);

    // all-negative target with zero logits: the negative branch gets weight 1
    Tensor zeros = Tensor::zeros({6});
    CHECK(loss_balanced_bce(zeros, {0, 0, 0, 0, 0, 0}).item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(loss_balanced_bce(zeros, {1, 1, 1, 1, 1, 1}).item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));

    // 4-pixel mixed case: 1 positive, 3 negatives; beta = 3/4
    Tensor mixed = Tensor::from_data({4}, {0.5, -0.25, 1.0, 0.0});
    auto softplus = [](double z) { return std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0); };
    const double expected =
        (0.75 * softplus(-0.5) + 0.25 * softplus(-0.25) + 0.25 * softplus(1.0) +
         0.25 * softplus(0.0)) /
        4.0;
    CHECK(loss_balanced_bce(mixed, {1, 0, 0, 0}).item() == doctest::Approx(expected).epsilon(1e-14));

    CHECK_THROWS_AS(loss_balanced_bce(mixed, {0.5, 0, 0, 0}), ContractError);
}

TEST_CASE("plain bce matches the two-class cross entropy") {
    Tensor logits = Tensor::from_data({3}, {0.7, -1.2, 0.1});
    const std::vector<double> targets{1, 0, 1};
    // two-class CE with logits [z, 0] equals BCE on z
    Tensor two = Tensor::from_data({3, 2}, {0.7, 0.0, -1.2, 0.0, 0.1, 0.0});
    CHECK(loss_bce(logits, targets).item() ==
          doctest::Approx(loss_cross_entropy(two, {0, 1, 0}).item()).epsilon(1e-14));
}

TEST_CASE("loss gradients match finite differences") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> dist(-1.5, 1.5);
    std::vector<double> data(24);
    for (auto& v : data) v = dist(rng);

    SUBCASE("cross entropy") {
        Tensor logits = Tensor::from_data({8, 3}, data, true);
        auto build = [&]() { return loss_cross_entropy(logits, {0, 1, 2, 0, 1, 2, 0, 1}); };
        CHECK(fd_check_scalar_loss(build, logits) < 1e-8);
    }
    SUBCASE("balanced bce") {
        Tensor logits = Tensor::from_data({24}, data, true);
        std::vector<double> targets(24);
        for (std::size_t i = 0; i < 24; ++i) targets[i] = i % 3 == 0 ? 1.0 : 0.0;
        auto build = [&]() { return loss_balanced_bce(logits, targets); };
        CHECK(fd_check_scalar_loss(build, logits) < 1e-8);
    }
    SUBCASE("l1 away from kinks") {
        Tensor pred = Tensor::from_data({24}, data, true);
        std::vector<double> targets(24, 5.0);  // all differences far from zero
        auto build = [&]() { return loss_l1(pred, targets); };
        CHECK(fd_check_scalar_loss(build, pred) < 1e-8);
    }
}

TEST_CASE("total loss composition") {
    LossWeights w;
    CHECK(total_loss({{"seg", Tensor::scalar(0.7)}}, w).item() == doctest::Approx(0.7));
    CHECK(total_loss({}, w).item() == 0.0);

    const std::vector<std::pair<std::string, Tensor>> unit{{"seg", Tensor::scalar(1.0)},
                                                           {"depth", Tensor::scalar(1.0)},
                                                           {"normals", Tensor::scalar(1.0)},
                                                           {"edge", Tensor::scalar(1.0)}};
    CHECK(total_loss(unit, w).item() == 62.0);

    // linear in each weight
    LossWeights doubled = w;
    doubled.edge *= 2.0;
    CHECK(total_loss(unit, doubled).item() - total_loss(unit, w).item() ==
          doctest::Approx(w.edge).epsilon(1e-14));

    CHECK_THROWS_AS(w.for_kind("pose"), ConfigError);
}

TEST_CASE("miou closed forms") {
    CHECK(metric_miou({0, 1, 2, 1}, {0, 1, 2, 1}, 3) == 1.0);
    CHECK(metric_miou({0, 0, 1, 1}, {0, 1, 1, 1}, 2) ==
          doctest::Approx((0.5 + 2.0 / 3.0) / 2.0).epsilon(1e-14));
    // disjoint predictions
    CHECK(metric_miou({1, 1}, {0, 0}, 2) == 0.0);
    // classes absent from gt are excluded from the mean
    CHECK(metric_miou({0, 0}, {0, 0}, 5) == 1.0);
}

TEST_CASE("rmse and mean angular error closed forms") {
    CHECK(metric_rmse({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(metric_rmse({1, 2}, {1, 4}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));

    CHECK(metric_merr({0, 0, 1, 0, 1, 0}, {0, 0, 1, 0, 1, 0}) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(metric_merr({1, 0, 0, 0, 0, 1}, {0, 1, 0, 0, 1, 0}) ==
          doctest::Approx(90.0).epsilon(1e-12));
    // antiparallel: clamped dot gives exactly 180
    CHECK(metric_merr({0, 0, 1}, {0, 0, -1}) == doctest::Approx(180.0).epsilon(1e-12));
}

TEST_CASE("maxF closed forms") {
    CHECK(metric_maxf({1, 0, 1, 0}, {1, 0, 1, 0}) == 1.0);
    CHECK(metric_maxf({0.2, 0.3}, {0, 0}) == 0.0);
    // constant 0.5 scores, half-positive gt: thresholds at or below 0.5 predict
    // everything -> precision 1/2, recall 1, F = 2/3; above 0.5 predict nothing
    CHECK(metric_maxf({0.5, 0.5, 0.5, 0.5}, {1, 1, 0, 0}) ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("metrics agree with brute-force reimplementations on random inputs") {
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 16 + rng() % 48;
        const std::int64_t k = 2 + static_cast<std::int64_t>(rng() % 4);
        std::vector<std::int64_t> pred(n), gt(n);
        for (auto& v : pred) v = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(k));
        for (auto& v : gt) v = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(k));

        double iou_sum = 0.0;
        int present = 0;
        for (std::int64_t c = 0; c < k; ++c) {
            std::size_t inter = 0, uni = 0;
            bool in_gt = false;
            for (std::size_t i = 0; i < n; ++i) {
                const bool pc = pred[i] == c, gc = gt[i] == c;
                if (gc) in_gt = true;
                if (pc && gc) ++inter;
                if (pc || gc) ++uni;
            }
            if (!in_gt) continue;
            ++present;
            iou_sum += static_cast<double>(inter) / static_cast<double>(uni);
        }
        CHECK(metric_miou(pred, gt, k) == doctest::Approx(iou_sum / present).epsilon(1e-9));

        std::uniform_real_distribution<double> dist(-2.0, 2.0);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = dist(rng);
            b[i] = dist(rng);
        }
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
        CHECK(metric_rmse(a, b) ==
              doctest::Approx(std::sqrt(sq / static_cast<double>(n))).epsilon(1e-9));

        std::vector<double> na(n * 3), nb(n * 3);
        for (auto& v : na) v = dist(rng) + 0.01;
        for (auto& v : nb) v = dist(rng) + 0.01;
        double deg = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double la = 0, lb = 0, dot = 0;
            for (int j = 0; j < 3; ++j) {
                la += na[i * 3 + j] * na[i * 3 + j];
                lb += nb[i * 3 + j] * nb[i * 3 + j];
                dot += na[i * 3 + j] * nb[i * 3 + j];
            }
            double c = dot / std::sqrt(la * lb);
            c = std::min(1.0, std::max(-1.0, c));
            deg += std::acos(c) * 180.0 / std::acos(-1.0);
        }
        CHECK(metric_merr(na, nb) == doctest::Approx(deg / static_cast<double>(n)).epsilon(1e-9));

        std::vector<double> scores(n);
        std::vector<std::uint8_t> bin(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = (dist(rng) + 2.0) / 4.0;
            bin[i] = rng() % 2;
        }
        double best = 0.0;
        for (int th = 1; th <= 255; ++th) {
            const double tau = static_cast<double>(th) / 256.0;
            std::size_t tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const bool p = scores[i] >= tau;
                if (p && bin[i]) ++tp;
                if (p && !bin[i]) ++fp;
                if (!p && bin[i]) ++fn;
            }
            const double prec = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
            const double rec = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
            if (prec + rec > 0.0) best = std::max(best, 2.0 * prec * rec / (prec + rec));
        }
        CHECK(metric_maxf(scores, bin) == doctest::Approx(best).epsilon(1e-9));
    }
}

TEST_CASE("metrics are invariant to joint pixel permutation") {
    std::mt19937_64 rng(33);
    const std::size_t n = 64;
    std::vector<std::int64_t> pred(n), gt(n);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) {
        pred[i] = static_cast<std::int64_t>(rng() % 3);
        gt[i] = static_cast<std::int64_t>(rng() % 3);
        perm[i] = i;
    }
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::int64_t> pred_p(n), gt_p(n);
    for (std::size_t i = 0; i < n; ++i) {
        pred_p[i] = pred[perm[i]];
        gt_p[i] = gt[perm[i]];
    }
    CHECK(metric_miou(pred, gt, 3) == metric_miou(pred_p, gt_p, 3));
}

TEST_CASE("odsF endpoints") {
    const std::int64_t h = 128, w = 128;
    // a hollow square boundary
    std::vector<std::uint8_t> gt(static_cast<std::size_t>(h * w), 0);
    for (std::int64_t i = 30; i <= 90; ++i) {
        gt[static_cast<std::size_t>(30 * w + i)] = 1;
        gt[static_cast<std::size_t>(90 * w + i)] = 1;
        gt[static_cast<std::size_t>(i * w + 30)] = 1;
        gt[static_cast<std::size_t>(i * w + 90)] = 1;
    }
    std::vector<double> perfect(gt.begin(), gt.end());
    CHECK(metric_odsf({perfect}, {gt}, h, w) == 1.0);

    // tolerance is 0.0075 * diagonal ~= 1.36 pixels: a segment shifted by one
    // pixel perpendicular to its direction still matches every boundary pixel
    std::vector<std::uint8_t> line(static_cast<std::size_t>(h * w), 0);
    std::vector<double> line_shift(static_cast<std::size_t>(h * w), 0.0);
    for (std::int64_t x = 30; x <= 90; ++x) {
        line[static_cast<std::size_t>(60 * w + x)] = 1;
        line_shift[static_cast<std::size_t>(61 * w + x)] = 1.0;
    }
    CHECK(metric_odsf({line_shift}, {line}, h, w) == 1.0);

    // a far-away shift matches nothing
    std::vector<double> far(static_cast<std::size_t>(h * w), 0.0);
    for (std::int64_t i = 100; i <= 120; ++i) far[static_cast<std::size_t>(5 * w + i)] = 1.0;
    CHECK(metric_odsf({far}, {gt}, h, w) == 0.0);

    std::vector<std::uint8_t> empty(static_cast<std::size_t>(h * w), 0);
    CHECK_THROWS_AS(metric_odsf({perfect}, {empty}, h, w), ContractError);
}
