// Acceptance gate: one pass/fail line per release criterion, nonzero exit on
// any failure. Run by ctest; also usable standalone.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <vector>

#include "mqt/flops.hpp"
#include "mqt/losses.hpp"
#include "mqt/metrics.hpp"
#include "mqt/model.hpp"
#include "mqt/synth.hpp"
#include "mqt/train.hpp"

using namespace mqt;

namespace {

int failures = 0;

void report(int idx, const std::string& what, bool pass, const std::string& detail = "") {
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << idx << ": " << what;
    if (!detail.empty()) std::cout << "  (" << detail << ")";
    std::cout << "\n";
    if (!pass) ++failures;
}

void run(int idx, const std::string& what, const std::function<std::pair<bool, std::string>()>& fn) {
    try {
        const auto [ok, detail] = fn();
        report(idx, what, ok, detail);
    } catch (const std::exception& e) {
        report(idx, what, false, std::string("exception: ") + e.what());
    }
}

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

Tensor random_image(std::int64_t h, std::int64_t w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::vector<double> data(static_cast<std::size_t>(h * w * 3));
    for (auto& v : data) v = dist(rng);
    return Tensor::from_data({h, w, 3}, std::move(data));
}

void zero_suffix(MQTransformer& model, const std::string& suffix) {
    for (auto& [name, t] : model.params())
        if (name.size() >= suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
            std::fill(t.data().begin(), t.data().end(), 0.0);
}

std::vector<TaskSpec> make_tasks(std::int64_t tn) {
    const std::vector<TaskSpec> pool{{"seg", "seg", 4},
                                     {"depth", "depth", 0},
                                     {"normals", "normals", 0},
                                     {"sal", "sal", 0},
                                     {"edge", "edge", 0}};
    return {pool.begin(), pool.begin() + tn};
}

std::string make_dataset(const std::string& leaf, std::int64_t count, std::int64_t size,
                         std::uint64_t seed0) {
    const auto dir = std::filesystem::temp_directory_path() / leaf;
    std::filesystem::remove_all(dir);
    Dataset ds;
    ds.num_classes = 4;
    for (std::int64_t i = 0; i < count; ++i)
        ds.scenes.push_back(generate_scene(seed0 + static_cast<std::uint64_t>(i), size, size, 4, 2, 5));
    save_dataset(dir.string(), ds);
    return dir.string();
}

// ---- criteria ----

std::pair<bool, std::string> crit_gradcheck() {
    const double t0 = now_seconds();
    const GradcheckReport r = gradcheck(GradcheckOptions{});
    const double elapsed = now_seconds() - t0;
    double worst = 0.0;
    for (const auto& g : r.groups) worst = std::max(worst, g.max_rel_err);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max rel err %.3e over %zu groups, %.1fs", worst,
                  r.groups.size(), elapsed);
    return {r.all_pass && worst < 1e-5 && elapsed < 120.0, buf};
}

std::pair<bool, std::string> crit_local_flops() {
    FlopQuery q;
    q.c = 256;
    q.k = 9;
    q.h = q.w = 64;
    const double g64 = flops_local_context(q).gflops();
    q.h = q.w = 128;
    const double g128 = flops_local_context(q).gflops();
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.4f / %.4f GFLOPs", g64, g128);
    // agreement to 4 significant figures, i.e. within one unit in the last place
    return {std::abs(g64 - 21.74) <= 0.0105 && std::abs(g128 - 86.98) <= 0.0105, buf};
}

std::pair<bool, std::string> crit_global_flops() {
    FlopQuery q;
    q.c = 256;
    q.h = q.w = 64;
    const double g64 = flops_global_context(q).gflops();
    q.h = q.w = 128;
    const double g128 = flops_global_context(q).gflops();
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.4f / %.4f GFLOPs", g64, g128);
    return {std::abs(g64 - 9.74) / 9.74 <= 0.02 && std::abs(g128 - 142.83) / 142.83 <= 0.02, buf};
}

std::pair<bool, std::string> crit_cross_task_flops() {
    FlopQuery q;
    q.c = 256;
    q.n = 100;
    q.tn = 2;
    q.s = 2;
    q.h = q.w = 64;
    const FlopReport a = flops_cross_task(q);
    q.h = q.w = 128;
    const FlopReport b = flops_cross_task(q);
    bool identical = a.items.size() == b.items.size() && a.total() == b.total();
    for (std::size_t i = 0; identical && i < a.items.size(); ++i)
        identical = a.items[i].flops == b.items[i].flops;
    const double g = a.gflops();
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f GFLOPs, size-independent=%d", g, identical ? 1 : 0);
    return {identical && g >= 0.01 && g <= 0.05, buf};
}

std::pair<bool, std::string> crit_residual_transparency() {
    struct Cfg {
        std::int64_t s, tn, n, c, heads, depth, in;
        bool pe_v, full_dim;
    };
    const std::vector<Cfg> cases{{1, 1, 4, 8, 2, 1, 16, false, false},
                                 {2, 2, 8, 16, 4, 1, 32, false, false},
                                 {2, 3, 6, 8, 2, 2, 32, false, false},
                                 {3, 2, 4, 16, 4, 1, 32, true, false},
                                 {2, 2, 8, 16, 4, 1, 64, true, true}};
    double worst = 0.0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const Cfg& cc = cases[i];
        MQTConfig c;
        c.task_count = cc.tn;
        c.scale_count = cc.s;
        c.queries_per_bank = cc.n;
        c.channels = cc.c;
        c.num_heads = cc.heads;
        c.depth = cc.depth;
        c.in_h = c.in_w = cc.in;
        c.pe_on_value = cc.pe_v;
        c.attn_scale_full_dim = cc.full_dim;
        MQTransformer model(c, make_tasks(cc.tn), 100 + static_cast<std::uint64_t>(i));
        zero_suffix(model, ".attn.wo");
        zero_suffix(model, ".mlp.w2");
        zero_suffix(model, ".mlp.b2");
        const Tensor img = random_image(cc.in, cc.in, 200 + static_cast<std::uint64_t>(i));
        const auto full = model.forward(img);
        const auto bare = model.forward_backbone_only(img);
        for (const auto& [task, pred] : full)
            for (std::size_t j = 0; j < pred.data().size(); ++j)
                worst = std::max(worst, std::abs(pred.data()[j] - bare.at(task).data()[j]));
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "max dev %.3e over 5 configs", worst);
    return {worst <= 1e-12, buf};
}

std::pair<bool, std::string> crit_ctam_equivariance() {
    MQTConfig c;
    c.task_count = 2;
    c.scale_count = 2;
    c.queries_per_bank = 16;
    c.channels = 16;
    c.num_heads = 4;
    c.in_h = c.in_w = 32;
    MQTransformer model(c, make_tasks(2), 31);

    std::mt19937_64 rng(32);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<std::vector<Tensor>> banks(2);
    for (auto& row : banks)
        for (int t = 0; t < 2; ++t) {
            std::vector<double> d(16 * 16);
            for (auto& v : d) v = dist(rng);
            row.push_back(Tensor::from_data({16, 16}, std::move(d)));
        }
    const auto base = model.ctam(banks);

    double worst = 0.0;
    std::vector<std::size_t> perm(16);
    for (std::size_t i = 0; i < 16; ++i) perm[i] = i;
    for (int trial = 0; trial < 20; ++trial) {
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::vector<Tensor>> permuted(2);
        for (std::size_t s = 0; s < 2; ++s)
            for (std::size_t t = 0; t < 2; ++t) {
                std::vector<double> d(16 * 16);
                for (std::size_t r = 0; r < 16; ++r)
                    for (std::size_t j = 0; j < 16; ++j)
                        d[r * 16 + j] = banks[s][t].data()[perm[r] * 16 + j];
                permuted[s].push_back(Tensor::from_data({16, 16}, std::move(d)));
            }
        const auto out = model.ctam(permuted);
        for (std::size_t t = 0; t < 2; ++t)
            for (std::size_t r = 0; r < 16; ++r)
                for (std::size_t j = 0; j < 16; ++j)
                    worst = std::max(worst, std::abs(out[t].data()[r * 16 + j] -
                                                     base[t].data()[perm[r] * 16 + j]));
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "max dev %.3e over 20 permutations", worst);
    return {worst < 1e-6, buf};
}

std::pair<bool, std::string> crit_fusion_consistency() {
    MQTConfig c;
    c.task_count = 2;
    c.scale_count = 2;
    c.queries_per_bank = 4;
    c.channels = 8;
    c.num_heads = 4;
    c.in_h = c.in_w = 32;

    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    auto rand_bank = [&]() {
        std::vector<double> d(4 * 8);
        for (auto& v : d) v = dist(rng);
        return Tensor::from_data({4, 8}, std::move(d));
    };
    std::vector<std::vector<Tensor>> banks(2);
    for (auto& row : banks)
        for (int t = 0; t < 2; ++t) row.push_back(rand_bank());

    // identity refinement: zeroed attention outputs and MLP second layers
    MQTransformer ident(c, make_tasks(2), 42);
    zero_suffix(ident, ".attn.wo");
    zero_suffix(ident, ".mlp.w2");
    zero_suffix(ident, ".mlp.b2");
    const auto fused_ident = ident.ctam(banks);
    const Tensor doubled = scale(add(banks[0][0], banks[1][0]), 2.0);
    bool exact = fused_ident[0].data() == doubled.data();

    // general rule vs the literal four-term transcription on live weights
    MQTransformer model(c, make_tasks(2), 43);
    MhsaParams attn{model.param("ctam.attn.wq"), model.param("ctam.attn.wk"),
                    model.param("ctam.attn.wv"), model.param("ctam.attn.wo"), 4, false};
    LayerNormParams ln{model.param("ctam.ln.gamma"), model.param("ctam.ln.beta"), 1e-5};
    MlpParams mlp{model.param("ctam.mlp.w1"), model.param("ctam.mlp.b1"),
                  model.param("ctam.mlp.w2"), model.param("ctam.mlp.b2")};
    auto refine = [&](const Tensor& q) {
        const Tensor r = add(q, mhsa(q, q, q, attn));
        return add(r, mlp_block(layer_norm(r, ln), mlp));
    };
    const auto p1 = split_rows(refine(concat_rows({banks[0][0], banks[0][1]})), {4, 4});
    const auto p2 = split_rows(refine(concat_rows({banks[1][0], banks[1][1]})), {4, 4});
    const auto p3 = split_rows(refine(concat_rows({banks[0][0], banks[1][0]})), {4, 4});
    const auto p4 = split_rows(refine(concat_rows({banks[0][1], banks[1][1]})), {4, 4});
    const Tensor lit0 = add(add(p1[0], p2[0]), add(p3[0], p3[1]));
    const Tensor lit1 = add(add(p1[1], p2[1]), add(p4[0], p4[1]));
    const auto fused = model.ctam(banks);
    const bool bitexact = fused[0].data() == lit0.data() && fused[1].data() == lit1.data();

    return {exact && bitexact,
            std::string("identity doubling exact=") + (exact ? "1" : "0") +
                ", literal transcription bit-exact=" + (bitexact ? "1" : "0")};
}

std::pair<bool, std::string> crit_overfit() {
    const double t0 = now_seconds();
    const std::string data = make_dataset("mqt_acc_overfit", 8, 64, 42);
    RunConfig cfg;
    cfg.model.task_count = 2;
    cfg.model.scale_count = 2;
    cfg.model.queries_per_bank = 8;
    cfg.model.channels = 16;
    cfg.model.num_heads = 4;
    cfg.model.in_h = cfg.model.in_w = 64;
    cfg.tasks = {{"seg", "seg", 4}, {"depth", "depth", 0}};
    cfg.optimizer.learning_rate = 0.01;
    cfg.iterations = 1000;
    cfg.batch_size = 4;
    cfg.seed = 7;
    cfg.log_every = 0;
    cfg.data_dir = data;

    const Dataset ds = load_dataset(data);

    RunConfig initial = cfg;
    initial.iterations = 0;
    const TrainOutput init = train(initial);
    const double rmse0 =
        evaluate({cfg, 0, init.params, init.momentum}, ds).at("depth").at("rmse");

    const TrainOutput out = train(cfg);
    const MetricReport final_report = evaluate({cfg, out.step, out.params, out.momentum}, ds);
    const double miou = final_report.at("seg").at("miou");
    const double rmse = final_report.at("depth").at("rmse");
    const double elapsed = now_seconds() - t0;
    std::filesystem::remove_all(data);

    char buf[128];
    std::snprintf(buf, sizeof(buf), "miou %.3f, rmse %.4f vs 20%% of initial %.4f, %.0fs", miou,
                  rmse, 0.2 * rmse0, elapsed);
    return {miou >= 0.9 && rmse <= 0.2 * rmse0 && elapsed < 600.0, buf};
}

std::pair<bool, std::string> crit_metric_oracles() {
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    double worst = 0.0;
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
                in_gt = in_gt || gc;
                inter += pc && gc;
                uni += pc || gc;
            }
            if (!in_gt) continue;
            ++present;
            iou_sum += static_cast<double>(inter) / static_cast<double>(uni);
        }
        worst = std::max(worst, std::abs(metric_miou(pred, gt, k) - iou_sum / present));

        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = dist(rng);
            b[i] = dist(rng);
        }
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
        worst = std::max(worst,
                         std::abs(metric_rmse(a, b) - std::sqrt(sq / static_cast<double>(n))));

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
            double cv = std::min(1.0, std::max(-1.0, dot / std::sqrt(la * lb)));
            deg += std::acos(cv) * 180.0 / std::acos(-1.0);
        }
        worst = std::max(worst, std::abs(metric_merr(na, nb) - deg / static_cast<double>(n)));

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
                tp += p && bin[i];
                fp += p && !bin[i];
                fn += !p && bin[i];
            }
            const double prec = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
            const double rec = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
            if (prec + rec > 0.0) best = std::max(best, 2.0 * prec * rec / (prec + rec));
        }
        worst = std::max(worst, std::abs(metric_maxf(scores, bin) - best));
    }

    // odsF endpoints
    const std::int64_t h = 64, w = 64;
    std::vector<std::uint8_t> gt(static_cast<std::size_t>(h * w), 0);
    for (std::int64_t i = 16; i <= 48; ++i) gt[static_cast<std::size_t>(32 * w + i)] = 1;
    std::vector<double> perfect(gt.begin(), gt.end());
    std::vector<double> far(static_cast<std::size_t>(h * w), 0.0);
    for (std::int64_t i = 16; i <= 48; ++i) far[static_cast<std::size_t>(8 * w + i)] = 1.0;
    const bool ods_ok =
        metric_odsf({perfect}, {gt}, h, w) == 1.0 && metric_odsf({far}, {gt}, h, w) == 0.0;

    char buf[96];
    std::snprintf(buf, sizeof(buf), "max oracle dev %.3e, odsF endpoints ok=%d", worst,
                  ods_ok ? 1 : 0);
    return {worst < 1e-9 && ods_ok, buf};
}

std::pair<bool, std::string> crit_determinism() {
    const std::string data = make_dataset("mqt_acc_det", 3, 16, 7);
    RunConfig cfg;
    cfg.model.task_count = 2;
    cfg.model.scale_count = 2;
    cfg.model.queries_per_bank = 8;
    cfg.model.channels = 16;
    cfg.model.num_heads = 4;
    cfg.model.in_h = cfg.model.in_w = 16;
    cfg.tasks = {{"seg", "seg", 4}, {"depth", "depth", 0}};
    cfg.iterations = 6;
    cfg.batch_size = 2;
    cfg.seed = 3;
    cfg.log_every = 0;
    cfg.data_dir = data;

    const TrainOutput a = train(cfg);
    const TrainOutput b = train(cfg);
    const bool traces = a.loss_trace == b.loss_trace;

    // checkpoint roundtrip + resume equivalence
    const std::string ckpt_path =
        (std::filesystem::temp_directory_path() / "mqt_acc_det.ckpt").string();
    RunConfig half = cfg;
    half.iterations = 3;
    const TrainOutput head = train(half);
    save_checkpoint(ckpt_path, {half, head.step, head.params, head.momentum});
    const Checkpoint mid = load_checkpoint(ckpt_path);
    bool roundtrip = mid.step == head.step;
    for (const auto& [name, t] : head.params)
        roundtrip = roundtrip && mid.params.at(name).data() == t.data();
    for (const auto& [name, t] : head.momentum)
        roundtrip = roundtrip && mid.momentum.at(name).data() == t.data();
    const TrainOutput resumed = train_resume(cfg, mid);
    bool resume_exact = true;
    for (const auto& [name, t] : a.params)
        resume_exact = resume_exact && resumed.params.at(name).data() == t.data();

    // dataset write/read roundtrip
    const Dataset ds = load_dataset(data);
    const std::string copy =
        (std::filesystem::temp_directory_path() / "mqt_acc_det_copy").string();
    std::filesystem::remove_all(copy);
    save_dataset(copy, ds);
    const Dataset ds2 = load_dataset(copy);
    bool data_exact = ds.scenes.size() == ds2.scenes.size();
    for (std::size_t i = 0; data_exact && i < ds.scenes.size(); ++i)
        data_exact = ds.scenes[i].image == ds2.scenes[i].image &&
                     ds.scenes[i].seg == ds2.scenes[i].seg &&
                     ds.scenes[i].depth == ds2.scenes[i].depth &&
                     ds.scenes[i].normals == ds2.scenes[i].normals &&
                     ds.scenes[i].edge == ds2.scenes[i].edge && ds.scenes[i].sal == ds2.scenes[i].sal;

    std::filesystem::remove_all(data);
    std::filesystem::remove_all(copy);
    std::filesystem::remove(ckpt_path);

    char buf[96];
    std::snprintf(buf, sizeof(buf), "traces=%d ckpt=%d resume=%d dataset=%d", traces ? 1 : 0,
                  roundtrip ? 1 : 0, resume_exact ? 1 : 0, data_exact ? 1 : 0);
    return {traces && roundtrip && resume_exact && data_exact, buf};
}

std::pair<bool, std::string> crit_loss_composition() {
    LossWeights w;
    const double total = total_loss({{"seg", Tensor::scalar(1.0)},
                                     {"depth", Tensor::scalar(1.0)},
                                     {"normals", Tensor::scalar(1.0)},
                                     {"edge", Tensor::scalar(1.0)}},
                                    w)
                             .item();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "total %.10g", total);
    return {total == 62.0, buf};
}

}  // namespace

int main() {
    run(1, "full-model gradient check, double precision", crit_gradcheck);
    run(2, "local-context attention FLOPs match the published table", crit_local_flops);
    run(3, "global-context attention FLOPs within 2% of the published table", crit_global_flops);
    run(4, "cross-task attention FLOPs resolution-independent and in bracket",
        crit_cross_task_flops);
    run(5, "residual transparency with zeroed output projections", crit_residual_transparency);
    run(6, "cross-task attention module permutation equivariance", crit_ctam_equivariance);
    run(7, "query fusion rule consistency with the literal four-term form",
        crit_fusion_consistency);
    run(8, "overfit capability on eight synthetic scenes", crit_overfit);
    run(9, "metric implementations agree with brute-force oracles", crit_metric_oracles);
    run(10, "determinism and persistence are bit-exact", crit_determinism);
    run(11, "weighted loss composition with unit losses", crit_loss_composition);

    if (failures == 0) {
        std::cout << "all acceptance criteria passed\n";
        return 0;
    }
    std::cout << failures << " acceptance criteria FAILED\n";
    return 2;
}
