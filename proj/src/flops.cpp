#include "mqt/flops.hpp"

#include "mqt/errors.hpp"

namespace mqt {

const char* const kFlopConvention =
    "1 MAC = 1 FLOP for matrix/conv products; softmax 5 ops/element; "
    "residual adds, LN, and resampling not counted";

double FlopReport::total() const {
    double t = 0.0;
    for (const auto& item : items) t += item.flops;
    return t;
}

namespace {

double d(std::int64_t v) { return static_cast<double>(v); }

void check_positive(const FlopQuery& q) {
    if (q.h < 1 || q.w < 1 || q.c < 1)
        throw ContractError("flops: feature dimensions must be positive");
}

}  // namespace

FlopReport flops_none() { return {{{"no communication", 0.0}}, kFlopConvention}; }

FlopReport flops_local_context(const FlopQuery& q) {
    check_positive(q);
    if (q.k < 1 || q.k % 2 == 0)
        throw ContractError("flops_local_context: kernel size K must be odd, got " +
                            std::to_string(q.k));
    const double hw = d(q.h) * d(q.w);
    return {{{"local window attention", hw * d(q.c) * d(q.c) * d(q.k) * d(q.k)}}, kFlopConvention};
}

FlopReport flops_global_context(const FlopQuery& q) {
    check_positive(q);
    const double hw = d(q.h) * d(q.w);
    const double c = d(q.c);
    FlopReport r;
    r.note = kFlopConvention;
    r.items.push_back({"qkv/output projections", 4.0 * hw * c * c});
    r.items.push_back({"attention products", 2.0 * hw * hw * c});
    r.items.push_back({"softmax", 5.0 * hw * hw});
    return r;
}

FlopReport flops_cross_task(const FlopQuery& q) {
    if (q.n < 0 || q.tn < 1 || q.s < 1 || q.c < 1)
        throw ContractError("flops_cross_task: bad query parameters");
    const double groups = d(q.s);            // one cross-task group per scale
    const double len = d(q.tn) * d(q.n);     // group length in query rows
    FlopReport r;
    r.note = kFlopConvention;
    r.items.push_back({"attention scores", groups * len * len * d(q.c)});
    r.items.push_back({"value mixing", groups * len * len * d(q.c)});
    r.items.push_back({"softmax", groups * 5.0 * len * len});
    return r;
}

FlopReport dispatch_flops(const FlopQuery& q) {
    if (q.scheme == "none") return flops_none();
    if (q.scheme == "global_context") return flops_global_context(q);
    if (q.scheme == "local_context") return flops_local_context(q);
    if (q.scheme == "cross_task_attention") return flops_cross_task(q);
    throw ConfigError("unknown flops scheme '" + q.scheme + "'");
}

FlopReport flops_model(const MQTConfig& config, const std::vector<TaskSpec>& tasks) {
    // depth 0 is accepted here as the degenerate backbone+heads-only model
    if (config.depth < 0 || config.channels < 1 || config.scale_count < 1 ||
        config.task_count < 1 || config.queries_per_bank < 1)
        throw ContractError("flops_model: bad configuration");
    const double c = d(config.channels);
    const double n = d(config.queries_per_bank);
    const double rc = d(config.mlp_ratio) * c;
    FlopReport r;
    r.note = kFlopConvention;

    // backbone: three 3x3 stages (strides 2, 2, 1) plus 1x1 level projections
    const double h2 = d(config.in_h) / 2.0, w2 = d(config.in_w) / 2.0;
    const double h4 = d(config.scale_h(1)), w4 = d(config.scale_w(1));
    double backbone = h2 * w2 * c * 9.0 * 3.0;     // stage0, Cin = 3
    backbone += h4 * w4 * c * 9.0 * c;             // stage1
    backbone += h4 * w4 * c * 9.0 * c;             // stage2
    backbone += (h2 * w2 + h4 * w4 + h4 * w4) * c * c;  // projections
    r.items.push_back({"backbone", backbone});

    if (config.depth == 0) {
        double heads0 = 0.0;
        for (const auto& task : tasks)
            heads0 += h4 * w4 * c * d(task_channels(task));
        r.items.push_back({"task heads", heads0});
        return r;
    }

    // encoder + query learning, once per (scale, task) pair per depth
    double encoder = 0.0, ql = 0.0;
    for (std::int64_t s = 1; s <= config.scale_count; ++s) {
        const double hw = d(config.scale_h(s)) * d(config.scale_w(s));
        double per_pair = (2.0 * n + 2.0 * hw) * c * c;  // q/o and k/v projections
        per_pair += 2.0 * n * hw * c;                    // scores + value mixing
        per_pair += 5.0 * n * hw;                        // softmax
        encoder += per_pair * d(config.task_count) * d(config.depth);
        if (config.enable_query_learning)
            ql += 2.0 * n * c * rc * d(config.task_count) * d(config.depth);
    }
    r.items.push_back({"encoder attention", encoder});
    if (config.enable_query_learning) r.items.push_back({"query learning", ql});

    if (config.enable_ctam) {
        FlopQuery cq;
        cq.c = config.channels;
        cq.n = config.queries_per_bank;
        cq.tn = config.task_count;
        cq.s = config.scale_count;
        r.items.push_back({"ctam", flops_cross_task(cq).total()});
    }

    // decoder, once per task per depth at the decode scale
    const double dhw = d(config.scale_h(config.decode_scale)) * d(config.scale_w(config.decode_scale));
    double decoder = (2.0 * dhw + 2.0 * n) * c * c;  // projections
    decoder += 2.0 * dhw * n * c;                    // scores + value mixing
    decoder += 5.0 * dhw * n;                        // softmax
    decoder += 2.0 * dhw * c * rc;                   // MLP
    r.items.push_back({"decoder", decoder * d(config.task_count) * d(config.depth)});

    double heads = 0.0;
    for (const auto& task : tasks) heads += dhw * c * d(task_channels(task));
    r.items.push_back({"task heads", heads});
    return r;
}

}  // namespace mqt
