#include "mqt/model.hpp"

#include <cmath>

namespace mqt {

void MQTConfig::validate() const {
    if (task_count < 1) throw ConfigError("task_count must be >= 1");
    if (scale_count < 1) throw ConfigError("scale_count must be >= 1");
    if (queries_per_bank < 1) throw ConfigError("queries_per_bank must be >= 1");
    if (channels < 1) throw ConfigError("channels must be >= 1");
    if (depth < 1) throw ConfigError("depth must be >= 1");
    if (num_heads < 1 || channels % num_heads != 0)
        throw ConfigError("num_heads must divide channels (" + std::to_string(num_heads) +
                          " vs " + std::to_string(channels) + ")");
    if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1");
    if (decode_scale < 1 || decode_scale > scale_count)
        throw ConfigError("decode_scale out of range");
    const std::int64_t mult = (std::int64_t{4} << (scale_count - 1));
    if (in_h < mult || in_w < mult || in_h % mult != 0 || in_w % mult != 0)
        throw ContractError("input size " + std::to_string(in_h) + "x" + std::to_string(in_w) +
                            " must be a positive multiple of " + std::to_string(mult));
}

std::int64_t task_channels(const TaskSpec& task) {
    if (task.kind == "seg" || task.kind == "partseg") {
        if (task.classes < 2) throw ConfigError("task " + task.name + ": classes must be >= 2");
        return task.classes;
    }
    if (task.kind == "depth" || task.kind == "edge" || task.kind == "sal") return 1;
    if (task.kind == "normals") return 3;
    throw ConfigError("unknown task kind '" + task.kind + "' for task " + task.name);
}

MQTransformer::MQTransformer(MQTConfig config, std::vector<TaskSpec> tasks, std::uint64_t seed)
    : config_(config), tasks_(std::move(tasks)) {
    config_.validate();
    if (static_cast<std::int64_t>(tasks_.size()) != config_.task_count)
        throw ConfigError("task list length " + std::to_string(tasks_.size()) +
                          " does not match task_count " + std::to_string(config_.task_count));
    for (const auto& t : tasks_) task_channels(t);  // validate kinds up front
    init_params(seed);
}

MQTransformer::MQTransformer(MQTConfig config, std::vector<TaskSpec> tasks,
                             std::map<std::string, Tensor> params)
    : config_(config), tasks_(std::move(tasks)), params_(std::move(params)) {
    config_.validate();
    if (static_cast<std::int64_t>(tasks_.size()) != config_.task_count)
        throw ConfigError("task list length does not match task_count");
    for (auto& [name, t] : params_) {
        t.set_requires_grad(true);
        t.set_name(name);
    }
}

std::string MQTransformer::encoder_prefix(std::int64_t s, std::int64_t t,
                                          std::int64_t depth_idx) const {
    if (config_.share_encoder) return "encoder.d" + std::to_string(depth_idx);
    return "encoder.s" + std::to_string(s) + ".t" + std::to_string(t) + ".d" +
           std::to_string(depth_idx);
}

std::string MQTransformer::ql_prefix(std::int64_t s, std::int64_t t, std::int64_t depth_idx) const {
    if (config_.share_encoder) return "ql.d" + std::to_string(depth_idx);
    return "ql.s" + std::to_string(s) + ".t" + std::to_string(t) + ".d" + std::to_string(depth_idx);
}

std::string MQTransformer::decoder_prefix(std::int64_t t, std::int64_t depth_idx) const {
    if (config_.share_decoder) return "decoder.d" + std::to_string(depth_idx);
    return "decoder.t" + std::to_string(t) + ".d" + std::to_string(depth_idx);
}

void MQTransformer::init_params(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto c = config_.channels;
    const auto n = config_.queries_per_bank;
    const auto rc = config_.mlp_ratio * c;

    auto put = [&](const std::string& name, Tensor t) {
        t.set_requires_grad(true);
        t.set_name(name);
        params_.emplace(name, std::move(t));
    };
    auto put_xavier = [&](const std::string& name, Shape shape) {
        put(name, xavier_tensor(std::move(shape), rng));
    };
    auto put_zeros = [&](const std::string& name, Shape shape) {
        put(name, Tensor::zeros(std::move(shape)));
    };
    auto put_ln = [&](const std::string& prefix) {
        put(prefix + ".gamma", Tensor::full({c}, 1.0));
        put_zeros(prefix + ".beta", {c});
    };
    auto put_attn = [&](const std::string& prefix) {
        put_xavier(prefix + ".wq", {c, c});
        put_xavier(prefix + ".wk", {c, c});
        put_xavier(prefix + ".wv", {c, c});
        put_xavier(prefix + ".wo", {c, c});
    };
    auto put_mlp = [&](const std::string& prefix) {
        put_xavier(prefix + ".w1", {c, rc});
        put_zeros(prefix + ".b1", {rc});
        put_xavier(prefix + ".w2", {rc, c});
        put_zeros(prefix + ".b2", {c});
    };

    // toy backbone: 3x3 convs with strides 2, 2, 1; per-level 1x1 projections
    put_xavier("backbone.stage0.kernel", {3, 3, 3, c});
    put_zeros("backbone.stage0.bias", {c});
    put_xavier("backbone.stage1.kernel", {3, 3, c, c});
    put_zeros("backbone.stage1.bias", {c});
    put_xavier("backbone.stage2.kernel", {3, 3, c, c});
    put_zeros("backbone.stage2.bias", {c});
    for (int lvl = 0; lvl < 3; ++lvl) {
        put_xavier("backbone.proj" + std::to_string(lvl) + ".kernel", {1, 1, c, c});
        put_zeros("backbone.proj" + std::to_string(lvl) + ".bias", {c});
    }

    // query banks and positional encodings
    for (std::int64_t s = 0; s < config_.scale_count; ++s) {
        const auto hw = config_.scale_h(s + 1) * config_.scale_w(s + 1);
        put("pe.ek.s" + std::to_string(s), uniform_tensor({hw, c}, 0.02, rng));
        for (std::int64_t t = 0; t < config_.task_count; ++t) {
            const std::string st = ".s" + std::to_string(s) + ".t" + std::to_string(t);
            put("query" + st, uniform_tensor({n, c}, 0.02, rng));
            put("pe.eq" + st, uniform_tensor({n, c}, 0.02, rng));
        }
    }

    // shared encoder + query learning, depth-indexed
    const std::int64_t enc_sets = config_.share_encoder ? 1 : config_.scale_count * config_.task_count;
    for (std::int64_t set = 0; set < enc_sets; ++set) {
        const std::int64_t s = set / config_.task_count;
        const std::int64_t t = set % config_.task_count;
        for (std::int64_t d = 0; d < config_.depth; ++d) {
            const std::string ep = encoder_prefix(s, t, d);
            put_ln(ep + ".lnq");
            put_ln(ep + ".lnx");
            put_attn(ep + ".attn");
            if (config_.enable_query_learning) {
                const std::string qp = ql_prefix(s, t, d);
                put_ln(qp + ".ln");
                put_mlp(qp + ".mlp");
            }
        }
    }

    if (config_.enable_ctam) {
        put_attn("ctam.attn");
        put_ln("ctam.ln");
        put_mlp("ctam.mlp");
    }

    const std::int64_t dec_sets = config_.share_decoder ? 1 : config_.task_count;
    for (std::int64_t set = 0; set < dec_sets; ++set) {
        for (std::int64_t d = 0; d < config_.depth; ++d) {
            const std::string dp = decoder_prefix(set, d);
            put_ln(dp + ".lnx");
            put_ln(dp + ".lnp");
            put_attn(dp + ".attn");
            put_ln(dp + ".ln2");
            put_mlp(dp + ".mlp");
        }
    }

    for (const auto& task : tasks_) {
        put_xavier("head." + task.name + ".kernel", {1, 1, c, task_channels(task)});
        put_zeros("head." + task.name + ".bias", {task_channels(task)});
    }
}

Tensor& MQTransformer::param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& MQTransformer::cparam(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
}

void MQTransformer::zero_grads() {
    for (auto& [name, t] : params_) t.zero_grad();
}

LayerNormParams MQTransformer::ln_params(const std::string& prefix) const {
    return {cparam(prefix + ".gamma"), cparam(prefix + ".beta"), 1e-5};
}

MhsaParams MQTransformer::attn_params(const std::string& prefix) const {
    return {cparam(prefix + ".wq"), cparam(prefix + ".wk"), cparam(prefix + ".wv"),
            cparam(prefix + ".wo"), config_.num_heads, config_.attn_scale_full_dim};
}

MlpParams MQTransformer::mlp_params(const std::string& prefix) const {
    return {cparam(prefix + ".w1"), cparam(prefix + ".b1"), cparam(prefix + ".w2"),
            cparam(prefix + ".b2")};
}

std::vector<Tensor> MQTransformer::extract_features(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(2) != 3)
        throw DimensionError("extract_features: expected [H x W x 3] image, got " +
                             shape_str(image.shape()));
    const std::int64_t mult = (std::int64_t{4} << (config_.scale_count - 1));
    if (image.dim(0) != config_.in_h || image.dim(1) != config_.in_w)
        throw ContractError("extract_features: image size " + std::to_string(image.dim(0)) + "x" +
                            std::to_string(image.dim(1)) + " does not match configured " +
                            std::to_string(config_.in_h) + "x" + std::to_string(config_.in_w) +
                            " (must be a multiple of " + std::to_string(mult) + ")");

    auto stage = [&](const Tensor& x, int idx, std::int64_t stride) {
        ConvParams p{cparam("backbone.stage" + std::to_string(idx) + ".kernel"),
                     cparam("backbone.stage" + std::to_string(idx) + ".bias"), stride, 1};
        return gelu(conv2d(x, p));
    };
    auto project = [&](const Tensor& x, int lvl) {
        ConvParams p{cparam("backbone.proj" + std::to_string(lvl) + ".kernel"),
                     cparam("backbone.proj" + std::to_string(lvl) + ".bias"), 1, 0};
        return conv2d(x, p);
    };

    const Tensor f0 = stage(image, 0, 2);  // H/2
    const Tensor f1 = stage(f0, 1, 2);     // H/4
    const Tensor f2 = stage(f1, 2, 1);     // H/4
    const std::int64_t h1 = config_.scale_h(1), w1 = config_.scale_w(1);
    const Tensor fused =
        add(add(bilinear_resample(project(f0, 0), h1, w1), project(f1, 1)), project(f2, 2));

    std::vector<Tensor> scales;
    scales.push_back(fused);
    for (std::int64_t s = 2; s <= config_.scale_count; ++s)
        scales.push_back(bilinear_resample(fused, config_.scale_h(s), config_.scale_w(s)));
    return scales;
}

Tensor MQTransformer::shared_encoder_step(const Tensor& p, const Tensor& x_flat, std::int64_t s,
                                          std::int64_t t, std::int64_t depth_idx) const {
    const std::string ep = encoder_prefix(s, t, depth_idx);
    const auto lnq = ln_params(ep + ".lnq");
    const auto lnx = ln_params(ep + ".lnx");
    const Tensor q = layer_norm(add(p, cparam("pe.eq.s" + std::to_string(s) + ".t" + std::to_string(t))), lnq);
    const Tensor x_pe = add(x_flat, cparam("pe.ek.s" + std::to_string(s)));
    const Tensor k = layer_norm(x_pe, lnx);
    const Tensor v = layer_norm(config_.pe_on_value ? x_pe : x_flat, lnx);
    return add(p, mhsa(q, k, v, attn_params(ep + ".attn")));
}

Tensor MQTransformer::query_learning(const Tensor& p_hat, std::int64_t s, std::int64_t t,
                                     std::int64_t depth_idx) const {
    if (!config_.enable_query_learning) return p_hat;
    const std::string qp = ql_prefix(s, t, depth_idx);
    return add(p_hat, mlp_block(layer_norm(p_hat, ln_params(qp + ".ln")), mlp_params(qp + ".mlp")));
}

GroupedQueries MQTransformer::group_queries(const std::vector<std::vector<Tensor>>& banks) const {
    if (static_cast<std::int64_t>(banks.size()) != config_.scale_count)
        throw ContractError("group_queries: expected " + std::to_string(config_.scale_count) +
                            " scales, got " + std::to_string(banks.size()));
    GroupedQueries g;
    for (std::int64_t s = 0; s < config_.scale_count; ++s) {
        if (static_cast<std::int64_t>(banks[static_cast<std::size_t>(s)].size()) != config_.task_count)
            throw ContractError("group_queries: bank row has wrong task count");
        g.cross_task.push_back(concat_rows(banks[static_cast<std::size_t>(s)]));
    }
    for (std::int64_t t = 0; t < config_.task_count; ++t) {
        std::vector<Tensor> column;
        for (std::int64_t s = 0; s < config_.scale_count; ++s)
            column.push_back(banks[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)]);
        g.cross_scale.push_back(concat_rows(column));
    }
    return g;
}

std::vector<Tensor> MQTransformer::ctam(const std::vector<std::vector<Tensor>>& banks) const {
    const auto n = config_.queries_per_bank;
    if (!config_.enable_ctam) {
        std::vector<Tensor> fused;
        for (std::int64_t t = 0; t < config_.task_count; ++t) {
            Tensor acc = banks[0][static_cast<std::size_t>(t)];
            for (std::int64_t s = 1; s < config_.scale_count; ++s)
                acc = add(acc, banks[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)]);
            fused.push_back(acc);
        }
        return fused;
    }

    const auto attn = attn_params("ctam.attn");
    const auto ln = ln_params("ctam.ln");
    const auto mlp = mlp_params("ctam.mlp");
    auto refine = [&](const Tensor& q) {
        Tensor r = add(q, mhsa(q, q, q, attn));
        return add(r, mlp_block(layer_norm(r, ln), mlp));
    };

    GroupedQueries g = group_queries(banks);
    // pieces_ct[s][t], pieces_cs[t][s], both split back at N-row offsets
    std::vector<std::vector<Tensor>> pieces_ct, pieces_cs;
    for (const auto& q : g.cross_task)
        pieces_ct.push_back(split_rows(refine(q), std::vector<std::int64_t>(
                                                      static_cast<std::size_t>(config_.task_count), n)));
    for (const auto& q : g.cross_scale)
        pieces_cs.push_back(split_rows(refine(q), std::vector<std::int64_t>(
                                                      static_cast<std::size_t>(config_.scale_count), n)));

    std::vector<Tensor> fused;
    for (std::int64_t t = 0; t < config_.task_count; ++t) {
        Tensor acc_ct = pieces_ct[0][static_cast<std::size_t>(t)];
        for (std::int64_t s = 1; s < config_.scale_count; ++s)
            acc_ct = add(acc_ct, pieces_ct[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)]);
        Tensor acc_cs = pieces_cs[static_cast<std::size_t>(t)][0];
        for (std::int64_t s = 1; s < config_.scale_count; ++s)
            acc_cs = add(acc_cs, pieces_cs[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)]);
        fused.push_back(add(acc_ct, acc_cs));
    }
    return fused;
}

Tensor MQTransformer::shared_decoder_step(const Tensor& x_flat, const Tensor& fused_query,
                                          std::int64_t t, std::int64_t depth_idx) const {
    const std::string dp = decoder_prefix(t, depth_idx);
    const Tensor q = layer_norm(x_flat, ln_params(dp + ".lnx"));
    const Tensor kv = layer_norm(fused_query, ln_params(dp + ".lnp"));
    const Tensor x2 = add(x_flat, mhsa(q, kv, kv, attn_params(dp + ".attn")));
    return add(x2, mlp_block(layer_norm(x2, ln_params(dp + ".ln2")), mlp_params(dp + ".mlp")));
}

Tensor MQTransformer::task_head(const Tensor& decoded, std::int64_t dec_h, std::int64_t dec_w,
                                std::int64_t t) const {
    const auto& task = tasks_[static_cast<std::size_t>(t)];
    const auto ch = task_channels(task);
    ConvParams head{cparam("head." + task.name + ".kernel"), cparam("head." + task.name + ".bias"),
                    1, 0};
    Tensor x = reshape(decoded, {dec_h, dec_w, config_.channels});
    Tensor logits = bilinear_resample(conv2d(x, head), config_.in_h, config_.in_w);
    if (task.kind == "normals") {
        logits = reshape(normalize_rows(reshape(logits, {config_.in_h * config_.in_w, 3})),
                         {config_.in_h, config_.in_w, 3});
    }
    return logits;
}

std::map<std::string, Tensor> MQTransformer::forward(const Tensor& image) const {
    const auto feats = extract_features(image);
    std::vector<Tensor> flats;
    for (std::int64_t s = 1; s <= config_.scale_count; ++s)
        flats.push_back(reshape(feats[static_cast<std::size_t>(s - 1)],
                                {config_.scale_h(s) * config_.scale_w(s), config_.channels}));

    std::vector<std::vector<Tensor>> banks(static_cast<std::size_t>(config_.scale_count));
    for (std::int64_t s = 0; s < config_.scale_count; ++s) {
        for (std::int64_t t = 0; t < config_.task_count; ++t) {
            Tensor p = cparam("query.s" + std::to_string(s) + ".t" + std::to_string(t));
            for (std::int64_t d = 0; d < config_.depth; ++d) {
                p = shared_encoder_step(p, flats[static_cast<std::size_t>(s)], s, t, d);
                p = query_learning(p, s, t, d);
            }
            banks[static_cast<std::size_t>(s)].push_back(p);
        }
    }

    const auto fused = ctam(banks);

    const auto ds = config_.decode_scale;
    const auto dec_h = config_.scale_h(ds), dec_w = config_.scale_w(ds);
    std::map<std::string, Tensor> preds;
    for (std::int64_t t = 0; t < config_.task_count; ++t) {
        Tensor x = flats[static_cast<std::size_t>(ds - 1)];
        for (std::int64_t d = 0; d < config_.depth; ++d)
            x = shared_decoder_step(x, fused[static_cast<std::size_t>(t)], t, d);
        preds.emplace(tasks_[static_cast<std::size_t>(t)].name, task_head(x, dec_h, dec_w, t));
    }
    return preds;
}

std::map<std::string, Tensor> MQTransformer::forward_backbone_only(const Tensor& image) const {
    const auto feats = extract_features(image);
    const auto ds = config_.decode_scale;
    const auto dec_h = config_.scale_h(ds), dec_w = config_.scale_w(ds);
    const Tensor flat = reshape(feats[static_cast<std::size_t>(ds - 1)],
                                {dec_h * dec_w, config_.channels});
    std::map<std::string, Tensor> preds;
    for (std::int64_t t = 0; t < config_.task_count; ++t)
        preds.emplace(tasks_[static_cast<std::size_t>(t)].name, task_head(flat, dec_h, dec_w, t));
    return preds;
}

}  // namespace mqt
