#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mqt/nn.hpp"
#include "mqt/tensor.hpp"

namespace mqt {

struct MQTConfig {
    std::int64_t task_count = 2;       // TN
    std::int64_t scale_count = 2;      // S
    std::int64_t queries_per_bank = 64;  // N
    std::int64_t channels = 32;        // C
    std::int64_t depth = 1;            // encoder/decoder repeats D
    std::int64_t num_heads = 4;
    std::int64_t mlp_ratio = 4;
    std::int64_t in_h = 64;
    std::int64_t in_w = 64;
    std::int64_t decode_scale = 1;  // 1-based, 1 = finest
    bool share_encoder = true;
    bool share_decoder = true;
    bool enable_query_learning = true;
    bool enable_ctam = true;
    bool pe_on_value = false;       // add e_k to the value path too
    bool attn_scale_full_dim = false;

    void validate() const;  // throws ConfigError

    // The toy backbone downsamples 4x to scale 1; scale s halves again each step.
    std::int64_t scale_h(std::int64_t s) const { return in_h / (4 << (s - 1)); }
    std::int64_t scale_w(std::int64_t s) const { return in_w / (4 << (s - 1)); }
};

struct TaskSpec {
    std::string name;
    std::string kind;  // seg | partseg | depth | normals | edge | sal
    std::int64_t classes = 0;  // seg/partseg only
};

std::int64_t task_channels(const TaskSpec& task);  // throws ConfigError on unknown kind

struct GroupedQueries {
    std::vector<Tensor> cross_task;   // one per scale, [(TN*N) x C]
    std::vector<Tensor> cross_scale;  // one per task, [(S*N) x C]
};

class MQTransformer {
public:
    MQTransformer(MQTConfig config, std::vector<TaskSpec> tasks, std::uint64_t seed);
    MQTransformer(MQTConfig config, std::vector<TaskSpec> tasks,
                  std::map<std::string, Tensor> params);

    const MQTConfig& config() const { return config_; }
    const std::vector<TaskSpec>& tasks() const { return tasks_; }
    std::map<std::string, Tensor>& params() { return params_; }
    const std::map<std::string, Tensor>& params() const { return params_; }
    Tensor& param(const std::string& name);

    void zero_grads();

    // Toy pyramid extractor: 3 conv stages, per-level 1x1 projection, additive
    // fusion at the finest level, then bilinear downsampling per scale.
    std::vector<Tensor> extract_features(const Tensor& image) const;

    // p_hat = p + MHSA(Q=LN(p + e_q), K=LN(x + e_k), V=LN(x))
    Tensor shared_encoder_step(const Tensor& p, const Tensor& x_flat, std::int64_t s,
                               std::int64_t t, std::int64_t depth_idx) const;
    // p + MLP(LN(p)); identity when query learning is disabled
    Tensor query_learning(const Tensor& p_hat, std::int64_t s, std::int64_t t,
                          std::int64_t depth_idx) const;

    GroupedQueries group_queries(const std::vector<std::vector<Tensor>>& banks) const;
    // banks[s][t] -> one fused query per task
    std::vector<Tensor> ctam(const std::vector<std::vector<Tensor>>& banks) const;

    // x = x + MHSA(Q=LN(x), K=LN(p), V=LN(p)); x_hat = x + MLP(LN(x))
    Tensor shared_decoder_step(const Tensor& x_flat, const Tensor& fused_query, std::int64_t t,
                               std::int64_t depth_idx) const;

    // 1x1 conv head + bilinear upsample to label resolution; normals heads
    // L2-normalize per pixel.
    Tensor task_head(const Tensor& decoded, std::int64_t dec_h, std::int64_t dec_w,
                     std::int64_t t) const;

    std::map<std::string, Tensor> forward(const Tensor& image) const;
    // Heads applied straight to the fused backbone feature; reference path for
    // the residual-transparency property.
    std::map<std::string, Tensor> forward_backbone_only(const Tensor& image) const;

private:
    void init_params(std::uint64_t seed);
    const Tensor& cparam(const std::string& name) const;
    std::string encoder_prefix(std::int64_t s, std::int64_t t, std::int64_t depth_idx) const;
    std::string ql_prefix(std::int64_t s, std::int64_t t, std::int64_t depth_idx) const;
    std::string decoder_prefix(std::int64_t t, std::int64_t depth_idx) const;
    LayerNormParams ln_params(const std::string& prefix) const;
    MhsaParams attn_params(const std::string& prefix) const;
    MlpParams mlp_params(const std::string& prefix) const;

    MQTConfig config_;
    std::vector<TaskSpec> tasks_;
    std::map<std::string, Tensor> params_;
};

}  // namespace mqt
