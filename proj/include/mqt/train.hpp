#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mqt/losses.hpp"
#include "mqt/model.hpp"
#include "mqt/synth.hpp"

namespace mqt {

struct OptimizerConfig {
    double learning_rate = 1e-4;
    double weight_decay = 5e-4;
    double momentum = 0.9;
};

struct RunConfig {
    MQTConfig model;
    std::vector<TaskSpec> tasks;
    OptimizerConfig optimizer;
    std::int64_t iterations = 1000;
    std::int64_t batch_size = 4;
    std::uint64_t seed = 0;
    LossWeights loss_weights;
    std::string data_dir;
    std::string checkpoint_path;
    std::int64_t checkpoint_every = 0;  // 0 = final checkpoint only
    std::int64_t log_every = 100;

    void validate() const;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::string& path);
};

// v <- momentum * v + grad + wd * theta;  theta <- theta - lr * v
void sgd_step(std::map<std::string, Tensor>& params, std::map<std::string, Tensor>& momentum,
              const OptimizerConfig& opt);

struct Checkpoint {
    RunConfig config;
    std::int64_t step = 0;
    std::map<std::string, Tensor> params;
    std::map<std::string, Tensor> momentum;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

struct TrainOutput {
    RunConfig config;
    std::int64_t step = 0;
    std::map<std::string, Tensor> params;
    std::map<std::string, Tensor> momentum;
    std::vector<double> loss_trace;  // one entry per optimization step
};

// Deterministic given (config, dataset, seed); single-threaded.
TrainOutput train(const RunConfig& config, bool verbose = false);
// Resume from a checkpoint; the checkpoint's task list must match the config.
TrainOutput train_resume(const RunConfig& config, const Checkpoint& ckpt, bool verbose = false);

// Per-task losses for one scene given the forward predictions.
Tensor scene_loss(const std::map<std::string, Tensor>& preds, const SyntheticScene& scene,
                  const std::vector<TaskSpec>& tasks, const LossWeights& weights);

using MetricReport = std::map<std::string, std::map<std::string, double>>;

MetricReport evaluate(const Checkpoint& ckpt, const Dataset& dataset);
MetricReport evaluate_files(const std::string& checkpoint_path, const std::string& data_dir);
std::string report_text(const MetricReport& report);
nlohmann::json report_json(const MetricReport& report);

struct GradcheckOptions {
    double tolerance = 1e-5;
    std::int64_t coords_per_tensor = 32;
    double fd_step = 1e-4;  // scaled by max(1, |theta|) per coordinate
    std::string corrupt_param;  // test hook: perturb this group's analytic grad
};

struct GradcheckGroup {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradcheckReport {
    std::vector<GradcheckGroup> groups;
    bool all_pass = false;
};

// Double-precision finite-difference check of the full model on a tiny
// instance (2 tasks, 2 scales, N=8, C=16, 16x16 input).
GradcheckReport gradcheck(const GradcheckOptions& opts);

}  // namespace mqt
