#include "mqt/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "mqt/metrics.hpp"
#include "mqt/serialize.hpp"

namespace mqt {

namespace {

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
}

// Stateless per-step batch selection so that checkpoint/resume replays the
// exact same schedule.
std::vector<std::size_t> pick_batch(std::uint64_t seed, std::int64_t step, std::size_t n,
                                    std::int64_t batch_size) {
    std::mt19937_64 rng(mix64(seed, static_cast<std::uint64_t>(step)));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>(batch_size));
    std::size_t remaining = n;
    for (std::int64_t b = 0; b < batch_size; ++b) {
        if (remaining == 0) remaining = n;  // reshuffle window when batch > dataset
        const std::size_t j = n - remaining + static_cast<std::size_t>(rng() % remaining);
        std::swap(order[n - remaining], order[j]);
        out.push_back(order[n - remaining]);
        --remaining;
    }
    return out;
}

void check_dataset_compat(const RunConfig& cfg, const Dataset& ds) {
    if (ds.scenes.empty()) throw ConfigError("dataset is empty");
    for (const auto& sc : ds.scenes) {
        if (sc.h != cfg.model.in_h || sc.w != cfg.model.in_w)
            throw ConfigError("scene size " + std::to_string(sc.h) + "x" + std::to_string(sc.w) +
                              " does not match configured input " + std::to_string(cfg.model.in_h) +
                              "x" + std::to_string(cfg.model.in_w));
    }
    for (const auto& task : cfg.tasks) {
        if ((task.kind == "seg" || task.kind == "partseg") && task.classes != ds.num_classes)
            throw ConfigError("task " + task.name + " has " + std::to_string(task.classes) +
                              " classes but dataset declares " + std::to_string(ds.num_classes));
    }
}

void require_same_tasks(const std::vector<TaskSpec>& a, const std::vector<TaskSpec>& b) {
    if (a.size() != b.size()) throw ConfigError("checkpoint task list length mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].name != b[i].name || a[i].kind != b[i].kind || a[i].classes != b[i].classes)
            throw ConfigError("checkpoint task '" + a[i].name + "/" + a[i].kind +
                              "' does not match configured '" + b[i].name + "/" + b[i].kind + "'");
    }
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    if (tasks.empty()) throw ConfigError("task list must not be empty");
    if (static_cast<std::int64_t>(tasks.size()) != model.task_count)
        throw ConfigError("task list length does not match model task_count");
    for (const auto& t : tasks) task_channels(t);
    if (optimizer.learning_rate < 0.0) throw ConfigError("learning rate must be nonnegative");
    if (iterations < 0) throw ConfigError("iterations must be nonnegative");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["model"] = {{"scale_count", model.scale_count},
                  {"queries_per_bank", model.queries_per_bank},
                  {"channels", model.channels},
                  {"depth", model.depth},
                  {"num_heads", model.num_heads},
                  {"mlp_ratio", model.mlp_ratio},
                  {"in_h", model.in_h},
                  {"in_w", model.in_w},
                  {"decode_scale", model.decode_scale},
                  {"share_encoder", model.share_encoder},
                  {"share_decoder", model.share_decoder},
                  {"enable_query_learning", model.enable_query_learning},
                  {"enable_ctam", model.enable_ctam},
                  {"pe_on_value", model.pe_on_value},
                  {"attn_scale_full_dim", model.attn_scale_full_dim}};
    j["tasks"] = nlohmann::json::array();
    for (const auto& t : tasks) {
        nlohmann::json tj = {{"name", t.name}, {"kind", t.kind}};
        if (t.kind == "seg" || t.kind == "partseg") tj["classes"] = t.classes;
        j["tasks"].push_back(tj);
    }
    j["optimizer"] = {{"learning_rate", optimizer.learning_rate},
                      {"weight_decay", optimizer.weight_decay},
                      {"momentum", optimizer.momentum}};
    j["iterations"] = iterations;
    j["batch_size"] = batch_size;
    j["seed"] = seed;
    j["loss_weights"] = nlohmann::json::object();
    for (const auto& t : tasks) j["loss_weights"][t.kind] = loss_weights.for_kind(t.kind);
    j["data_dir"] = data_dir;
    j["checkpoint_path"] = checkpoint_path;
    j["checkpoint_every"] = checkpoint_every;
    j["log_every"] = log_every;
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig cfg;
    try {
        if (j.contains("model")) {
            const auto& m = j.at("model");
            auto get = [&](const char* key, auto& field) {
                if (m.contains(key)) field = m.at(key).get<std::decay_t<decltype(field)>>();
            };
            get("scale_count", cfg.model.scale_count);
            get("queries_per_bank", cfg.model.queries_per_bank);
            get("channels", cfg.model.channels);
            get("depth", cfg.model.depth);
            get("num_heads", cfg.model.num_heads);
            get("mlp_ratio", cfg.model.mlp_ratio);
            get("in_h", cfg.model.in_h);
            get("in_w", cfg.model.in_w);
            get("decode_scale", cfg.model.decode_scale);
            get("share_encoder", cfg.model.share_encoder);
            get("share_decoder", cfg.model.share_decoder);
            get("enable_query_learning", cfg.model.enable_query_learning);
            get("enable_ctam", cfg.model.enable_ctam);
            get("pe_on_value", cfg.model.pe_on_value);
            get("attn_scale_full_dim", cfg.model.attn_scale_full_dim);
        }
        if (!j.contains("tasks")) throw ConfigError("config missing 'tasks'");
        for (const auto& tj : j.at("tasks")) {
            TaskSpec t;
            t.name = tj.at("name").get<std::string>();
            t.kind = tj.at("kind").get<std::string>();
            t.classes = tj.value("classes", std::int64_t{0});
            cfg.tasks.push_back(t);
        }
        cfg.model.task_count = static_cast<std::int64_t>(cfg.tasks.size());
        if (j.contains("optimizer")) {
            const auto& o = j.at("optimizer");
            cfg.optimizer.learning_rate = o.value("learning_rate", cfg.optimizer.learning_rate);
            cfg.optimizer.weight_decay = o.value("weight_decay", cfg.optimizer.weight_decay);
            cfg.optimizer.momentum = o.value("momentum", cfg.optimizer.momentum);
        }
        cfg.iterations = j.value("iterations", cfg.iterations);
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
        cfg.seed = j.value("seed", cfg.seed);
        if (j.contains("loss_weights")) {
            const auto& w = j.at("loss_weights");
            std::vector<std::string> kinds;
            for (const auto& t : cfg.tasks) kinds.push_back(t.kind);
            for (auto it = w.begin(); it != w.end(); ++it) {
                if (std::find(kinds.begin(), kinds.end(), it.key()) == kinds.end())
                    std::cerr << "warning: loss weight for unconfigured task kind '" << it.key()
                              << "' ignored\n";
            }
            cfg.loss_weights.seg = w.value("seg", cfg.loss_weights.seg);
            cfg.loss_weights.depth = w.value("depth", cfg.loss_weights.depth);
            cfg.loss_weights.normals = w.value("normals", cfg.loss_weights.normals);
            cfg.loss_weights.edge = w.value("edge", cfg.loss_weights.edge);
            cfg.loss_weights.partseg = w.value("partseg", cfg.loss_weights.partseg);
            cfg.loss_weights.sal = w.value("sal", cfg.loss_weights.sal);
        }
        cfg.data_dir = j.value("data_dir", std::string{});
        cfg.checkpoint_path = j.value("checkpoint_path", std::string{});
        cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
        cfg.log_every = j.value("log_every", cfg.log_every);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad run config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

void sgd_step(std::map<std::string, Tensor>& params, std::map<std::string, Tensor>& momentum,
              const OptimizerConfig& opt) {
    for (auto& [name, p] : params) {
        if (p.impl()->grad.size() != p.data().size())
            throw ContractError("sgd_step: parameter '" + name + "' has no gradient");
        auto mit = momentum.find(name);
        if (mit == momentum.end())
            mit = momentum.emplace(name, Tensor::zeros(p.shape())).first;
        auto& v = mit->second.data();
        auto& theta = p.data();
        const auto& g = p.impl()->grad;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            v[i] = opt.momentum * v[i] + g[i] + opt.weight_decay * theta[i];
            theta[i] -= opt.learning_rate * v[i];
        }
    }
}

// ---------------------------------------------------------------------------
// checkpoint io: u64 header length, config header JSON, tensor container
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json header = ckpt.config.to_json();
    header["step"] = ckpt.step;
    const std::string hs = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    const std::uint64_t len = hs.size();
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    std::map<std::string, Tensor> all = ckpt.params;
    for (const auto& [name, t] : ckpt.momentum) all.emplace("opt." + name, t);
    write_container(os, all);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint " + path);
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (is.gcount() != 8) throw FormatError("checkpoint truncated in header length");
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    if (len > (1u << 24)) throw FormatError("implausible checkpoint header length");
    std::string hs(len, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(len));
    if (static_cast<std::uint64_t>(is.gcount()) != len)
        throw FormatError("checkpoint truncated in config header");
    Checkpoint ckpt;
    std::int64_t step = 0;
    try {
        nlohmann::json header = nlohmann::json::parse(hs);
        step = header.value("step", std::int64_t{0});
        ckpt.config = RunConfig::from_json(header);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad checkpoint header: " + std::string(e.what()));
    }
    ckpt.step = step;
    auto all = read_container(is);
    for (auto& [name, t] : all) {
        if (name.rfind("opt.", 0) == 0)
            ckpt.momentum.emplace(name.substr(4), std::move(t));
        else
            ckpt.params.emplace(name, std::move(t));
    }
    return ckpt;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

Tensor scene_loss(const std::map<std::string, Tensor>& preds, const SyntheticScene& scene,
                  const std::vector<TaskSpec>& tasks, const LossWeights& weights) {
    const std::int64_t pixels = scene.h * scene.w;
    std::vector<std::pair<std::string, Tensor>> kind_losses;
    for (const auto& task : tasks) {
        const Tensor& pred = preds.at(task.name);
        if (task.kind == "seg" || task.kind == "partseg") {
            std::vector<std::int64_t> targets(static_cast<std::size_t>(pixels));
            for (std::size_t i = 0; i < targets.size(); ++i)
                targets[i] = static_cast<std::int64_t>(scene.seg[i]);
            kind_losses.emplace_back(
                task.kind, loss_cross_entropy(reshape(pred, {pixels, task.classes}), targets));
        } else if (task.kind == "depth") {
            kind_losses.emplace_back(task.kind, loss_l1(pred, scene.depth));
        } else if (task.kind == "normals") {
            kind_losses.emplace_back(task.kind, loss_l1(pred, scene.normals));
        } else if (task.kind == "edge") {
            kind_losses.emplace_back(task.kind, loss_balanced_bce(pred, scene.edge));
        } else if (task.kind == "sal") {
            kind_losses.emplace_back(task.kind, loss_bce(pred, scene.sal));
        } else {
            throw ConfigError("unknown task kind '" + task.kind + "'");
        }
    }
    return total_loss(kind_losses, weights);
}

namespace {

TrainOutput run_loop(const RunConfig& cfg, MQTransformer& model,
                     std::map<std::string, Tensor> momentum, std::int64_t start_step,
                     bool verbose) {
    const Dataset ds = load_dataset(cfg.data_dir);
    check_dataset_compat(cfg, ds);
    for (const auto& [name, p] : model.params()) {
        if (momentum.find(name) == momentum.end())
            momentum.emplace(name, Tensor::zeros(p.shape()));
    }

    TrainOutput out;
    out.config = cfg;
    std::vector<Tensor> images;
    for (const auto& sc : ds.scenes)
        images.push_back(Tensor::from_data({sc.h, sc.w, 3}, sc.image));

    for (std::int64_t step = start_step; step < cfg.iterations; ++step) {
        const auto batch = pick_batch(cfg.seed, step, ds.scenes.size(), cfg.batch_size);
        model.zero_grads();
        Tensor batch_loss = Tensor::scalar(0.0);
        for (const auto idx : batch) {
            const auto preds = model.forward(images[idx]);
            batch_loss = add(batch_loss, scene_loss(preds, ds.scenes[idx], cfg.tasks, cfg.loss_weights));
        }
        batch_loss = scale(batch_loss, 1.0 / static_cast<double>(cfg.batch_size));
        batch_loss.backward();
        sgd_step(model.params(), momentum, cfg.optimizer);
        out.loss_trace.push_back(batch_loss.item());
        out.step = step + 1;
        if (verbose && cfg.log_every > 0 && (step + 1) % cfg.log_every == 0)
            std::cout << "step " << (step + 1) << "  loss " << batch_loss.item() << "\n";
        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
            (step + 1) % cfg.checkpoint_every == 0)
            save_checkpoint(cfg.checkpoint_path, {cfg, step + 1, model.params(), momentum});
    }
    out.step = cfg.iterations;
    out.params = model.params();
    out.momentum = std::move(momentum);
    if (!cfg.checkpoint_path.empty())
        save_checkpoint(cfg.checkpoint_path, {cfg, out.step, out.params, out.momentum});
    return out;
}

}  // namespace

TrainOutput train(const RunConfig& cfg, bool verbose) {
    cfg.validate();
    MQTransformer model(cfg.model, cfg.tasks, cfg.seed);
    return run_loop(cfg, model, {}, 0, verbose);
}

TrainOutput train_resume(const RunConfig& cfg, const Checkpoint& ckpt, bool verbose) {
    cfg.validate();
    require_same_tasks(ckpt.config.tasks, cfg.tasks);
    MQTransformer model(cfg.model, cfg.tasks, ckpt.params);
    return run_loop(cfg, model, ckpt.momentum, ckpt.step, verbose);
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

MetricReport evaluate(const Checkpoint& ckpt, const Dataset& dataset) {
    if (dataset.scenes.empty()) throw ConfigError("evaluate: dataset is empty");
    check_dataset_compat(ckpt.config, dataset);
    MQTransformer model(ckpt.config.model, ckpt.config.tasks, ckpt.params);

    struct Pool {
        std::vector<std::int64_t> pred_cls, gt_cls;
        std::vector<double> pred_val, gt_val;
        std::vector<std::uint8_t> gt_bin;
        std::vector<std::vector<double>> score_maps;
        std::vector<std::vector<std::uint8_t>> gt_maps;
    };
    std::map<std::string, Pool> pools;

    for (const auto& sc : dataset.scenes) {
        const Tensor image = Tensor::from_data({sc.h, sc.w, 3}, sc.image);
        const auto preds = model.forward(image);
        const std::size_t pixels = static_cast<std::size_t>(sc.h * sc.w);
        for (const auto& task : ckpt.config.tasks) {
            const auto& pd = preds.at(task.name).data();
            Pool& pool = pools[task.name];
            if (task.kind == "seg" || task.kind == "partseg") {
                const auto k = static_cast<std::size_t>(task.classes);
                for (std::size_t i = 0; i < pixels; ++i) {
                    std::size_t best = 0;
                    for (std::size_t c = 1; c < k; ++c)
                        if (pd[i * k + c] > pd[i * k + best]) best = c;
                    pool.pred_cls.push_back(static_cast<std::int64_t>(best));
                    pool.gt_cls.push_back(static_cast<std::int64_t>(sc.seg[i]));
                }
            } else if (task.kind == "depth") {
                pool.pred_val.insert(pool.pred_val.end(), pd.begin(), pd.end());
                pool.gt_val.insert(pool.gt_val.end(), sc.depth.begin(), sc.depth.end());
            } else if (task.kind == "normals") {
                pool.pred_val.insert(pool.pred_val.end(), pd.begin(), pd.end());
                pool.gt_val.insert(pool.gt_val.end(), sc.normals.begin(), sc.normals.end());
            } else if (task.kind == "sal") {
                for (std::size_t i = 0; i < pixels; ++i) {
                    pool.pred_val.push_back(sigmoid(pd[i]));
                    pool.gt_bin.push_back(sc.sal[i] != 0.0 ? 1 : 0);
                }
            } else if (task.kind == "edge") {
                std::vector<double> scores(pixels);
                std::vector<std::uint8_t> gt(pixels);
                for (std::size_t i = 0; i < pixels; ++i) {
                    scores[i] = sigmoid(pd[i]);
                    gt[i] = sc.edge[i] != 0.0 ? 1 : 0;
                }
                pool.score_maps.push_back(std::move(scores));
                pool.gt_maps.push_back(std::move(gt));
            }
        }
    }

    MetricReport report;
    for (const auto& task : ckpt.config.tasks) {
        const Pool& pool = pools[task.name];
        auto& entry = report[task.name];
        if (task.kind == "seg" || task.kind == "partseg")
            entry["miou"] = metric_miou(pool.pred_cls, pool.gt_cls, task.classes);
        else if (task.kind == "depth")
            entry["rmse"] = metric_rmse(pool.pred_val, pool.gt_val);
        else if (task.kind == "normals")
            entry["merr"] = metric_merr(pool.pred_val, pool.gt_val);
        else if (task.kind == "sal")
            entry["maxf"] = metric_maxf(pool.pred_val, pool.gt_bin);
        else if (task.kind == "edge")
            entry["odsf"] = metric_odsf(pool.score_maps, pool.gt_maps, ckpt.config.model.in_h,
                                        ckpt.config.model.in_w);
    }
    return report;
}

MetricReport evaluate_files(const std::string& checkpoint_path, const std::string& data_dir) {
    return evaluate(load_checkpoint(checkpoint_path), load_dataset(data_dir));
}

std::string report_text(const MetricReport& report) {
    std::ostringstream os;
    for (const auto& [task, metrics] : report)
        for (const auto& [metric, value] : metrics)
            os << task << " " << metric << " " << value << "\n";
    return os.str();
}

nlohmann::json report_json(const MetricReport& report) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [task, metrics] : report) {
        j[task] = nlohmann::json::object();
        for (const auto& [metric, value] : metrics) j[task][metric] = value;
    }
    return j;
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

GradcheckReport gradcheck(const GradcheckOptions& opts) {
    MQTConfig mc;
    mc.task_count = 2;
    mc.scale_count = 2;
    mc.queries_per_bank = 8;
    mc.channels = 16;
    mc.depth = 1;
    mc.num_heads = 4;
    mc.in_h = 16;
    mc.in_w = 16;
    const std::vector<TaskSpec> tasks{{"seg", "seg", 4}, {"depth", "depth", 0}};
    MQTransformer model(mc, tasks, 7);
    const SyntheticScene scene = generate_scene(42, 16, 16, 4, 2, 4);
    const Tensor image = Tensor::from_data({16, 16, 3}, scene.image);
    const LossWeights weights;

    auto forward_loss = [&]() {
        return scene_loss(model.forward(image), scene, tasks, weights).item();
    };

    model.zero_grads();
    scene_loss(model.forward(image), scene, tasks, weights).backward();
    std::map<std::string, std::vector<double>> analytic;
    for (auto& [name, p] : model.params()) analytic[name] = p.grad();
    if (!opts.corrupt_param.empty()) {
        auto it = analytic.find(opts.corrupt_param);
        if (it == analytic.end())
            throw ConfigError("gradcheck: unknown parameter '" + opts.corrupt_param + "'");
        for (auto& g : it->second) g = g * 1.01 + 1e-3;
    }

    GradcheckReport report;
    report.all_pass = true;
    std::mt19937_64 rng(123);
    for (auto& [name, p] : model.params()) {
        GradcheckGroup group;
        group.name = name;
        auto& theta = p.data();
        const std::size_t n = theta.size();
        const std::size_t samples = std::min<std::size_t>(static_cast<std::size_t>(opts.coords_per_tensor), n);
        for (std::size_t s = 0; s < samples; ++s) {
            const std::size_t i = samples == n ? s : static_cast<std::size_t>(rng() % n);
            const double orig = theta[i];
            const double h = opts.fd_step * std::max(1.0, std::abs(orig));
            theta[i] = orig + h;
            const double fp = forward_loss();
            theta[i] = orig - h;
            const double fm = forward_loss();
            theta[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[name][i];
            const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            group.max_rel_err = std::max(group.max_rel_err, rel);
        }
        group.pass = group.max_rel_err < opts.tolerance;
        report.all_pass = report.all_pass && group.pass;
        report.groups.push_back(std::move(group));
    }
    return report;
}

}  // namespace mqt
