// mqt: multi-task query-transformer trainer, evaluator and cost model.
#include <cstdint>
#include <iomanip>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mqt/errors.hpp"
#include "mqt/flops.hpp"
#include "mqt/synth.hpp"
#include "mqt/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitThreshold = 2;

int cmd_train(const std::string& config_path) {
    const mqt::RunConfig cfg = mqt::RunConfig::load(config_path);
    const mqt::TrainOutput out = mqt::train(cfg, /*verbose=*/true);
    if (!out.loss_trace.empty())
        std::cout << "final loss " << out.loss_trace.back() << " after " << out.step << " steps\n";
    else
        std::cout << "no optimization steps requested\n";
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir, bool as_json) {
    const mqt::MetricReport report = mqt::evaluate_files(checkpoint_path, data_dir);
    if (as_json)
        std::cout << mqt::report_json(report).dump(2) << "\n";
    else
        std::cout << mqt::report_text(report);
    return kExitOk;
}

int cmd_gradcheck(double tolerance) {
    mqt::GradcheckOptions opts;
    opts.tolerance = tolerance;
    const mqt::GradcheckReport report = mqt::gradcheck(opts);
    for (const auto& g : report.groups)
        std::cout << (g.pass ? "pass" : "FAIL") << "  " << std::scientific << std::setprecision(3)
                  << g.max_rel_err << "  " << g.name << "\n";
    std::cout << (report.all_pass ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance "
              << tolerance << ")\n";
    return report.all_pass ? kExitOk : kExitThreshold;
}

int cmd_flops(const mqt::FlopQuery& q, bool as_json) {
    const mqt::FlopReport report = mqt::dispatch_flops(q);
    if (as_json) {
        nlohmann::json j;
        j["scheme"] = q.scheme;
        j["items"] = nlohmann::json::array();
        for (const auto& item : report.items)
            j["items"].push_back({{"label", item.label}, {"flops", item.flops}});
        j["total_flops"] = report.total();
        j["total_gflops"] = report.gflops();
        j["note"] = report.note;
        std::cout << j.dump(2) << "\n";
        return kExitOk;
    }
    std::cout << "scheme: " << q.scheme << "  (H=" << q.h << " W=" << q.w << " C=" << q.c
              << " N=" << q.n << " K=" << q.k << " TN=" << q.tn << " S=" << q.s << ")\n";
    for (const auto& item : report.items)
        std::cout << "  " << std::left << std::setw(32) << item.label << std::right << std::fixed
                  << std::setprecision(4) << item.flops / 1e9 << " GFLOPs\n";
    std::cout << "  " << std::left << std::setw(32) << "total" << std::right << std::fixed
              << std::setprecision(4) << report.gflops() << " GFLOPs\n";
    if (!report.note.empty()) std::cout << "note: " << report.note << "\n";
    return kExitOk;
}

int cmd_synth(const std::string& out_dir, std::int64_t count, std::uint64_t seed,
              std::int64_t size, std::int64_t classes) {
    if (count < 1) throw mqt::ConfigError("--count must be positive");
    mqt::Dataset ds;
    ds.num_classes = classes;
    for (std::int64_t i = 0; i < count; ++i)
        ds.scenes.push_back(mqt::generate_scene(seed + static_cast<std::uint64_t>(i), size, size,
                                                classes, 2, 5));
    mqt::save_dataset(out_dir, ds);
    std::cout << "wrote " << count << " scenes (" << size << "x" << size << ", " << classes
              << " classes) to " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-task query transformer: train / eval / gradcheck / flops / synth-data"};
    app.require_subcommand(1);

    std::string config_path;
    auto* train_cmd = app.add_subcommand("train", "train a model from a JSON run config");
    train_cmd->add_option("--config", config_path, "run config JSON file")->required();

    std::string checkpoint_path, data_dir;
    bool eval_json = false;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
    eval_cmd->add_flag("--json", eval_json, "emit JSON instead of text");

    double tolerance = 1e-5;
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the model");
    grad_cmd->add_option("--tolerance", tolerance, "max relative error allowed");

    mqt::FlopQuery query;
    bool flops_json = false;
    auto* flops_cmd = app.add_subcommand("flops", "analytical attention cost table");
    flops_cmd->set_help_flag("--help", "print this help message and exit");
    flops_cmd->add_option("--scheme", query.scheme,
                          "none | global_context | local_context | cross_task_attention")
        ->required();
    flops_cmd->add_option("--h", query.h, "feature map height");
    flops_cmd->add_option("--w", query.w, "feature map width");
    flops_cmd->add_option("--c", query.c, "channels");
    flops_cmd->add_option("--n", query.n, "queries per bank");
    flops_cmd->add_option("--k", query.k, "local context kernel size");
    flops_cmd->add_option("--tn", query.tn, "task count");
    flops_cmd->add_option("--s", query.s, "scale count");
    flops_cmd->add_flag("--json", flops_json, "emit JSON instead of text");

    std::string out_dir;
    std::int64_t count = 8, size = 64, classes = 4;
    std::uint64_t seed = 0;
    auto* synth_cmd = app.add_subcommand("synth-data", "generate a synthetic multi-task dataset");
    synth_cmd->add_option("--out", out_dir, "output directory")->required();
    synth_cmd->add_option("--count", count, "number of scenes");
    synth_cmd->add_option("--seed", seed, "base seed; scene i uses seed + i");
    synth_cmd->add_option("--size", size, "square scene side length");
    synth_cmd->add_option("--classes", classes, "segmentation classes incl. background");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) return cmd_train(config_path);
        if (*eval_cmd) return cmd_eval(checkpoint_path, data_dir, eval_json);
        if (*grad_cmd) return cmd_gradcheck(tolerance);
        if (*flops_cmd) return cmd_flops(query, flops_json);
        if (*synth_cmd) return cmd_synth(out_dir, count, seed, size, classes);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
