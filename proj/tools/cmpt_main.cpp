#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cmpt/pipeline.hpp"

namespace {

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

LogLevel log_level() {
    const char* env = std::getenv("CMPT_LOG");
    if (env == nullptr) return LogLevel::kInfo;
    const std::string v(env);
    if (v == "quiet") return LogLevel::kQuiet;
    if (v == "debug") return LogLevel::kDebug;
    return LogLevel::kInfo;
}

void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::kInfo) {
        std::cerr << "[cmpt] " << msg << "\n";
    }
}

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Run configuration (JSON)")->required();
    cmd->add_option("--set", args.overrides,
                    "Override a config leaf via dotted path, e.g. --set train.lambda=0.0");
    cmd->add_option("--seed", args.seed, "Override the top-level seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
    cmd->add_option("--out", args.out_dir, "Redirect every output path into this directory");
}

cmpt::RunConfig load_config(const CommonArgs& args) {
    cmpt::RunConfig cfg = cmpt::RunConfig::load(args.config_path, args.overrides);
    if (args.seed_set) {
        cfg.seed = args.seed;
    }
    if (!args.out_dir.empty()) {
        cfg.rebase_outputs(args.out_dir);
    }
    return cfg;
}

int fail(int code, const std::string& what) {
    std::cerr << "ERR " << code << ": " << what << "\n";
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-modal proxy token training and evaluation harness"};
    app.require_subcommand(1);

    CommonArgs gen_args, pre_args, train_args, eval_args, sweep_args, ablate_args, grad_args;

    CLI::App* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset file");
    add_common(gen, gen_args);

    CLI::App* pre = app.add_subcommand("pretrain", "Pretrain and freeze the unimodal encoders");
    add_common(pre, pre_args);

    CLI::App* train = app.add_subcommand("train", "Train the proxy-token stage");
    add_common(train, train_args);

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a trained model under a protocol");
    add_common(eval, eval_args);
    std::string eval_protocol;
    std::string attention_path;
    eval->add_option("--protocol", eval_protocol,
                     "Protocol override, e.g. complete | inference_only:m2 | ratio:65,65 | eta:70");
    eval->add_option("--dump-attention", attention_path,
                     "Write last-layer attention rows for the special tokens to this JSON file");

    CLI::App* sweep = app.add_subcommand("sweep", "Evaluate across (100%, x%) availability points");
    add_common(sweep, sweep_args);
    int sweep_jobs = 1;
    sweep->add_option("--jobs", sweep_jobs, "Concurrent evaluation points");

    CLI::App* ablate = app.add_subcommand("ablate", "Train and evaluate an ablation grid");
    add_common(ablate, ablate_args);
    int ablate_jobs = 1;
    ablate->add_option("--jobs", ablate_jobs, "Concurrent grid cells");

    CLI::App* grad = app.add_subcommand("gradcheck", "Check analytic gradients of the full model");
    add_common(grad, grad_args);

    CLI::App* report = app.add_subcommand("report", "Reformat an existing JSON report");
    std::string report_in, report_format = "csv", report_out;
    report->add_option("--in", report_in, "Existing JSON report")->required();
    report->add_option("--format", report_format, "json | csv | plotdata");
    report->add_option("--out", report_out, "Output path (stdout when omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            auto cfg = load_config(gen_args);
            auto stats = cmpt::pipeline::gen_data(cfg);
            std::cout << stats.dump(2) << "\n";
            log_info("dataset written to " + cfg.paths.data);
        } else if (pre->parsed()) {
            auto cfg = load_config(pre_args);
            cmpt::pipeline::pretrain(cfg);
            log_info("frozen bases written to " + cfg.paths.bases_dir);
        } else if (train->parsed()) {
            auto cfg = load_config(train_args);
            auto log = cmpt::pipeline::train(cfg);
            for (const auto& e : log) {
                std::cout << cmpt::pipeline::epoch_log_to_json(e).dump() << "\n";
            }
            log_info("model written to " + cfg.paths.model);
        } else if (eval->parsed()) {
            auto cfg = load_config(eval_args);
            auto rep = cmpt::pipeline::eval(cfg, eval_protocol, attention_path);
            std::cout << rep.dump(2) << "\n";
            log_info("report written to " + cfg.paths.report);
        } else if (sweep->parsed()) {
            auto cfg = load_config(sweep_args);
            auto rep = cmpt::pipeline::sweep(cfg, sweep_jobs);
            std::cout << rep.dump(2) << "\n";
            log_info("report written to " + cfg.paths.report);
        } else if (ablate->parsed()) {
            auto cfg = load_config(ablate_args);
            auto rep = cmpt::pipeline::ablate(cfg, ablate_jobs);
            std::cout << rep.dump(2) << "\n";
            log_info("report written to " + cfg.paths.report);
        } else if (grad->parsed()) {
            auto cfg = load_config(grad_args);
            const std::uint64_t seed = grad_args.seed_set ? grad_args.seed : cfg.seed;
            auto result = cmpt::pipeline::gradcheck(cfg, seed);
            std::cout << result.max_rel_error << "\n";
            if (result.max_rel_error > 1e-4) {
                return fail(5, "gradcheck max relative error exceeds 1e-4");
            }
        } else if (report->parsed()) {
            std::ifstream in(report_in);
            if (!in) {
                return fail(3, "cannot open report: " + report_in);
            }
            auto doc = nlohmann::json::parse(in, nullptr, false);
            if (doc.is_discarded()) {
                return fail(3, "report is not valid JSON: " + report_in);
            }
            const auto format = cmpt::report_format_from_string(report_format);
            if (report_out.empty()) {
                std::cout << cmpt::render_report(doc, format);
            } else {
                cmpt::emit_report(doc, format, report_out);
            }
        }
    } catch (const cmpt::ConfigError& e) {
        return fail(2, e.what());
    } catch (const cmpt::TrainingDivergenceError& e) {
        return fail(4, e.what());
    } catch (const cmpt::DataError& e) {
        return fail(3, e.what());
    } catch (const std::exception& e) {
        return fail(1, e.what());
    }
    return 0;
}
