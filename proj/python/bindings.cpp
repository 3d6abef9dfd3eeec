#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cmpt/pipeline.hpp"

namespace py = pybind11;

namespace {

cmpt::RunConfig config_from_string(const std::string& config_json) {
    auto doc = nlohmann::json::parse(config_json, nullptr, false);
    if (doc.is_discarded()) {
        throw cmpt::ConfigError("config is not valid JSON");
    }
    return cmpt::RunConfig::from_json(doc);
}

std::vector<cmpt::LabelTarget> targets_from_py(const py::object& targets, const std::string& mode) {
    std::vector<cmpt::LabelTarget> out;
    if (mode == "single") {
        for (auto t : targets) {
            out.push_back(cmpt::LabelTarget::single(t.cast<int>()));
        }
    } else if (mode == "multi") {
        for (auto row : targets) {
            std::vector<std::uint8_t> bits;
            for (auto b : row.cast<py::iterable>()) {
                bits.push_back(b.cast<int>() != 0 ? 1 : 0);
            }
            out.push_back(cmpt::LabelTarget::multi(std::move(bits)));
        }
    } else {
        throw cmpt::ConfigError("mode must be 'single' or 'multi'");
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_cmpt, m) {
    m.doc() = "Cross-modal proxy token harness: core operations";
    m.attr("__version__") = "0.1.0";

    py::register_exception<cmpt::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<cmpt::DataError>(m, "DataError", PyExc_RuntimeError);
    py::register_exception<cmpt::TrainingDivergenceError>(m, "TrainingDivergenceError",
                                                          PyExc_RuntimeError);

    m.def(
        "poly_lr",
        [](int epoch, double step_frac, double lr, int epochs, int warmup_epochs,
           double warmup_factor, double poly_power) {
            cmpt::TrainConfig cfg;
            cfg.lr = lr;
            cfg.epochs = epochs;
            cfg.warmup_epochs = warmup_epochs;
            cfg.warmup_factor = warmup_factor;
            cfg.poly_power = poly_power;
            return cmpt::poly_lr(epoch, step_frac, cfg);
        },
        py::arg("epoch"), py::arg("step_frac"), py::arg("lr"), py::arg("epochs"),
        py::arg("warmup_epochs") = 5, py::arg("warmup_factor") = 0.1, py::arg("poly_power") = 0.9,
        "Warmup then polynomial-decay learning rate at epoch granularity");

    m.def(
        "compute_metrics",
        [](const std::vector<std::vector<double>>& logits, const py::object& targets,
           const std::string& mode) {
            cmpt::Metrics metrics = cmpt::compute_metrics(logits, targets_from_py(targets, mode));
            return cmpt::metrics_to_json(metrics).dump();
        },
        py::arg("logits"), py::arg("targets"), py::arg("mode") = "single",
        "Accuracy / F1 metrics as a JSON string");

    m.def(
        "gate_case",
        [](bool m1_present, bool m2_present) {
            auto out = [](cmpt::GateCase c) {
                switch (c) {
                case cmpt::GateCase::kBoth: return "both";
                case cmpt::GateCase::kM1Missing: return "m1_missing";
                case cmpt::GateCase::kM2Missing: return "m2_missing";
                }
                return "both";
            };
            cmpt::PresenceMask mask{m1_present, m2_present};
            if (!mask.any()) {
                throw cmpt::DataError("gate: sample has no modality present");
            }
            if (mask.complete()) return out(cmpt::GateCase::kBoth);
            return out(mask.m1_present ? cmpt::GateCase::kM2Missing : cmpt::GateCase::kM1Missing);
        },
        py::arg("m1_present"), py::arg("m2_present"),
        "Which availability case the fusion gate selects");

    m.def(
        "protocol_counts",
        [](int n, const std::string& protocol, std::uint64_t seed) {
            cmpt::Split split;
            split.samples.resize(static_cast<std::size_t>(n));
            for (auto& s : split.samples) {
                s.raw_m1 = {0.0};
                s.raw_m2 = {0.0};
                s.mask = cmpt::PresenceMask{true, true};
                s.target = cmpt::LabelTarget::single(0);
            }
            auto stats = cmpt::apply_protocol(split, cmpt::MissingProtocol::parse(protocol), seed);
            py::dict d;
            d["n_complete"] = stats.n_complete;
            d["n_m1_only"] = stats.n_m1_only;
            d["n_m2_only"] = stats.n_m2_only;
            return d;
        },
        py::arg("n"), py::arg("protocol"), py::arg("seed") = 0,
        "Realized subset counts for a missing-modality protocol");

    m.def(
        "gen_data",
        [](const std::string& config_json) {
            return cmpt::pipeline::gen_data(config_from_string(config_json)).dump();
        },
        py::arg("config_json"), "Write the dataset file; returns stats JSON");

    m.def(
        "pretrain",
        [](const std::string& config_json) {
            py::gil_scoped_release release;
            cmpt::pipeline::pretrain(config_from_string(config_json));
        },
        py::arg("config_json"), "Pretrain and freeze the unimodal encoders");

    m.def(
        "train",
        [](const std::string& config_json) {
            auto cfg = config_from_string(config_json);
            std::vector<cmpt::EpochLog> log;
            {
                py::gil_scoped_release release;
                log = cmpt::pipeline::train(cfg);
            }
            nlohmann::json out = nlohmann::json::array();
            for (const auto& e : log) out.push_back(cmpt::pipeline::epoch_log_to_json(e));
            return out.dump();
        },
        py::arg("config_json"), "Train the proxy-token stage; returns the epoch log JSON");

    m.def(
        "evaluate",
        [](const std::string& config_json, const std::string& protocol) {
            auto cfg = config_from_string(config_json);
            py::gil_scoped_release release;
            return cmpt::pipeline::eval(cfg, protocol).dump();
        },
        py::arg("config_json"), py::arg("protocol") = "",
        "Evaluate the trained model; returns the report JSON");

    m.def(
        "sweep",
        [](const std::string& config_json, int jobs) {
            auto cfg = config_from_string(config_json);
            py::gil_scoped_release release;
            return cmpt::pipeline::sweep(cfg, jobs).dump();
        },
        py::arg("config_json"), py::arg("jobs") = 1,
        "Missing-rate sweep; returns the report JSON");

    m.def(
        "ablate",
        [](const std::string& config_json, int jobs) {
            auto cfg = config_from_string(config_json);
            py::gil_scoped_release release;
            return cmpt::pipeline::ablate(cfg, jobs).dump();
        },
        py::arg("config_json"), py::arg("jobs") = 1,
        "Ablation grid; returns the report JSON");

    m.def(
        "gradcheck",
        [](const std::string& config_json, std::uint64_t seed) {
            auto cfg = config_from_string(config_json);
            py::gil_scoped_release release;
            return cmpt::pipeline::gradcheck(cfg, seed).max_rel_error;
        },
        py::arg("config_json"), py::arg("seed") = 1,
        "Max relative gradient error of the full model on a 2-sample batch");
}
