#include "cmpt/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

namespace cmpt {

namespace {

using nlohmann::json;

constexpr std::uint64_t kMaskTag = 0x6d61736b;
constexpr std::uint64_t kScenarioTag = 0x7363656e;

double f1_from_counts(long tp, long fp, long fn) {
    const double denom = 2.0 * tp + fp + fn;
    if (denom == 0.0) return 0.0; // 0/0 convention
    return 2.0 * tp / denom;
}

std::vector<std::vector<double>> collect_logits(CmptModel& model, const Split& split) {
    std::vector<std::vector<double>> logits;
    logits.reserve(split.samples.size());
    Graph g;
    for (const Sample& s : split.samples) {
        g.clear();
        auto tokens = model.forward_tokens(g, s, s.mask, false, nullptr);
        Var row = model.sample_logits(g, tokens, s.mask);
        logits.push_back(g.value(row).data);
    }
    return logits;
}

void run_jobs(int n_items, int jobs, const std::function<void(int)>& work) {
    if (jobs <= 1 || n_items <= 1) {
        for (int i = 0; i < n_items; ++i) work(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
    for (int t = 0; t < jobs; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (int i = next.fetch_add(1); i < n_items; i = next.fetch_add(1)) {
                    work(i);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

} // namespace

Metrics compute_metrics(const std::vector<std::vector<double>>& logits,
                        const std::vector<LabelTarget>& targets) {
    if (logits.empty() || logits.size() != targets.size()) {
        throw DimensionError("compute_metrics: one target per prediction required");
    }
    const int classes = static_cast<int>(logits.front().size());
    const LabelTarget::Mode mode = targets.front().mode;

    std::vector<long> tp(static_cast<std::size_t>(classes), 0);
    std::vector<long> fp(static_cast<std::size_t>(classes), 0);
    std::vector<long> fn(static_cast<std::size_t>(classes), 0);
    std::vector<int> support(static_cast<std::size_t>(classes), 0);
    long exact = 0;

    for (std::size_t i = 0; i < logits.size(); ++i) {
        const auto& row = logits[i];
        const auto& t = targets[i];
        if (static_cast<int>(row.size()) != classes || t.mode != mode) {
            throw DimensionError("compute_metrics: ragged logits or mixed label modes");
        }
        if (mode == LabelTarget::Mode::kSingle) {
            if (t.index < 0 || t.index >= classes) {
                throw DimensionError("compute_metrics: class index out of range");
            }
            int pred = 0;
            for (int c = 1; c < classes; ++c) {
                if (row[static_cast<std::size_t>(c)] > row[static_cast<std::size_t>(pred)]) pred = c;
            }
            ++support[static_cast<std::size_t>(t.index)];
            if (pred == t.index) {
                ++exact;
                ++tp[static_cast<std::size_t>(pred)];
            } else {
                ++fp[static_cast<std::size_t>(pred)];
                ++fn[static_cast<std::size_t>(t.index)];
            }
        } else {
            if (static_cast<int>(t.labels.size()) != classes) {
                throw DimensionError("compute_metrics: multi-label width mismatch");
            }
            bool all_match = true;
            for (int c = 0; c < classes; ++c) {
                // sigmoid(z) >= 0.5 <=> z >= 0
                const bool pred = row[static_cast<std::size_t>(c)] >= 0.0;
                const bool truth = t.labels[static_cast<std::size_t>(c)] != 0;
                if (truth) ++support[static_cast<std::size_t>(c)];
                if (pred && truth) ++tp[static_cast<std::size_t>(c)];
                if (pred && !truth) ++fp[static_cast<std::size_t>(c)];
                if (!pred && truth) ++fn[static_cast<std::size_t>(c)];
                if (pred != truth) all_match = false;
            }
            if (all_match) ++exact;
        }
    }

    Metrics m;
    m.accuracy = static_cast<double>(exact) / static_cast<double>(logits.size());
    m.per_class_f1.resize(static_cast<std::size_t>(classes));
    long tp_sum = 0, fp_sum = 0, fn_sum = 0;
    double macro = 0.0;
    for (int c = 0; c < classes; ++c) {
        m.per_class_f1[static_cast<std::size_t>(c)] =
            f1_from_counts(tp[static_cast<std::size_t>(c)], fp[static_cast<std::size_t>(c)],
                           fn[static_cast<std::size_t>(c)]);
        macro += m.per_class_f1[static_cast<std::size_t>(c)];
        tp_sum += tp[static_cast<std::size_t>(c)];
        fp_sum += fp[static_cast<std::size_t>(c)];
        fn_sum += fn[static_cast<std::size_t>(c)];
    }
    m.f1_macro = macro / classes;
    m.f1_micro = f1_from_counts(tp_sum, fp_sum, fn_sum);
    m.support = std::move(support);
    return m;
}

Metrics evaluate(CmptModel& model, const Split& test_split, const MissingProtocol& protocol,
                 std::uint64_t eval_seed) {
    Split masked = test_split;
    apply_protocol(masked, protocol, derive_seed(eval_seed, kMaskTag));
    std::vector<LabelTarget> targets;
    targets.reserve(masked.samples.size());
    for (const Sample& s : masked.samples) targets.push_back(s.target);
    Metrics m = compute_metrics(collect_logits(model, masked), targets);
    m.protocol = protocol.to_string();
    return m;
}

std::vector<SweepPoint> sweep_missing(CmptModel& model, const Split& test_split,
                                      std::vector<double> x_values, std::uint64_t eval_seed,
                                      int jobs) {
    if (x_values.empty()) {
        throw ConfigError("sweep: no points given");
    }
    std::sort(x_values.begin(), x_values.end(), std::greater<>());
    if (std::adjacent_find(x_values.begin(), x_values.end()) != x_values.end()) {
        throw ConfigError("sweep: points must be unique");
    }
    std::vector<SweepPoint> points(x_values.size());
    run_jobs(static_cast<int>(x_values.size()), jobs, [&](int i) {
        MissingProtocol p;
        p.kind = ProtocolKind::kSweepPoint;
        p.avail_m1 = 100.0;
        p.avail_m2 = x_values[static_cast<std::size_t>(i)];
        const auto seed = derive_seed(eval_seed, static_cast<std::uint64_t>(
                                                      std::llround(p.avail_m2 * 1000.0)));
        points[static_cast<std::size_t>(i)] =
            SweepPoint{p.avail_m2, evaluate(model, test_split, p, seed)};
    });
    return points;
}

std::vector<std::pair<int, double>> per_class_delta(const Metrics& with_metrics,
                                                    const Metrics& without_metrics) {
    if (with_metrics.per_class_f1.size() != without_metrics.per_class_f1.size()) {
        throw DimensionError("per_class_delta: class counts differ");
    }
    std::vector<std::pair<int, double>> deltas;
    deltas.reserve(with_metrics.per_class_f1.size());
    for (std::size_t c = 0; c < with_metrics.per_class_f1.size(); ++c) {
        deltas.emplace_back(static_cast<int>(c),
                            with_metrics.per_class_f1[c] - without_metrics.per_class_f1[c]);
    }
    std::stable_sort(deltas.begin(), deltas.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return deltas;
}

AblationGrid run_ablation(const std::string& axis, const std::vector<std::string>& values,
                          const Split& train_split, const Split& test_split,
                          const FrozenBase& base_m1, const FrozenBase& base_m2,
                          const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                          int n_classes, std::uint64_t eval_seed, int jobs) {
    if (values.empty()) {
        throw ConfigError("ablation: no axis values given");
    }
    if (axis != "lambda" && axis != "rank" && axis != "mode") {
        throw ConfigError("ablation: axis must be lambda, rank or mode");
    }
    AblationGrid grid;
    grid.axis = axis;
    grid.cells.resize(values.size());

    run_jobs(static_cast<int>(values.size()), jobs, [&](int i) {
        const std::string& value = values[static_cast<std::size_t>(i)];
        const std::string cell_id = axis + "=" + value;
        try {
            ModelConfig mc = model_cfg;
            TrainConfig tc = train_cfg;
            if (axis == "lambda") {
                tc.lambda = std::stod(value);
                tc.mode = TrainMode::kCmpt;
            } else if (axis == "rank") {
                mc.lora_rank = std::stoi(value);
                tc.mode = TrainMode::kCmpt;
            } else {
                tc.mode = train_mode_from_string(value);
            }
            const bool use_cmpt = tc.mode == TrainMode::kCmpt;
            CmptModel model =
                CmptModel::build(mc, use_cmpt, base_m1, base_m2, n_classes, tc.seed);
            train_model(model, train_split, tc);

            AblationCell& cell = grid.cells[static_cast<std::size_t>(i)];
            cell.value = value;
            cell.trainable_params = model.trainable_parameter_count();
            MissingProtocol complete;
            MissingProtocol m1_missing = MissingProtocol::parse("inference_only:m1");
            MissingProtocol m2_missing = MissingProtocol::parse("inference_only:m2");
            cell.both = evaluate(model, test_split, complete, derive_seed(eval_seed, kScenarioTag, 0));
            cell.m1_missing =
                evaluate(model, test_split, m1_missing, derive_seed(eval_seed, kScenarioTag, 1));
            cell.m2_missing =
                evaluate(model, test_split, m2_missing, derive_seed(eval_seed, kScenarioTag, 2));
        } catch (const std::exception& e) {
            throw DataError("ablation cell " + cell_id + " failed: " + e.what());
        }
    });
    return grid;
}

nlohmann::json attention_dump(CmptModel& model, const Split& split,
                              const MissingProtocol& protocol, std::uint64_t eval_seed,
                              int limit) {
    Split masked = split;
    apply_protocol(masked, protocol, derive_seed(eval_seed, kMaskTag));
    json out = json::array();
    Graph g;
    const int n = std::min<int>(limit, static_cast<int>(masked.samples.size()));
    for (int i = 0; i < n; ++i) {
        const Sample& s = masked.samples[static_cast<std::size_t>(i)];
        g.clear();
        std::array<AttentionSnapshot, 2> capture;
        model.forward_tokens(g, s, s.mask, false, nullptr, &capture);
        json js;
        js["sample"] = i;
        js["mask"] = json{{"m1", s.mask.m1_present}, {"m2", s.mask.m2_present}};
        for (int mod = 0; mod < 2; ++mod) {
            const auto& snap = capture[static_cast<std::size_t>(mod)];
            if (snap.cls_rows.empty()) continue;
            json mj;
            mj["cls_rows"] = snap.cls_rows;
            if (!snap.cmpt_rows.empty()) mj["cmpt_rows"] = snap.cmpt_rows;
            js[mod == 0 ? "m1" : "m2"] = mj;
        }
        out.push_back(js);
    }
    return out;
}

json metrics_to_json(const Metrics& m) {
    return json{{"accuracy", m.accuracy},       {"f1_macro", m.f1_macro},
                {"f1_micro", m.f1_micro},       {"per_class_f1", m.per_class_f1},
                {"support", m.support},         {"protocol", m.protocol}};
}

Metrics metrics_from_json(const json& j) {
    Metrics m;
    m.accuracy = j.at("accuracy").get<double>();
    m.f1_macro = j.at("f1_macro").get<double>();
    m.f1_micro = j.at("f1_micro").get<double>();
    m.per_class_f1 = j.at("per_class_f1").get<std::vector<double>>();
    m.support = j.at("support").get<std::vector<int>>();
    m.protocol = j.at("protocol").get<std::string>();
    return m;
}

json eval_report(const Metrics& metrics, const json& config_echo) {
    return json{{"schema", "cmpt-report/1"},
                {"kind", "eval"},
                {"metrics", metrics_to_json(metrics)},
                {"config_echo", config_echo}};
}

json sweep_report(const std::vector<SweepPoint>& points, const json& config_echo) {
    json pts = json::array();
    for (const auto& p : points) {
        pts.push_back(json{{"x", p.x}, {"metrics", metrics_to_json(p.metrics)}});
    }
    return json{{"schema", "cmpt-report/1"},
                {"kind", "sweep"},
                {"points", pts},
                {"config_echo", config_echo}};
}

json ablation_report(const AblationGrid& grid, const json& config_echo) {
    json cells = json::array();
    for (const auto& c : grid.cells) {
        cells.push_back(json{{"value", c.value},
                             {"trainable_params", c.trainable_params},
                             {"scenarios", json{{"both", metrics_to_json(c.both)},
                                                {"m1_missing", metrics_to_json(c.m1_missing)},
                                                {"m2_missing", metrics_to_json(c.m2_missing)}}}});
    }
    return json{{"schema", "cmpt-report/1"},
                {"kind", "ablation"},
                {"axis", grid.axis},
                {"cells", cells},
                {"config_echo", config_echo}};
}

ReportFormat report_format_from_string(const std::string& s) {
    if (s == "json") return ReportFormat::kJson;
    if (s == "csv") return ReportFormat::kCsv;
    if (s == "plotdata") return ReportFormat::kPlotData;
    throw ConfigError("report format must be json, csv or plotdata");
}

namespace {

void append_metric_rows(std::ostringstream& out, const std::string& scenario, const json& mj) {
    for (const char* name : {"accuracy", "f1_macro", "f1_micro"}) {
        out << scenario << "," << name << "," << mj.at(name).get<double>() << "\n";
    }
}

void append_plot_line(std::ostringstream& out, const std::string& x, const json& mj) {
    out << x << " " << mj.at("accuracy").get<double>() << " " << mj.at("f1_macro").get<double>()
        << " " << mj.at("f1_micro").get<double>() << "\n";
}

} // namespace

std::string render_report(const json& report, ReportFormat format) {
    if (format == ReportFormat::kJson) {
        return report.dump(2) + "\n";
    }
    const std::string kind = report.at("kind").get<std::string>();
    std::ostringstream out;
    out.precision(17);
    if (format == ReportFormat::kCsv) {
        out << "scenario,metric,value\n";
        if (kind == "eval") {
            const json& mj = report.at("metrics");
            append_metric_rows(out, mj.at("protocol").get<std::string>(), mj);
        } else if (kind == "sweep") {
            for (const auto& p : report.at("points")) {
                append_metric_rows(out, p.at("metrics").at("protocol").get<std::string>(),
                                   p.at("metrics"));
            }
        } else if (kind == "ablation") {
            for (const auto& c : report.at("cells")) {
                const std::string v = report.at("axis").get<std::string>() + "=" +
                                      c.at("value").get<std::string>();
                append_metric_rows(out, v + "/both", c.at("scenarios").at("both"));
                append_metric_rows(out, v + "/m1_missing", c.at("scenarios").at("m1_missing"));
                append_metric_rows(out, v + "/m2_missing", c.at("scenarios").at("m2_missing"));
            }
        } else {
            throw ConfigError("report: unknown kind '" + kind + "'");
        }
        return out.str();
    }
    // plotdata
    out << "# x accuracy f1_macro f1_micro\n";
    if (kind == "eval") {
        append_plot_line(out, "0", report.at("metrics"));
    } else if (kind == "sweep") {
        for (const auto& p : report.at("points")) {
            append_plot_line(out, std::to_string(p.at("x").get<double>()), p.at("metrics"));
        }
    } else if (kind == "ablation") {
        for (const auto& c : report.at("cells")) {
            for (const char* scen : {"both", "m1_missing", "m2_missing"}) {
                append_plot_line(out, c.at("value").get<std::string>() + "/" + scen,
                                 c.at("scenarios").at(scen));
            }
        }
    } else {
        throw ConfigError("report: unknown kind '" + kind + "'");
    }
    return out.str();
}

void emit_report(const json& report, ReportFormat format, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write report: " + path);
    }
    out << render_report(report, format);
    if (!out) {
        throw DataError("failed while writing report: " + path);
    }
}

} // namespace cmpt
