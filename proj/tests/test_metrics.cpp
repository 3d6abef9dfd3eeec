#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "cmpt/metrics.hpp"
#include "test_helpers.hpp"

using namespace cmpt;
using namespace cmpt::testing;

namespace {

// independent confusion-matrix oracle
Metrics brute_force_metrics(const std::vector<std::vector<double>>& logits,
                            const std::vector<LabelTarget>& targets) {
    const int classes = static_cast<int>(logits.front().size());
    const bool multi = targets.front().mode == LabelTarget::Mode::kMulti;

    auto predict_single = [&](const std::vector<double>& row) {
        int best = 0;
        for (int c = 1; c < classes; ++c) {
            if (row[static_cast<std::size_t>(c)] > row[static_cast<std::size_t>(best)]) best = c;
        }
        return best;
    };

    Metrics m;
    m.per_class_f1.assign(static_cast<std::size_t>(classes), 0.0);
    m.support.assign(static_cast<std::size_t>(classes), 0);
    long exact = 0;
    double macro = 0.0;
    long tp_all = 0, fp_all = 0, fn_all = 0;
    for (int k = 0; k < classes; ++k) {
        long tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            bool pred, truth;
            if (multi) {
                pred = logits[i][static_cast<std::size_t>(k)] >= 0.0;
                truth = targets[i].labels[static_cast<std::size_t>(k)] != 0;
            } else {
                pred = predict_single(logits[i]) == k;
                truth = targets[i].index == k;
            }
            if (truth) ++m.support[static_cast<std::size_t>(k)];
            if (pred && truth) ++tp;
            if (pred && !truth) ++fp;
            if (!pred && truth) ++fn;
        }
        const double precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
        const double recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
        const double f1 =
            (precision + recall) == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
        m.per_class_f1[static_cast<std::size_t>(k)] = f1;
        macro += f1;
        tp_all += tp;
        fp_all += fp;
        fn_all += fn;
    }
    m.f1_macro = macro / classes;
    const double mp = (tp_all + fp_all) == 0 ? 0.0 : static_cast<double>(tp_all) / (tp_all + fp_all);
    const double mr = (tp_all + fn_all) == 0 ? 0.0 : static_cast<double>(tp_all) / (tp_all + fn_all);
    m.f1_micro = (mp + mr) == 0.0 ? 0.0 : 2.0 * mp * mr / (mp + mr);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (multi) {
            bool all = true;
            for (int k = 0; k < classes; ++k) {
                if ((logits[i][static_cast<std::size_t>(k)] >= 0.0) !=
                    (targets[i].labels[static_cast<std::size_t>(k)] != 0)) {
                    all = false;
                }
            }
            if (all) ++exact;
        } else if (predict_single(logits[i]) == targets[i].index) {
            ++exact;
        }
    }
    m.accuracy = static_cast<double>(exact) / static_cast<double>(logits.size());
    return m;
}

std::vector<double> one_hot(int c, int classes, double value = 1.0) {
    std::vector<double> row(static_cast<std::size_t>(classes), 0.0);
    row[static_cast<std::size_t>(c)] = value;
    return row;
}

} // namespace

TEST_SUITE("metrics") {

TEST_CASE("perfect predictions score one") {
    std::vector<std::vector<double>> logits = {one_hot(0, 2), one_hot(1, 2), one_hot(0, 2),
                                               one_hot(1, 2)};
    std::vector<LabelTarget> targets = {LabelTarget::single(0), LabelTarget::single(1),
                                        LabelTarget::single(0), LabelTarget::single(1)};
    Metrics m = compute_metrics(logits, targets);
    CHECK(m.accuracy == 1.0);
    CHECK(m.f1_macro == 1.0);
    CHECK(m.f1_micro == 1.0);
}

TEST_CASE("all-one-class predictions on a balanced set") {
    // predicts class 0 for everything; targets 0,1,0,1
    std::vector<std::vector<double>> logits(4, one_hot(0, 2));
    std::vector<LabelTarget> targets = {LabelTarget::single(0), LabelTarget::single(1),
                                        LabelTarget::single(0), LabelTarget::single(1)};
    Metrics m = compute_metrics(logits, targets);
    CHECK(m.accuracy == 0.5);
    CHECK(m.per_class_f1[0] == doctest::Approx(2.0 / 3.0));
    CHECK(m.per_class_f1[1] == 0.0);
    CHECK(m.f1_macro == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("micro F1 equals accuracy in single-label mode") {
    Rng rng(51);
    for (int trial = 0; trial < 30; ++trial) {
        const int classes = 2 + rng.uniform_int(6);
        const int n = 5 + rng.uniform_int(40);
        std::vector<std::vector<double>> logits;
        std::vector<LabelTarget> targets;
        for (int i = 0; i < n; ++i) {
            std::vector<double> row(static_cast<std::size_t>(classes));
            for (double& v : row) v = rng.normal();
            logits.push_back(row);
            targets.push_back(LabelTarget::single(rng.uniform_int(classes)));
        }
        Metrics m = compute_metrics(logits, targets);
        CHECK(m.f1_micro == doctest::Approx(m.accuracy).epsilon(1e-12));
    }
}

TEST_CASE("matches the brute-force confusion-matrix oracle on random sets") {
    Rng rng(52);
    for (int trial = 0; trial < 100; ++trial) {
        const bool multi = trial % 2 == 1;
        const int classes = 2 + rng.uniform_int(5);
        const int n = 3 + rng.uniform_int(30);
        std::vector<std::vector<double>> logits;
        std::vector<LabelTarget> targets;
        for (int i = 0; i < n; ++i) {
            std::vector<double> row(static_cast<std::size_t>(classes));
            for (double& v : row) v = rng.normal();
            logits.push_back(row);
            if (multi) {
                std::vector<std::uint8_t> bits(static_cast<std::size_t>(classes));
                for (auto& b : bits) b = rng.uniform() < 0.4 ? 1 : 0;
                targets.push_back(LabelTarget::multi(std::move(bits)));
            } else {
                targets.push_back(LabelTarget::single(rng.uniform_int(classes)));
            }
        }
        Metrics got = compute_metrics(logits, targets);
        Metrics want = brute_force_metrics(logits, targets);
        CHECK(got.accuracy == want.accuracy);
        CHECK(got.f1_macro == doctest::Approx(want.f1_macro).epsilon(1e-14));
        CHECK(got.f1_micro == doctest::Approx(want.f1_micro).epsilon(1e-14));
        for (std::size_t k = 0; k < got.per_class_f1.size(); ++k) {
            CHECK(got.per_class_f1[k] == doctest::Approx(want.per_class_f1[k]).epsilon(1e-14));
            CHECK(got.support[k] == want.support[k]);
        }
    }
}

TEST_CASE("per-class delta ranks improvements first") {
    Metrics with, without;
    with.per_class_f1 = {0.9, 0.2, 0.6};
    without.per_class_f1 = {0.5, 0.2, 0.7};
    auto deltas = per_class_delta(with, without);
    REQUIRE(deltas.size() == 3);
    CHECK(deltas[0].first == 0); // +0.4
    CHECK(deltas[0].second == doctest::Approx(0.4));
    CHECK(deltas[1].first == 1); // 0
    CHECK(deltas[2].first == 2); // -0.1

    auto zero = per_class_delta(with, with);
    for (const auto& [cls, d] : zero) CHECK(d == 0.0);

    Metrics wrong;
    wrong.per_class_f1 = {0.1};
    CHECK_THROWS_AS(per_class_delta(with, wrong), DimensionError);
}

TEST_CASE("evaluation protocols coincide where they must") {
    CmptModel model = tiny_model();
    DatasetConfig dcfg = tiny_dataset_config();
    Dataset dataset = generate(dcfg);

    const std::uint64_t seed = 1234;
    auto points = sweep_missing(model, dataset.test, {100, 0}, seed);
    REQUIRE(points.size() == 2);
    CHECK(points[0].x == 100.0); // descending order

    Metrics complete = evaluate(model, dataset.test, MissingProtocol::parse("complete"), seed);
    CHECK(points[0].metrics.accuracy == complete.accuracy);
    CHECK(points[0].metrics.f1_macro == complete.f1_macro);

    Metrics only_m1 =
        evaluate(model, dataset.test, MissingProtocol::parse("inference_only:m2"), seed);
    CHECK(points[1].metrics.accuracy == only_m1.accuracy);
    CHECK(points[1].metrics.f1_macro == only_m1.f1_macro);

    CHECK_THROWS_AS(sweep_missing(model, dataset.test, {50, 50}, seed), ConfigError);
}

TEST_CASE("evaluation is side-effect free and seed deterministic") {
    CmptModel model = tiny_model();
    DatasetConfig dcfg = tiny_dataset_config();
    Dataset dataset = generate(dcfg);

    std::uint64_t before = 0xcbf29ce484222325ULL;
    for (auto& nt : model.named_tensors()) {
        before = fnv1a(before, nt.tensor->data.data(), nt.tensor->data.size() * sizeof(double));
    }
    Metrics a = evaluate(model, dataset.test, MissingProtocol::parse("ratio:65,65"), 7);
    Metrics b = evaluate(model, dataset.test, MissingProtocol::parse("ratio:65,65"), 7);
    std::uint64_t after = 0xcbf29ce484222325ULL;
    for (auto& nt : model.named_tensors()) {
        after = fnv1a(after, nt.tensor->data.data(), nt.tensor->data.size() * sizeof(double));
    }
    CHECK(before == after);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.per_class_f1 == b.per_class_f1);
}

TEST_CASE("attention dump emits rows for available modalities") {
    CmptModel model = tiny_model();
    DatasetConfig dcfg = tiny_dataset_config();
    Dataset dataset = generate(dcfg);
    nlohmann::json dump =
        attention_dump(model, dataset.test, MissingProtocol::parse("inference_only:m2"), 5, 3);
    REQUIRE(dump.size() == 3);
    for (const auto& entry : dump) {
        CHECK(entry.at("mask").at("m1") == true);
        CHECK(entry.at("mask").at("m2") == false);
        CHECK(entry.contains("m1"));
        CHECK_FALSE(entry.contains("m2")); // encoder skipped for the missing modality
        CHECK(entry.at("m1").at("cls_rows").size() == 2);  // one row per head
        CHECK(entry.at("m1").at("cmpt_rows").size() == 2);
    }
}

TEST_CASE("report json round trip and renderings") {
    Metrics m;
    m.accuracy = 0.75;
    m.f1_macro = 0.5;
    m.f1_micro = 0.75;
    m.per_class_f1 = {0.25, 0.75};
    m.support = {10, 30};
    m.protocol = "inference_only:m2";

    Metrics back = metrics_from_json(metrics_to_json(m));
    CHECK(back.accuracy == m.accuracy);
    CHECK(back.per_class_f1 == m.per_class_f1);
    CHECK(back.protocol == m.protocol);

    nlohmann::json report = eval_report(m, nlohmann::json{{"seed", 1}});
    CHECK(report.at("schema") == "cmpt-report/1");

    const std::string csv = render_report(report, ReportFormat::kCsv);
    // header + scenarios x metrics
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3);

    std::vector<SweepPoint> points(4);
    for (int i = 0; i < 4; ++i) {
        points[static_cast<std::size_t>(i)].x = 100 - 10 * i;
        points[static_cast<std::size_t>(i)].metrics = m;
    }
    nlohmann::json sweep = sweep_report(points, nlohmann::json::object());
    const std::string plot = render_report(sweep, ReportFormat::kPlotData);
    CHECK(std::count(plot.begin(), plot.end(), '\n') == 1 + 4); // header comment + one line per x

    const std::string path = "test_report_roundtrip.json";
    emit_report(report, ReportFormat::kJson, path);
    std::ifstream in(path);
    nlohmann::json parsed = nlohmann::json::parse(in);
    std::remove(path.c_str());
    CHECK(parsed == report);
}

} // TEST_SUITE
