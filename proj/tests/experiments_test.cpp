#include <gtest/gtest.h>

#include "neuroink/experiments.hpp"
#include "neuroink/synth.hpp"
#include "test_util.hpp"

using namespace neuroink;
using nktest::TempDir;

namespace {

BackendFactory linear_factory() {
    return [] { return std::make_unique<LinearPixelBackend>(); };
}

std::vector<DatasetRef> five_refs() {
    std::vector<DatasetRef> refs;
    for (const auto& n : {"A", "B", "C", "D", "E"}) refs.push_back({n, "", {}, ""});
    return refs;
}

TEST(Matrix, FortyCellExpansion) {
    MatrixConfig cfg;
    cfg.datasets = five_refs();
    auto specs = expand_matrix(cfg);
    // 5 mono rows + 2 multi rows + 5 cross rows
    ASSERT_EQ(specs.size(), 12u);
    EXPECT_EQ(cell_count(specs), 40u);

    EXPECT_EQ(specs[0].name, "mono:A");
    EXPECT_EQ(specs[0].train_sets, (std::vector<std::string>{"A"}));
    EXPECT_EQ(specs[0].eval_sets.size(), 5u);
    EXPECT_EQ(specs[0].protocol, Protocol::cv5);

    EXPECT_EQ(specs[5].name, "multi-dataset");
    EXPECT_EQ(specs[5].train_sets.size(), 5u);
    EXPECT_EQ(specs[6].name, "multi-dataset-spirals");

    EXPECT_EQ(specs[7].name, "cross:A");
    EXPECT_EQ(specs[7].protocol, Protocol::train_once_eval_external);
    EXPECT_EQ(specs[7].train_sets, (std::vector<std::string>{"B", "C", "D", "E"}));
    EXPECT_EQ(specs[7].eval_sets, (std::vector<std::string>{"A"}));
}

TEST(Matrix, FullVariantSubstitutedInMultiRow) {
    MatrixConfig cfg;
    cfg.datasets = five_refs();
    cfg.full_variant = DatasetRef{"E-all", "", {}, "E-group"};
    cfg.full_variant_replaces = "E";
    auto specs = expand_matrix(cfg);
    EXPECT_EQ(specs[5].train_sets,
              (std::vector<std::string>{"A", "B", "C", "D", "E-all"}));
    // the spirals-only multi row keeps the restricted variant
    EXPECT_EQ(specs[6].train_sets,
              (std::vector<std::string>{"A", "B", "C", "D", "E"}));
    // eval columns never change
    EXPECT_EQ(specs[5].eval_sets, (std::vector<std::string>{"A", "B", "C", "D", "E"}));
}

TEST(Spec, CrossProtocolRejectsTrainEvalOverlap) {
    ExperimentSpec s;
    s.name = "bad";
    s.train_sets = {"A", "B"};
    s.eval_sets = {"B"};
    s.protocol = Protocol::train_once_eval_external;
    try {
        s.validate();
        FAIL() << "expected SpecConflict";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "SpecConflict");
    }
    s.eval_sets = {"C"};
    EXPECT_NO_THROW(s.validate());
    EXPECT_THROW((ExperimentSpec{"empty", {}, {"A"}}).validate(), Error);
}

TEST(Spec, DigestSensitivity) {
    ExperimentSpec a{"x", {"A"}, {"A"}};
    ExperimentSpec b = a;
    EXPECT_EQ(a.digest(), b.digest());
    b.seed = 1;
    EXPECT_NE(a.digest(), b.digest());
    b = a;
    b.eval_sets = {"B"};
    EXPECT_NE(a.digest(), b.digest());
}

fs::path write_synth_dataset(const TempDir& tmp, const std::string& name,
                             std::uint64_t seed, int n_per_class = 6) {
    auto cohort = generate_cohort(n_per_class, patient_profile(), control_profile(),
                                  seed, DiagnosticClass::PD, name);
    const fs::path dir = tmp / name;
    write_cohort(cohort, dir);
    return dir / "manifest.json";
}

TEST(Runner, CvRunProducesFiveFoldsPerCell) {
    TempDir tmp("exp");
    std::vector<DatasetRef> refs = {
        {"S1", write_synth_dataset(tmp, "S1", 1), {}, ""},
        {"S2", write_synth_dataset(tmp, "S2", 2), {}, ""},
    };
    ExperimentRunner runner(refs, linear_factory());
    ExperimentSpec spec;
    spec.name = "mono:S1";
    spec.train_sets = {"S1"};
    spec.eval_sets = {"S1", "S2"};
    spec.seed = 3;
    auto res = runner.run(spec);
    ASSERT_EQ(res.cells.size(), 2u);
    for (const auto& cell : res.cells) {
        EXPECT_EQ(cell.fold_f1.size(), 5u);
        EXPECT_EQ(cell.fold_ua.size(), 5u);
        EXPECT_EQ(cell.fold_acc.size(), 5u);
        for (double v : cell.fold_f1) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        EXPECT_GE(cell.f1().stddev, 0.0);
    }
    EXPECT_EQ(res.cells[0].eval_set, "S1");
    EXPECT_EQ(res.cells[1].eval_set, "S2");
}

TEST(Runner, DeterministicAcrossRuns) {
    TempDir tmp("exp");
    std::vector<DatasetRef> refs = {{"S1", write_synth_dataset(tmp, "S1", 5), {}, ""}};
    ExperimentSpec spec;
    spec.name = "mono:S1";
    spec.train_sets = {"S1"};
    spec.eval_sets = {"S1"};
    spec.seed = 11;
    ExperimentRunner r1(refs, linear_factory());
    ExperimentRunner r2(refs, linear_factory());
    auto a = results_to_json({r1.run(spec)});
    auto b = results_to_json({r2.run(spec)});
    EXPECT_EQ(a.dump(), b.dump());
}

TEST(Runner, SharedFoldGroupKeepsVariantsAligned) {
    TempDir tmp("exp");
    auto manifest = write_synth_dataset(tmp, "S1", 9);
    std::vector<DatasetRef> refs = {
        {"S1-all", manifest, {}, "g"},
        {"S1-spirals", manifest, {"Spiral"}, "g"},
    };
    ExperimentRunner runner(refs, linear_factory());
    auto plan = runner.fold_plan_for_group(
        "g", {DiagnosticClass::PD, DiagnosticClass::CTL}, 5, 0);
    EXPECT_EQ(plan.fold_of_subject.size(), 12u);

    // training on the full variant while evaluating the restricted one must
    // not leak subjects
    ExperimentSpec spec;
    spec.name = "multi";
    spec.train_sets = {"S1-all"};
    spec.eval_sets = {"S1-spirals"};
    EXPECT_NO_THROW(runner.run(spec));
}

TEST(Runner, SubjectLeakDetected) {
    TempDir tmp("exp");
    auto manifest = write_synth_dataset(tmp, "S1", 10, 10);
    // Y: a subset of X's subjects registered as an independent fold group.
    // The two groups deal folds over different subject pools, so shared
    // subjects land in different folds and the audit must fire.
    auto mx = load_manifest(manifest);
    DatasetManifest my = mx.filtered([](const ManifestEntry& e) {
        return e.subject_id.back() <= '5';  // subjects *_0..*_5 of each class
    });
    const fs::path manifest_y = manifest.parent_path() / "manifest_y.json";
    save_manifest(my, manifest_y);
    std::vector<DatasetRef> refs = {
        {"X", manifest, {}, "gx"},
        {"Y", manifest_y, {}, "gy"},
    };
    ExperimentRunner runner(refs, linear_factory());
    ExperimentSpec spec;
    spec.name = "mono:X";
    spec.train_sets = {"X"};
    spec.eval_sets = {"Y"};
    spec.seed = 1;
    try {
        runner.run(spec);
        FAIL() << "expected SubjectLeak";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "SubjectLeak");
    }
}

TEST(Runner, CrossProtocolTrainsOnceAndEvaluatesWhole) {
    TempDir tmp("exp");
    std::vector<DatasetRef> refs = {
        {"S1", write_synth_dataset(tmp, "S1", 21, 8), {}, ""},
        {"S2", write_synth_dataset(tmp, "S2", 22, 8), {}, ""},
        {"S3", write_synth_dataset(tmp, "S3", 23, 6), {}, ""},
    };
    ExperimentRunner runner(refs, linear_factory());
    ExperimentSpec spec;
    spec.name = "cross:S3";
    spec.train_sets = {"S1", "S2"};
    spec.eval_sets = {"S3"};
    spec.protocol = Protocol::train_once_eval_external;
    spec.seed = 2;
    auto res = runner.run(spec);
    ASSERT_EQ(res.cells.size(), 1u);
    // single training run: one metric value, not five
    EXPECT_EQ(res.cells[0].fold_f1.size(), 1u);
    // all 12 eval samples scored
    EXPECT_EQ(res.cells[0].acc().stddev, 0.0);
}

TEST(NlsSuite, PerTaskResultsAndMissingTask) {
    TempDir tmp("exp");
    // two tasks, 6 subjects per class, one recording per subject per task
    DatasetManifest m;
    m.dataset_name = "NLS";
    const fs::path dir = tmp / "nls";
    fs::create_directories(dir);
    const std::vector<std::string> tasks = {"SpiralDom", "CopyText"};
    int uid = 0;
    for (auto cls : {DiagnosticClass::PD, DiagnosticClass::CTL})
        for (int s = 0; s < 6; ++s) {
            const std::string subject = to_string(cls) + std::to_string(s);
            for (const auto& task : tasks) {
                SynthParams p;
                p.turns = 3;
                p.seed = uid;
                if (cls == DiagnosticClass::PD) {
                    p.tremor_amp = 2.0;
                    p.slowdown = 0.3;
                }
                auto rec = generate_recording(p, subject, task, "NLS");
                const std::string fname = "r" + std::to_string(uid++) + ".txt";
                save_recording(rec, dir / fname);
                ManifestEntry e;
                e.sample_id = fname;
                e.subject_id = subject;
                e.diagnosis = cls;
                e.task_id = task;
                e.modality = Modality::timeseries;
                e.path = fname;
                m.entries.push_back(e);
            }
        }
    save_manifest(m, dir / "manifest.json");
    DatasetRef ref{"NLS", dir / "manifest.json", {}, ""};

    auto results = run_nls_task_suite(ref, linear_factory(),
                                      {DiagnosticClass::PD, DiagnosticClass::CTL}, 0,
                                      tasks);
    ASSERT_EQ(results.size(), 2u);
    EXPECT_EQ(results[0].task, "SpiralDom");
    EXPECT_EQ(results[1].task, "CopyText");
    for (const auto& r : results) EXPECT_EQ(r.cell.fold_f1.size(), 5u);

    auto table = render_task_table(results);
    EXPECT_NE(table.find("| Task | Acc | F1 |"), std::string::npos);
    EXPECT_NE(table.find("| SpiralDom | "), std::string::npos);

    try {
        run_nls_task_suite(ref, linear_factory(),
                           {DiagnosticClass::PD, DiagnosticClass::CTL}, 0,
                           {"SpiralDom", "DrawClock"});
        FAIL() << "expected MissingTask";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "MissingTask");
        EXPECT_NE(std::string(e.what()).find("DrawClock"), std::string::npos);
    }
}

ExperimentResult fake_result(const std::string& name,
                             const std::vector<std::pair<std::string, double>>& cells) {
    ExperimentResult r;
    r.name = name;
    r.spec_digest = "d";
    for (const auto& [col, f1] : cells) {
        CellResult c;
        c.experiment = name;
        c.eval_set = col;
        c.fold_f1 = {f1};
        c.fold_ua = {f1};
        c.fold_acc = {f1};
        r.cells.push_back(c);
    }
    return r;
}

TEST(Report, TransferTableLayoutAndBolding) {
    std::vector<std::string> cols = {"A", "B"};
    std::vector<ExperimentResult> results = {
        fake_result("mono:A", {{"A", 0.80}, {"B", 0.60}}),
        fake_result("mono:B", {{"A", 0.80}, {"B", 0.70}}),  // ties A with the row above
        fake_result("cross:B", {{"B", 0.75}}),              // cross rows may be sparse
    };
    auto table = render_transfer_table(results, cols);
    std::istringstream in(table);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "| Training set | A | B |");
    std::getline(in, line);
    EXPECT_EQ(line, "|---|---|---|");
    std::getline(in, line);
    // tie on column A bolds the earlier row
    EXPECT_EQ(line, "| mono:A | **80.0** | 60.0 |");
    std::getline(in, line);
    EXPECT_EQ(line, "| mono:B | 80.0 | 70.0 |");
    std::getline(in, line);
    EXPECT_EQ(line, "| cross:B | - | **75.0** |");
}

TEST(Report, IncompleteResultsRejected) {
    std::vector<std::string> cols = {"A", "B"};
    std::vector<ExperimentResult> results = {fake_result("mono:A", {{"A", 0.8}})};
    try {
        render_transfer_table(results, cols);
        FAIL() << "expected IncompleteResults";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "IncompleteResults");
    }
}

TEST(Report, ResultsJsonRoundTrip) {
    std::vector<ExperimentResult> results = {
        fake_result("mono:A", {{"A", 0.8}, {"B", 0.6}})};
    auto j = results_to_json(results);
    auto back = results_from_json(j);
    EXPECT_EQ(results_to_json(back).dump(), j.dump());
}

TEST(Report, EmitWritesBothArtifacts) {
    TempDir tmp("exp");
    std::vector<ExperimentResult> results = {fake_result("mono:A", {{"A", 0.8}})};
    emit_report(results, {"A"}, tmp / "report");
    EXPECT_TRUE(fs::exists(tmp / "report/results.json"));
    auto table = read_text_file(tmp / "report/transfer_table.md");
    EXPECT_NE(table.find("**80.0**"), std::string::npos);
}

TEST(LinearBackend, SeparatesIntensityClasses) {
    std::vector<LabeledImage> train, test;
    for (int i = 0; i < 20; ++i) {
        LabeledImage s;
        s.label = i % 2;
        s.image = GrayImage(32, 32, s.label ? 60 : 200);
        s.image.px[i] = 128;  // a little variety
        (i < 14 ? train : test).push_back(s);
    }
    LinearPixelBackend backend;
    backend.fit(train, {}, 0);
    auto pred = backend.predict(test);
    for (std::size_t i = 0; i < test.size(); ++i) EXPECT_EQ(pred[i], test[i].label);
}

}  // namespace
