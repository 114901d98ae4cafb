// Acceptance gate: nine criteria, one PASS/FAIL line each on stdout.

#include <gtest/gtest.h>

#include <chrono>
#include <random>
#include <thread>

#include "neuroink/experiments.hpp"
#include "neuroink/metrics.hpp"
#include "neuroink/raster.hpp"
#include "neuroink/splits.hpp"
#include "neuroink/synth.hpp"
#include "neuroink/torch_backend.hpp"
#include "neuroink/train.hpp"
#include "test_util.hpp"

using namespace neuroink;
using nktest::TempDir;

namespace {

class Timer {
public:
    double seconds() const {
        return std::chrono::duration<double>(clock::now() - start_).count();
    }

private:
    using clock = std::chrono::steady_clock;
    clock::time_point start_ = clock::now();
};

void verdict(int n, const std::string& what, bool ok, double secs) {
    printf("criterion %d [%s]: %s (%.1fs)\n", n, what.c_str(), ok ? "PASS" : "FAIL",
           secs);
    fflush(stdout);
}

#define REPORT(n, what, timer) \
    verdict(n, what, !::testing::Test::HasFailure(), (timer).seconds())

InkRecording stacked_dots(int n) {
    InkRecording rec;
    for (int i = 0; i < n; ++i) {
        PenSample s;
        s.t = 10.0 * i;
        s.x = 3.0;
        s.y = 4.0;
        s.pressure = 512.0;
        s.pen_down = true;
        rec.samples.push_back(s);
    }
    return rec;
}

TEST(Acceptance, Criterion1CompositingLaw) {
    Timer timer;
    RenderParams params;
    for (int n = 1; n <= 10; ++n) {
        auto img = render(stacked_dots(n), params);
        const auto expected =
            static_cast<std::uint8_t>(std::lround(255.0 * std::pow(0.9, n)));
        EXPECT_EQ(img.pixels.at(112, 112), expected) << "n=" << n;
    }
    // spot values from the compositing law
    EXPECT_EQ(render(stacked_dots(1), params).pixels.at(112, 112), 230);
    EXPECT_EQ(render(stacked_dots(5), params).pixels.at(112, 112), 151);
    EXPECT_LT(timer.seconds(), 1.0);
    REPORT(1, "compositing law", timer);
}

InkRecording random_recording(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> coord(-50.0, 50.0);
    std::uniform_real_distribution<double> press(1.0, 1024.0);
    InkRecording rec;
    for (int i = 0; i < n; ++i) {
        PenSample s;
        s.t = 10.0 * i;
        s.x = coord(rng);
        s.y = coord(rng);
        s.pressure = press(rng);
        s.pen_down = true;
        rec.samples.push_back(s);
    }
    return rec;
}

TEST(Acceptance, Criterion2RasterizerInvariance) {
    Timer timer;
    std::mt19937_64 rng(2024);
    RenderParams params;
    std::uniform_real_distribution<double> scale(0.1, 10.0);
    std::uniform_real_distribution<double> shift(-1000.0, 1000.0);
    int mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        auto rec = random_recording(rng, 20 + static_cast<int>(rng() % 180));
        auto moved = rec;
        const double s = scale(rng), dx = shift(rng), dy = shift(rng);
        for (auto& p : moved.samples) {
            p.x = p.x * s + dx;
            p.y = p.y * s + dy;
        }
        if (!(render(rec, params).pixels == render(moved, params).pixels)) ++mismatches;
    }
    EXPECT_EQ(mismatches, 0);
    EXPECT_LT(timer.seconds(), 30.0);
    REPORT(2, "rasterizer invariance", timer);
}

DatasetManifest random_manifest(std::mt19937_64& rng) {
    DatasetManifest m;
    m.dataset_name = "rand";
    auto add_class = [&](DiagnosticClass cls, int n_subjects) {
        for (int s = 0; s < n_subjects; ++s) {
            const int n_samples = 1 + static_cast<int>(rng() % 10);
            for (int k = 0; k < n_samples; ++k) {
                ManifestEntry e;
                e.subject_id = to_string(cls) + std::to_string(s);
                e.sample_id = e.subject_id + "_" + std::to_string(k);
                e.diagnosis = cls;
                e.task_id = "Spiral";
                e.modality = Modality::timeseries;
                e.path = "r.txt";
                m.entries.push_back(std::move(e));
            }
        }
    };
    // unbalanced: independent sizes in [5, 100]
    add_class(DiagnosticClass::PD, 5 + static_cast<int>(rng() % 96));
    add_class(DiagnosticClass::CTL, 5 + static_cast<int>(rng() % 96));
    return m;
}

TEST(Acceptance, Criterion3SplitAudit) {
    Timer timer;
    std::mt19937_64 rng(33);
    constexpr std::pair<DiagnosticClass, DiagnosticClass> classes{DiagnosticClass::PD,
                                                                  DiagnosticClass::CTL};
    int violations = 0, count_errors = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        auto m = random_manifest(rng);
        const std::uint64_t seed = rng();
        auto plan = make_fold_plan(m, classes, 5, seed);

        // per-fold class counts within +-1 of the stratified ideal
        std::map<DiagnosticClass, std::map<int, int>> counts;
        std::map<std::string, DiagnosticClass> cls_of;
        for (const auto& e : m.entries) cls_of[e.subject_id] = e.diagnosis;
        std::map<DiagnosticClass, int> totals;
        for (const auto& [s, f] : plan.fold_of_subject) {
            ++counts[cls_of[s]][f];
            ++totals[cls_of[s]];
        }
        for (const auto& [cls, total] : totals)
            for (int f = 0; f < 5; ++f) {
                const int n = counts[cls][f];
                if (n < total / 5 || n > (total + 4) / 5) ++count_errors;
            }

        // subject-disjointness across every fold's materialized split
        for (int f = 0; f < 5; ++f) {
            auto split = materialize_split(plan, f, m);
            std::set<std::string> train_s, val_s;
            for (const auto& e : split.train) train_s.insert(e.subject_id);
            for (const auto& e : split.val) val_s.insert(e.subject_id);
            for (const auto& e : split.test)
                if (train_s.count(e.subject_id) || val_s.count(e.subject_id)) ++violations;
            for (const auto& s : val_s)
                if (train_s.count(s)) ++violations;
        }

        // determinism spot checks
        if (trial % 100 == 0) {
            auto again = make_fold_plan(m, classes, 5, seed);
            EXPECT_EQ(again.to_json().dump(), plan.to_json().dump());
        }
    }
    EXPECT_EQ(violations, 0);
    EXPECT_EQ(count_errors, 0);
    EXPECT_LT(timer.seconds(), 60.0);
    REPORT(3, "split audit", timer);
}

TEST(Acceptance, Criterion4MetricsOracle) {
    Timer timer;
    // worked example TP=3 FP=1 FN=1 TN=5
    std::vector<int> yt{1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
    std::vector<int> yp{1, 1, 1, 0, 1, 0, 0, 0, 0, 0};
    EXPECT_NEAR(macro_f1(yt, yp), 0.7917, 5e-5);
    EXPECT_NEAR(unweighted_accuracy(yt, yp), 0.7917, 5e-5);

    auto oracle = [](const std::vector<int>& t, const std::vector<int>& p, bool f1) {
        double sum = 0.0;
        for (int cls : {0, 1}) {
            double tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < t.size(); ++i) {
                if (p[i] == cls && t[i] == cls) ++tp;
                if (p[i] == cls && t[i] != cls) ++fp;
                if (p[i] != cls && t[i] == cls) ++fn;
            }
            if (f1) {
                const double denom = 2 * tp + fp + fn;
                sum += denom > 0 ? 2 * tp / denom : 0.0;
            } else {
                sum += tp + fn > 0 ? tp / (tp + fn) : 0.0;
            }
        }
        return sum / 2.0;
    };
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng() % 50;
        std::vector<int> a(n), b(n);
        for (auto& v : a) v = static_cast<int>(rng() % 2);
        for (auto& v : b) v = static_cast<int>(rng() % 2);
        EXPECT_NEAR(macro_f1(a, b), oracle(a, b, true), 1e-12);
        EXPECT_NEAR(unweighted_accuracy(a, b), oracle(a, b, false), 1e-12);
    }
    REPORT(4, "metrics oracle", timer);
}

std::vector<LabeledImage> rendered_cohort_samples(int n_per_class, std::uint64_t seed) {
    auto cohort = generate_cohort(n_per_class, patient_profile(), control_profile(), seed);
    RenderParams params;
    std::vector<LabeledImage> out;
    for (std::size_t i = 0; i < cohort.recordings.size(); ++i) {
        LabeledImage s;
        s.image = render(cohort.recordings[i], params).pixels;
        s.label = cohort.manifest.entries[i].diagnosis == DiagnosticClass::PD ? 1 : 0;
        s.sample_id = cohort.manifest.entries[i].sample_id;
        s.subject_id = cohort.manifest.entries[i].subject_id;
        s.dataset = "synth";
        out.push_back(std::move(s));
    }
    return out;
}

TEST(Acceptance, Criterion5OverfitSanity) {
    Timer timer;
    torch::manual_seed(5);
    auto samples = rendered_cohort_samples(8, 5);  // 16 images
    ASSERT_EQ(samples.size(), 16u);

    Classifier model(256);
    TrainConfig cfg;  // batch 16, up to 50 epochs: the published recipe
    // The recipe's 1e-5 lr is calibrated for a pretrained backbone; from the
    // random init used here the same 50 steps need a proportionally larger lr.
    const double overfit_lr = 1e-3;
    torch::optim::AdamW optim(model->parameters(),
                              torch::optim::AdamWOptions(overfit_lr)
                                  .betas({cfg.beta1, cfg.beta2})
                                  .weight_decay(cfg.weight_decay));
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto x = neuroink::detail::images_tensor(samples, idx);
    auto y = neuroink::detail::labels_tensor(samples, idx);

    double train_acc = 0.0;
    int epochs_used = 0;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        epochs_used = epoch;
        model->train();
        optim.zero_grad();
        auto loss = torch::nn::functional::cross_entropy(model->forward(x), y);
        ASSERT_TRUE(std::isfinite(loss.item<double>()));
        loss.backward();
        optim.step();

        train_acc = evaluate(model, samples, cfg.batch_size).accuracy;
        if (train_acc == 1.0) break;
    }
    EXPECT_DOUBLE_EQ(train_acc, 1.0) << "after " << epochs_used << " epochs";
    EXPECT_LE(epochs_used, 50);
    EXPECT_LT(timer.seconds(), 600.0);
    REPORT(5, "overfit sanity", timer);
}

struct BenchmarkOutcome {
    std::string plan_json;
    std::string image_digest;  // digest over every rendered image's bytes
    std::vector<double> fold_f1;
    double mean_f1 = 0.0;
};

// Criterion 6 pipeline, reused twice by criterion 9.
BenchmarkOutcome run_synthetic_benchmark(std::uint64_t seed) {
    TempDir tmp("accept");
    auto cohort = generate_cohort(60, patient_profile(), control_profile(), seed);
    write_cohort(cohort, tmp.path());

    RenderParams rp;
    std::string ink;
    for (const auto& rec : cohort.recordings) {
        auto img = render(rec, rp).pixels;
        ink.append(reinterpret_cast<const char*>(img.px.data()), img.px.size());
    }

    DatasetRef ref{"synth", tmp / "manifest.json", {}, ""};
    TorchBackendConfig cfg;
    cfg.freeze_backbone = true;
    cfg.model.init_seed = seed;
    auto cache = std::make_shared<FeatureCache>();
    ExperimentRunner runner({ref},
                            [cfg, cache] { return std::make_unique<TorchBackend>(cfg, cache); },
                            rp);

    ExperimentSpec spec;
    spec.name = "mono:synth";
    spec.train_sets = {"synth"};
    spec.eval_sets = {"synth"};
    spec.seed = seed;
    auto plan = runner.fold_plan_for_group(
        "synth", {DiagnosticClass::PD, DiagnosticClass::CTL}, 5, seed);
    auto res = runner.run(spec);

    BenchmarkOutcome out;
    out.plan_json = plan.to_json().dump();
    out.image_digest = fnv1a_digest(ink);
    out.fold_f1 = res.cells.at(0).fold_f1;
    out.mean_f1 = res.cells.at(0).f1().mean;
    return out;
}

TEST(Acceptance, Criterion6SyntheticBenchmark) {
    Timer timer;
    torch::set_num_threads(std::max(1u, std::thread::hardware_concurrency() / 2));
    auto out = run_synthetic_benchmark(2026);
    ASSERT_EQ(out.fold_f1.size(), 5u);
    EXPECT_GE(out.mean_f1, 0.90) << "fold F1: " << json(out.fold_f1).dump();
    EXPECT_LT(timer.seconds(), 1200.0);
    REPORT(6, "synthetic benchmark", timer);
}

TEST(Acceptance, Criterion7EarlyStoppingContract) {
    Timer timer;
    // worked patience arithmetic: improvements at 1 and 2, stop after 12
    std::vector<double> losses{1.0, 0.9};
    for (int i = 0; i < 20; ++i) losses.push_back(0.9);
    auto out = simulate_early_stopping(losses, 10, 50);
    EXPECT_EQ(out.stop_epoch, 12);
    EXPECT_EQ(out.best_epoch, 2);
    EXPECT_EQ(out.reason, "early_stop");

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> seq(10 + rng() % 50);
        for (auto& v : seq) v = std::round(d(rng) * 10.0) / 10.0;
        const int patience = 2 + static_cast<int>(rng() % 8);
        auto got = simulate_early_stopping(seq, patience, 50);

        // independent replay
        double best = std::numeric_limits<double>::infinity();
        int best_epoch = 0, streak = 0, stop_epoch = 0;
        std::string reason = "max_epochs";
        for (int e = 1; e <= std::min<int>(50, static_cast<int>(seq.size())); ++e) {
            stop_epoch = e;
            if (seq[e - 1] < best) {
                best = seq[e - 1];
                best_epoch = e;
                streak = 0;
            } else if (++streak >= patience) {
                reason = "early_stop";
                break;
            }
        }
        EXPECT_EQ(got.stop_epoch, stop_epoch);
        EXPECT_EQ(got.best_epoch, best_epoch);
        EXPECT_EQ(got.reason, reason);
    }
    REPORT(7, "early stopping contract", timer);
}

TEST(Acceptance, Criterion8MatrixBookkeeping) {
    Timer timer;
    TempDir tmp("accept");
    MatrixConfig mc;
    std::vector<std::string> columns;
    for (int i = 0; i < 5; ++i) {
        const std::string name = "D" + std::to_string(i);
        auto cohort = generate_cohort(6, patient_profile(), control_profile(), 50 + i,
                                      DiagnosticClass::PD, name);
        write_cohort(cohort, tmp / name);
        mc.datasets.push_back({name, tmp / name / "manifest.json", {}, ""});
        columns.push_back(name);
    }
    auto specs = expand_matrix(mc);
    EXPECT_EQ(specs.size(), 12u);       // 5 mono + 2 multi + 5 cross rows
    EXPECT_EQ(cell_count(specs), 40u);  // dry-run count

    ExperimentRunner runner(mc.datasets,
                            [] { return std::make_unique<LinearPixelBackend>(); });
    auto results = runner.run_matrix(specs);
    std::size_t executed = 0;
    for (const auto& r : results) executed += r.cells.size();
    EXPECT_EQ(executed, 40u);  // executed count agrees with the dry run

    // Table-5 layout: training-set rows x dataset columns, bold best per column
    auto table = render_transfer_table(results, columns);
    std::istringstream in(table);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "| Training set | D0 | D1 | D2 | D3 | D4 |");
    std::vector<std::string> body;
    for (std::string line; std::getline(in, line);) body.push_back(line);
    ASSERT_EQ(body.size(), 13u);  // separator + 12 experiment rows
    EXPECT_EQ(body[1].rfind("| mono:D0 |", 0), 0u);
    EXPECT_EQ(body[6].rfind("| multi-dataset |", 0), 0u);
    EXPECT_EQ(body[7].rfind("| multi-dataset-spirals |", 0), 0u);
    EXPECT_EQ(body[8].rfind("| cross:D0 |", 0), 0u);
    // exactly one bolded winner per column -> 5 cells, 2 "**" markers each
    std::size_t bold_markers = 0;
    for (std::size_t pos = table.find("**"); pos != std::string::npos;
         pos = table.find("**", pos + 2))
        ++bold_markers;
    EXPECT_EQ(bold_markers, 10u);
    REPORT(8, "matrix bookkeeping", timer);
}

TEST(Acceptance, Criterion9Determinism) {
    Timer timer;
    auto a = run_synthetic_benchmark(99);
    auto b = run_synthetic_benchmark(99);
    EXPECT_EQ(a.plan_json, b.plan_json);
    EXPECT_EQ(a.image_digest, b.image_digest);
    ASSERT_EQ(a.fold_f1.size(), b.fold_f1.size());
    for (std::size_t i = 0; i < a.fold_f1.size(); ++i)
        EXPECT_NEAR(a.fold_f1[i], b.fold_f1[i], 1e-6);
    EXPECT_NEAR(a.mean_f1, b.mean_f1, 1e-6);
    REPORT(9, "determinism", timer);
}

}  // namespace
