#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neuroink/backend.hpp"
#include "neuroink/core.hpp"
#include "neuroink/imageprep.hpp"
#include "neuroink/metrics.hpp"
#include "neuroink/raster.hpp"
#include "neuroink/splits.hpp"

namespace neuroink {

// ---------------------------------------------------------------------------
// Dataset registry
// ---------------------------------------------------------------------------

struct DatasetRef {
    std::string name;
    fs::path manifest_path;
    std::vector<std::string> tasks;  // empty = all tasks
    // Datasets sharing a fold_group share one subject->fold assignment, so a
    // task-restricted variant stays subject-disjoint from its full sibling.
    std::string fold_group;
};

struct LoadedDataset {
    DatasetRef ref;
    DatasetManifest manifest;  // task filter already applied
    fs::path base_dir;
};

inline LoadedDataset load_dataset(const DatasetRef& ref) {
    LoadedDataset ds;
    ds.ref = ref;
    if (ds.ref.fold_group.empty()) ds.ref.fold_group = ref.name;
    ds.manifest = load_manifest(ref.manifest_path);
    ds.base_dir = ref.manifest_path.has_parent_path() ? ref.manifest_path.parent_path()
                                                      : fs::path(".");
    if (!ref.tasks.empty()) {
        DatasetManifest filtered;
        filtered.dataset_name = ds.manifest.dataset_name;
        filtered.has_template = ds.manifest.has_template;
        for (const auto& e : ds.manifest.entries)
            if (std::find(ref.tasks.begin(), ref.tasks.end(), e.task_id) != ref.tasks.end())
                filtered.entries.push_back(e);
        ds.manifest = std::move(filtered);
    }
    return ds;
}

// Materializes manifest entries into model-ready images: time-series entries
// are rasterized, image entries run through the preprocessing chain. Cached
// per (dataset, sample).
class SampleCache {
public:
    SampleCache(RenderParams raster, PrepParams prep)
        : raster_(raster), prep_(prep) {}

    const GrayImage& get(const LoadedDataset& ds, const ManifestEntry& e) {
        const std::string key = ds.ref.name + "/" + e.sample_id;
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        GrayImage img;
        if (e.modality == Modality::timeseries) {
            InkRecording rec = load_recording(ds.base_dir / e.path);
            img = render(rec, raster_).pixels;
        } else {
            img = prep_image(load_image_gray(ds.base_dir / e.path), prep_).pixels;
        }
        return cache_.emplace(key, std::move(img)).first->second;
    }

    LabeledImage labeled(const LoadedDataset& ds, const ManifestEntry& e,
                         DiagnosticClass positive) {
        LabeledImage s;
        s.image = get(ds, e);
        s.label = e.diagnosis == positive ? 1 : 0;
        s.sample_id = ds.ref.name + "/" + e.sample_id;
        s.subject_id = e.subject_id;
        s.dataset = ds.ref.name;
        return s;
    }

private:
    RenderParams raster_;
    PrepParams prep_;
    std::map<std::string, GrayImage> cache_;
};

// ---------------------------------------------------------------------------
// Experiment specs and matrix expansion
// ---------------------------------------------------------------------------

enum class Protocol { cv5, train_once_eval_external };

struct ExperimentSpec {
    std::string name;
    std::vector<std::string> train_sets;
    std::vector<std::string> eval_sets;
    std::pair<DiagnosticClass, DiagnosticClass> classes{DiagnosticClass::PD,
                                                        DiagnosticClass::CTL};
    Protocol protocol = Protocol::cv5;
    int k = 5;
    std::uint64_t seed = 0;

    void validate() const {
        if (train_sets.empty() || eval_sets.empty())
            throw Error::data("SpecConflict", name + ": empty train or eval set list");
        if (protocol == Protocol::train_once_eval_external)
            for (const auto& e : eval_sets)
                if (std::find(train_sets.begin(), train_sets.end(), e) != train_sets.end())
                    throw Error::data("SpecConflict",
                                      name + ": eval set '" + e + "' also in train sets");
    }

    std::string digest() const {
        std::ostringstream ss;
        ss << name << '|';
        for (const auto& t : train_sets) ss << t << ',';
        ss << '|';
        for (const auto& e : eval_sets) ss << e << ',';
        ss << '|' << to_string(classes.first) << "v" << to_string(classes.second) << '|'
           << (protocol == Protocol::cv5 ? "cv5" : "cross") << '|' << k << '|' << seed;
        return fnv1a_digest(ss.str());
    }
};

struct MatrixConfig {
    std::vector<DatasetRef> datasets;  // report columns, in order
    // Optional unrestricted sibling (e.g. all NLS tasks) used by the
    // "multi-dataset" row in place of its task-restricted column dataset.
    std::optional<DatasetRef> full_variant;
    std::string full_variant_replaces;
    std::pair<DiagnosticClass, DiagnosticClass> classes{DiagnosticClass::PD,
                                                        DiagnosticClass::CTL};
    int k = 5;
    std::uint64_t seed = 0;
};

// mono (one per dataset, eval everywhere), two multi rows, cross (one per
// held-out dataset): 5 datasets -> 5x5 + 2x5 + 5x1 = 40 cells.
inline std::vector<ExperimentSpec> expand_matrix(const MatrixConfig& cfg) {
    std::vector<std::string> names;
    for (const auto& d : cfg.datasets) names.push_back(d.name);

    std::vector<ExperimentSpec> specs;
    for (const auto& d : cfg.datasets) {
        ExperimentSpec s;
        s.name = "mono:" + d.name;
        s.train_sets = {d.name};
        s.eval_sets = names;
        s.classes = cfg.classes;
        s.protocol = Protocol::cv5;
        s.k = cfg.k;
        s.seed = cfg.seed;
        specs.push_back(std::move(s));
    }
    {
        ExperimentSpec s;
        s.name = "multi-dataset";
        for (const auto& n : names)
            s.train_sets.push_back(cfg.full_variant && n == cfg.full_variant_replaces
                                       ? cfg.full_variant->name
                                       : n);
        s.eval_sets = names;
        s.classes = cfg.classes;
        s.protocol = Protocol::cv5;
        s.k = cfg.k;
        s.seed = cfg.seed;
        specs.push_back(std::move(s));
    }
    {
        ExperimentSpec s;
        s.name = "multi-dataset-spirals";
        s.train_sets = names;
        s.eval_sets = names;
        s.classes = cfg.classes;
        s.protocol = Protocol::cv5;
        s.k = cfg.k;
        s.seed = cfg.seed;
        specs.push_back(std::move(s));
    }
    for (const auto& d : cfg.datasets) {
        ExperimentSpec s;
        s.name = "cross:" + d.name;
        for (const auto& n : names)
            if (n != d.name) s.train_sets.push_back(n);
        s.eval_sets = {d.name};
        s.classes = cfg.classes;
        s.protocol = Protocol::train_once_eval_external;
        s.k = cfg.k;
        s.seed = cfg.seed;
        specs.push_back(std::move(s));
    }
    for (const auto& s : specs) s.validate();
    return specs;
}

inline std::size_t cell_count(const std::vector<ExperimentSpec>& specs) {
    std::size_t n = 0;
    for (const auto& s : specs) n += s.eval_sets.size();
    return n;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

struct CellResult {
    std::string experiment;
    std::string eval_set;
    std::vector<double> fold_f1, fold_ua, fold_acc;

    MetricSummary f1() const { return aggregate_folds(fold_f1); }
    MetricSummary ua() const { return aggregate_folds(fold_ua); }
    MetricSummary acc() const { return aggregate_folds(fold_acc); }
};

struct ExperimentResult {
    std::string name;
    std::string spec_digest;
    std::vector<CellResult> cells;
};

class ExperimentRunner {
public:
    ExperimentRunner(std::vector<DatasetRef> refs, BackendFactory factory,
                     RenderParams raster = {}, PrepParams prep = {})
        : factory_(std::move(factory)), cache_(raster, prep) {
        for (auto& r : refs) {
            auto ds = load_dataset(r);
            const std::string name = ds.ref.name;
            datasets_.emplace(name, std::move(ds));
        }
    }

    const LoadedDataset& dataset(const std::string& name) const {
        auto it = datasets_.find(name);
        if (it == datasets_.end())
            throw Error::data("UnknownDataset", "no dataset named '" + name + "'");
        return it->second;
    }

    ExperimentResult run(const ExperimentSpec& spec) {
        spec.validate();
        return spec.protocol == Protocol::cv5 ? run_cv(spec) : run_cross(spec);
    }

    std::vector<ExperimentResult> run_matrix(const std::vector<ExperimentSpec>& specs) {
        std::vector<ExperimentResult> out;
        out.reserve(specs.size());
        for (const auto& s : specs) out.push_back(run(s));
        return out;
    }

    // Shared subject->fold assignment for every dataset in a fold group.
    FoldPlan fold_plan_for_group(const std::string& group,
                                 std::pair<DiagnosticClass, DiagnosticClass> classes,
                                 int k, std::uint64_t seed) {
        DatasetManifest pooled;
        pooled.dataset_name = group;
        for (const auto& [name, ds] : datasets_)
            if (ds.ref.fold_group == group)
                for (const auto& e : ds.manifest.entries) pooled.entries.push_back(e);
        if (pooled.entries.empty())
            throw Error::data("UnknownDataset", "empty fold group '" + group + "'");
        return make_fold_plan(pooled, classes, k, seed);
    }

private:
    ExperimentResult run_cv(const ExperimentSpec& spec) {
        ExperimentResult result;
        result.name = spec.name;
        result.spec_digest = spec.digest();

        std::set<std::string> involved;
        for (const auto& n : spec.train_sets) involved.insert(dataset(n).ref.fold_group);
        for (const auto& n : spec.eval_sets) involved.insert(dataset(n).ref.fold_group);
        std::map<std::string, FoldPlan> plans;
        for (const auto& g : involved)
            plans.emplace(g, fold_plan_for_group(g, spec.classes, spec.k, spec.seed));

        std::map<std::string, CellResult> cells;
        for (const auto& e : spec.eval_sets)
            cells[e] = CellResult{spec.name, e, {}, {}, {}};

        for (int fold = 0; fold < spec.k; ++fold) {
            std::vector<LabeledImage> train, val;
            for (const auto& n : spec.train_sets) {
                const auto& ds = dataset(n);
                auto lists = materialize_split(plans.at(ds.ref.fold_group), fold,
                                               ds.manifest);
                for (const auto& e : lists.train)
                    train.push_back(cache_.labeled(ds, e, spec.classes.first));
                for (const auto& e : lists.val)
                    val.push_back(cache_.labeled(ds, e, spec.classes.first));
            }
            auto backend = factory_();
            backend->fit(train, val, spec.seed + static_cast<std::uint64_t>(fold));

            for (const auto& n : spec.eval_sets) {
                const auto& ds = dataset(n);
                auto lists = materialize_split(plans.at(ds.ref.fold_group), fold,
                                               ds.manifest);
                audit_disjoint(train, val, lists.test, spec.name, n, fold);
                std::vector<LabeledImage> test;
                std::vector<int> y_true;
                for (const auto& e : lists.test) {
                    test.push_back(cache_.labeled(ds, e, spec.classes.first));
                    y_true.push_back(test.back().label);
                }
                if (test.empty())
                    throw Error::data("EmptySplit", spec.name + ": empty test fold for '" +
                                                        n + "'");
                auto y_pred = backend->predict(test);
                auto& cell = cells[n];
                cell.fold_f1.push_back(macro_f1(y_true, y_pred));
                cell.fold_ua.push_back(unweighted_accuracy(y_true, y_pred));
                cell.fold_acc.push_back(plain_accuracy(y_true, y_pred));
            }
        }
        for (const auto& n : spec.eval_sets) result.cells.push_back(cells[n]);
        return result;
    }

    // Train once on the pooled training datasets, with a 10% subject-level
    // holdout driving early stopping; evaluate on the held-out dataset whole.
    ExperimentResult run_cross(const ExperimentSpec& spec) {
        ExperimentResult result;
        result.name = spec.name;
        result.spec_digest = spec.digest();

        std::map<std::string, DiagnosticClass> pool_class;
        std::vector<std::pair<const LoadedDataset*, const ManifestEntry*>> pool;
        for (const auto& n : spec.train_sets) {
            const auto& ds = dataset(n);
            for (const auto& e : ds.manifest.entries) {
                if (e.diagnosis != spec.classes.first && e.diagnosis != spec.classes.second)
                    continue;
                pool.emplace_back(&ds, &e);
                pool_class[e.subject_id] = e.diagnosis;
            }
        }
        if (pool.empty()) throw Error::data("EmptySplit", spec.name + ": empty train pool");

        // 10% of subjects per class to validation, seeded
        std::map<DiagnosticClass, std::vector<std::string>> by_class;
        for (const auto& [s, c] : pool_class) by_class[c].push_back(s);
        std::set<std::string> val_subjects;
        for (auto& [c, subs] : by_class) {
            std::sort(subs.begin(), subs.end());
            std::mt19937_64 rng(spec.seed * 31ull + static_cast<unsigned>(c));
            std::shuffle(subs.begin(), subs.end(), rng);
            const std::size_t n_val = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::lround(0.1 * subs.size())));
            for (std::size_t i = 0; i < n_val && i + 1 < subs.size(); ++i)
                val_subjects.insert(subs[i]);
        }

        std::vector<LabeledImage> train, val;
        for (const auto& [ds, e] : pool) {
            auto s = cache_.labeled(*ds, *e, spec.classes.first);
            (val_subjects.count(e->subject_id) ? val : train).push_back(std::move(s));
        }
        auto backend = factory_();
        backend->fit(train, val, spec.seed);

        for (const auto& n : spec.eval_sets) {
            const auto& ds = dataset(n);
            std::vector<LabeledImage> test;
            std::vector<int> y_true;
            for (const auto& e : ds.manifest.entries) {
                if (e.diagnosis != spec.classes.first && e.diagnosis != spec.classes.second)
                    continue;
                test.push_back(cache_.labeled(ds, e, spec.classes.first));
                y_true.push_back(test.back().label);
            }
            if (test.empty())
                throw Error::data("EmptySplit", spec.name + ": eval set '" + n + "' empty");
            auto y_pred = backend->predict(test);
            CellResult cell{spec.name, n, {}, {}, {}};
            cell.fold_f1.push_back(macro_f1(y_true, y_pred));
            cell.fold_ua.push_back(unweighted_accuracy(y_true, y_pred));
            cell.fold_acc.push_back(plain_accuracy(y_true, y_pred));
            result.cells.push_back(std::move(cell));
        }
        return result;
    }

    static void audit_disjoint(const std::vector<LabeledImage>& train,
                               const std::vector<LabeledImage>& val,
                               const std::vector<ManifestEntry>& test,
                               const std::string& spec, const std::string& eval_set,
                               int fold) {
        std::set<std::string> seen;
        for (const auto& s : train) seen.insert(s.subject_id);
        for (const auto& s : val) seen.insert(s.subject_id);
        for (const auto& e : test)
            if (seen.count(e.subject_id))
                throw Error::runtime(
                    "SubjectLeak", spec + " fold " + std::to_string(fold) + " eval '" +
                                       eval_set + "': subject '" + e.subject_id +
                                       "' appears in training and test");
    }

    std::map<std::string, LoadedDataset> datasets_;
    BackendFactory factory_;
    SampleCache cache_;
};

// ---------------------------------------------------------------------------
// NLS per-task suite
// ---------------------------------------------------------------------------

struct TaskResult {
    std::string task;
    CellResult cell;
};

inline std::vector<TaskResult> run_nls_task_suite(
    const DatasetRef& nls, BackendFactory factory,
    std::pair<DiagnosticClass, DiagnosticClass> classes, std::uint64_t seed,
    const std::vector<std::string>& tasks, RenderParams raster = {},
    PrepParams prep = {}) {
    auto full = load_dataset(nls);
    std::set<std::string> present;
    for (const auto& e : full.manifest.entries) present.insert(e.task_id);
    for (const auto& t : tasks)
        if (!present.count(t))
            throw Error::data("MissingTask", t);

    std::vector<TaskResult> out;
    for (const auto& t : tasks) {
        DatasetRef ref = nls;
        ref.name = nls.name + ":" + t;
        ref.fold_group = ref.name;
        ref.tasks = {t};
        ExperimentRunner runner({ref}, factory, raster, prep);
        ExperimentSpec spec;
        spec.name = "nls-task:" + t;
        spec.train_sets = {ref.name};
        spec.eval_sets = {ref.name};
        spec.classes = classes;
        spec.protocol = Protocol::cv5;
        spec.seed = seed;
        auto res = runner.run(spec);
        out.push_back({t, res.cells.at(0)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline json results_to_json(const std::vector<ExperimentResult>& results) {
    json out = json::array();
    for (const auto& r : results) {
        json cells = json::array();
        for (const auto& c : r.cells)
            cells.push_back({{"experiment", c.experiment},
                             {"eval_set", c.eval_set},
                             {"fold_f1", c.fold_f1},
                             {"fold_ua", c.fold_ua},
                             {"fold_acc", c.fold_acc},
                             {"f1_mean", c.f1().mean},
                             {"f1_std", c.f1().stddev},
                             {"ua_mean", c.ua().mean},
                             {"acc_mean", c.acc().mean}});
        out.push_back({{"name", r.name},
                       {"spec_digest", r.spec_digest},
                       {"cells", std::move(cells)}});
    }
    return out;
}

inline std::vector<ExperimentResult> results_from_json(const json& j) {
    std::vector<ExperimentResult> out;
    for (const auto& jr : j) {
        ExperimentResult r;
        r.name = jr.at("name").get<std::string>();
        r.spec_digest = jr.at("spec_digest").get<std::string>();
        for (const auto& jc : jr.at("cells")) {
            CellResult c;
            c.experiment = jc.at("experiment").get<std::string>();
            c.eval_set = jc.at("eval_set").get<std::string>();
            c.fold_f1 = jc.at("fold_f1").get<std::vector<double>>();
            c.fold_ua = jc.at("fold_ua").get<std::vector<double>>();
            c.fold_acc = jc.at("fold_acc").get<std::vector<double>>();
            r.cells.push_back(std::move(c));
        }
        out.push_back(std::move(r));
    }
    return out;
}

// Transferability grid: one row per experiment, one column per eval dataset,
// mean macro F1 as a percent. Best cell per column is bolded (**v**), ties
// broken toward the earlier row.
inline std::string render_transfer_table(const std::vector<ExperimentResult>& results,
                                         const std::vector<std::string>& columns) {
    std::map<std::string, std::map<std::string, double>> grid;  // row -> col -> f1%
    std::vector<std::string> rows;
    for (const auto& r : results) {
        rows.push_back(r.name);
        for (const auto& c : r.cells)
            grid[r.name][c.eval_set] = to_percent(c.f1().mean);
    }
    for (const auto& r : rows)
        for (const auto& col : columns)
            if (r.rfind("cross:", 0) != 0 && !grid[r].count(col))
                throw Error::data("IncompleteResults",
                                  "missing cell (" + r + ", " + col + ")");

    std::map<std::string, std::string> best_row;  // column -> bolded row
    for (const auto& col : columns) {
        double best = -1.0;
        for (const auto& r : rows) {
            auto it = grid[r].find(col);
            if (it != grid[r].end() && it->second > best) {
                best = it->second;
                best_row[col] = r;
            }
        }
    }

    std::ostringstream out;
    out << "| Training set |";
    for (const auto& col : columns) out << ' ' << col << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < columns.size(); ++i) out << "---|";
    out << '\n';
    out.setf(std::ios::fixed);
    out.precision(1);
    for (const auto& r : rows) {
        out << "| " << r << " |";
        for (const auto& col : columns) {
            auto it = grid[r].find(col);
            if (it == grid[r].end()) {
                out << " - |";
            } else if (best_row[col] == r) {
                out << " **" << it->second << "** |";
            } else {
                out << ' ' << it->second << " |";
            }
        }
        out << '\n';
    }
    return out.str();
}

inline std::string render_task_table(const std::vector<TaskResult>& tasks) {
    std::ostringstream out;
    out << "| Task | Acc | F1 |\n|---|---|---|\n";
    out.setf(std::ios::fixed);
    out.precision(1);
    for (const auto& t : tasks)
        out << "| " << t.task << " | " << to_percent(t.cell.ua().mean) << " | "
            << to_percent(t.cell.f1().mean) << " |\n";
    return out.str();
}

inline void emit_report(const std::vector<ExperimentResult>& results,
                        const std::vector<std::string>& columns,
                        const fs::path& out_dir) {
    fs::create_directories(out_dir);
    write_text_file(out_dir / "results.json", results_to_json(results).dump(2) + "\n");
    write_text_file(out_dir / "transfer_table.md",
                    render_transfer_table(results, columns));
}

}  // namespace neuroink
