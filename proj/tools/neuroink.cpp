// neuroink: handwriting-based neurological disorder screening pipeline.
// Subcommands: ingest, rasterize, prep-images, synth, train, run, report.

#include <cstdlib>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "neuroink/core.hpp"
#include "neuroink/experiments.hpp"
#include "neuroink/imageprep.hpp"
#include "neuroink/ingest.hpp"
#include "neuroink/raster.hpp"
#include "neuroink/synth.hpp"
#include "neuroink/torch_backend.hpp"
#include "neuroink/train.hpp"

namespace nk = neuroink;
using nk::json;
namespace fs = std::filesystem;

namespace {

std::pair<nk::DiagnosticClass, nk::DiagnosticClass> parse_class_pair(
    const std::string& s) {
    auto comma = s.find(',');
    if (comma == std::string::npos)
        throw nk::Error::usage("UsageError", "--classes expects e.g. PD,CTL");
    return {nk::parse_class(s.substr(0, comma)), nk::parse_class(s.substr(comma + 1))};
}

// Resume-by-digest: an output directory is complete when its digest file
// matches the effective parameters and the declared outputs still exist.
bool outputs_current(const fs::path& out_dir, const std::string& digest,
                     const std::vector<fs::path>& outputs) {
    const fs::path digest_file = out_dir / "params.digest";
    if (!fs::exists(digest_file)) return false;
    if (nk::read_text_file(digest_file) != digest + "\n") return false;
    for (const auto& o : outputs)
        if (!fs::exists(o)) return false;
    return true;
}

void write_digest(const fs::path& out_dir, const std::string& digest) {
    nk::write_text_file(out_dir / "params.digest", digest + "\n");
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

// --------------------------------------------------------------------------

int cmd_ingest(const std::string& dataset, const fs::path& root, const fs::path& out,
               const std::string& spec_file) {
    nk::AdapterSpec spec = spec_file.empty()
                               ? nk::builtin_adapter_spec(dataset)
                               : nk::adapter_spec_from_json(
                                     json::parse(nk::read_text_file(spec_file)));
    nk::WarningLog warnings;
    nk::DatasetManifest manifest;
    if (spec.modality == nk::Modality::image) {
        manifest = nk::ingest_image_dataset(root, spec, &warnings);
        // manifest lives in --out; entries keep pointing at the source images
        for (auto& e : manifest.entries)
            e.path = fs::relative(root / e.path, out).generic_string();
        fs::create_directories(out);
    } else {
        manifest = nk::ingest_timeseries_dataset(root, spec, out, &warnings);
    }
    nk::save_manifest(manifest, out / "manifest.json");
    for (const auto& w : warnings)
        std::cerr << "warning: " << w.code << ": " << w.detail << "\n";
    auto counts = manifest.class_counts();
    std::cout << "ingested " << manifest.entries.size() << " samples";
    for (const auto& [c, n] : counts) std::cout << "  " << nk::to_string(c) << "=" << n;
    std::cout << "\n";
    return 0;
}

int cmd_rasterize(const fs::path& manifest_path, const fs::path& out,
                  const nk::RenderParams& params) {
    params.validate();
    auto manifest = nk::load_manifest(manifest_path);
    const fs::path base = manifest_path.parent_path();
    const std::string digest = params.digest();

    std::vector<fs::path> expected = {out / "manifest.json"};
    for (const auto& e : manifest.entries)
        if (e.modality == nk::Modality::timeseries)
            expected.push_back(out / (e.sample_id + ".png"));
    if (outputs_current(out, digest, expected)) {
        std::cout << "up-to-date (digest " << digest << ")\n";
        return 0;
    }

    nk::DatasetManifest rendered = manifest;
    rendered.entries.clear();
    std::size_t n = 0;
    for (const auto& e : manifest.entries) {
        if (e.modality != nk::Modality::timeseries) continue;
        auto rec = nk::load_recording(base / e.path);
        auto img = nk::render(rec, params);
        nk::save_png(img.pixels, out / (e.sample_id + ".png"));
        auto out_entry = e;
        out_entry.modality = nk::Modality::image;
        out_entry.path = e.sample_id + ".png";
        rendered.entries.push_back(out_entry);
        ++n;
    }
    nk::save_manifest(rendered, out / "manifest.json");
    write_digest(out, digest);
    std::cout << "rendered " << n << " recordings (digest " << digest << ")\n";
    return 0;
}

int cmd_prep_images(const fs::path& manifest_path, const fs::path& out,
                    const nk::PrepParams& params) {
    params.validate();
    auto manifest = nk::load_manifest(manifest_path);
    const fs::path base = manifest_path.parent_path();
    const std::string digest = params.digest();

    std::vector<fs::path> expected = {out / "manifest.json"};
    for (const auto& e : manifest.entries)
        if (e.modality == nk::Modality::image)
            expected.push_back(out / (e.sample_id + ".png"));
    if (outputs_current(out, digest, expected)) {
        std::cout << "up-to-date (digest " << digest << ")\n";
        return 0;
    }

    nk::WarningLog warnings;
    nk::DatasetManifest prepped = manifest;
    prepped.entries.clear();
    std::size_t n = 0;
    for (const auto& e : manifest.entries) {
        if (e.modality != nk::Modality::image) continue;
        auto img = nk::prep_image(nk::load_image_gray(base / e.path), params,
                                  e.sample_id, &warnings);
        nk::save_png(img.pixels, out / (e.sample_id + ".png"));
        auto out_entry = e;
        out_entry.path = e.sample_id + ".png";
        out_entry.width = params.target_px;
        out_entry.height = params.target_px;
        prepped.entries.push_back(out_entry);
        ++n;
    }
    nk::save_manifest(prepped, out / "manifest.json");
    write_digest(out, digest);
    for (const auto& w : warnings)
        std::cerr << "warning: " << w.code << ": " << w.detail << "\n";
    std::cout << "prepped " << n << " images (digest " << digest << ")\n";
    return 0;
}

int cmd_synth(const fs::path& out, int n_per_class, const std::string& profile,
              std::uint64_t seed) {
    if (profile != "pd-vs-ctl")
        throw nk::Error::usage("UsageError", "unknown profile '" + profile + "'");
    std::ostringstream ss;
    ss << "synth|" << profile << '|' << n_per_class << '|' << seed;
    const std::string digest = nk::fnv1a_digest(ss.str());
    if (outputs_current(out, digest, {out / "manifest.json"})) {
        std::cout << "up-to-date (digest " << digest << ")\n";
        return 0;
    }
    auto cohort = nk::generate_cohort(n_per_class, nk::patient_profile(),
                                      nk::control_profile(), seed);
    nk::write_cohort(cohort, out);
    write_digest(out, digest);
    std::cout << "generated " << cohort.manifest.entries.size() << " recordings\n";
    return 0;
}

int cmd_train(const fs::path& manifest_path, const std::string& classes_str, int fold,
              const fs::path& out, std::uint64_t seed, const std::string& weights,
              const std::string& backend_name) {
    auto classes = parse_class_pair(classes_str);
    nk::DatasetRef ref{"train", manifest_path, {}, "train"};
    nk::SampleCache cache{nk::RenderParams{}, nk::PrepParams{}};
    auto ds = nk::load_dataset(ref);

    auto plan = nk::make_fold_plan(ds.manifest, classes, 5, seed);
    nk::write_text_file(out / "fold_plan.json", plan.to_json().dump(2) + "\n");
    auto lists = nk::materialize_split(plan, fold, ds.manifest);

    auto to_samples = [&](const std::vector<nk::ManifestEntry>& entries) {
        std::vector<nk::LabeledImage> v;
        for (const auto& e : entries) v.push_back(cache.labeled(ds, e, classes.first));
        return v;
    };
    auto train = to_samples(lists.train);
    auto val = to_samples(lists.val);
    auto test = to_samples(lists.test);

    nk::TorchBackendConfig cfg;
    cfg.model.pretrained_weights = weights.empty()
                                       ? env_or("NEUROINK_WEIGHTS", "")
                                       : weights;
    cfg.model.init_seed = seed;
    cfg.train.seed = seed;
    cfg.freeze_backbone = backend_name == "torch-frozen";
    nk::TorchBackend backend(cfg);
    backend.fit(train, val, seed);

    nk::write_text_file(out / "train_log.json", backend.log().to_json().dump(2) + "\n");
    nk::save_checkpoint(backend.model(), cfg.model, out / "checkpoint.pt");

    auto y_pred = backend.predict(test);
    std::vector<int> y_true;
    for (const auto& s : test) y_true.push_back(s.label);
    json metrics = {{"fold", fold},
                    {"macro_f1", nk::macro_f1(y_true, y_pred)},
                    {"unweighted_accuracy", nk::unweighted_accuracy(y_true, y_pred)},
                    {"accuracy", nk::plain_accuracy(y_true, y_pred)},
                    {"n_test", y_true.size()}};
    nk::write_text_file(out / "metrics.json", metrics.dump(2) + "\n");
    std::cout << "fold " << fold << " macro F1 "
              << metrics.at("macro_f1").get<double>() << "\n";
    return 0;
}

nk::BackendFactory make_backend_factory(const std::string& name, std::uint64_t seed) {
    if (name == "linear")
        return [] { return std::make_unique<nk::LinearPixelBackend>(); };
    if (name == "torch" || name == "torch-frozen") {
        nk::TorchBackendConfig cfg;
        cfg.model.pretrained_weights = env_or("NEUROINK_WEIGHTS", "");
        cfg.model.init_seed = seed;
        cfg.freeze_backbone = name == "torch-frozen";
        auto cache = std::make_shared<nk::FeatureCache>();
        return [cfg, cache] { return std::make_unique<nk::TorchBackend>(cfg, cache); };
    }
    throw nk::Error::usage("UsageError", "unknown backend '" + name + "'");
}

nk::DatasetRef dataset_ref_from_json(const json& j, const fs::path& config_dir) {
    nk::DatasetRef r;
    r.name = j.at("name").get<std::string>();
    fs::path p = j.at("manifest").get<std::string>();
    r.manifest_path = p.is_absolute() ? p : config_dir / p;
    if (j.contains("tasks")) r.tasks = j.at("tasks").get<std::vector<std::string>>();
    if (j.contains("fold_group")) r.fold_group = j.at("fold_group").get<std::string>();
    return r;
}

int cmd_run(const fs::path& config_path, const fs::path& out, bool dry_run,
            const std::string& backend_name, int jobs) {
    const json cfg = json::parse(nk::read_text_file(config_path));
    const fs::path config_dir =
        config_path.has_parent_path() ? config_path.parent_path() : fs::path(".");
    const std::string suite = cfg.at("suite").get<std::string>();
    const std::uint64_t seed = cfg.value("seed", 0);
    auto classes = cfg.contains("classes")
                       ? std::make_pair(nk::parse_class(cfg.at("classes")[0]),
                                        nk::parse_class(cfg.at("classes")[1]))
                       : std::make_pair(nk::DiagnosticClass::PD, nk::DiagnosticClass::CTL);

    if (suite == "matrix") {
        nk::MatrixConfig mc;
        mc.classes = classes;
        mc.seed = seed;
        for (const auto& jd : cfg.at("datasets"))
            mc.datasets.push_back(dataset_ref_from_json(jd, config_dir));
        if (cfg.contains("full_variant")) {
            mc.full_variant = dataset_ref_from_json(cfg.at("full_variant"), config_dir);
            mc.full_variant_replaces = cfg.at("full_variant").at("replaces");
            mc.full_variant->fold_group = mc.full_variant_replaces;
        }
        auto specs = nk::expand_matrix(mc);

        if (dry_run) {
            for (const auto& s : specs)
                for (const auto& e : s.eval_sets)
                    std::cout << "cell " << s.name << " -> " << e << " ["
                              << (s.protocol == nk::Protocol::cv5 ? "cv5" : "train-once")
                              << "]\n";
            std::cout << "total cells: " << nk::cell_count(specs) << "\n";
            return 0;
        }

        std::ostringstream digest_src;
        digest_src << cfg.dump() << '|' << backend_name;
        const std::string digest = nk::fnv1a_digest(digest_src.str());
        if (outputs_current(out, digest, {out / "results.json"})) {
            std::cout << "up-to-date (digest " << digest << ")\n";
            return 0;
        }

        std::vector<nk::DatasetRef> refs = mc.datasets;
        if (mc.full_variant) {
            auto fv = *mc.full_variant;
            fv.fold_group = mc.full_variant_replaces.empty() ? fv.name
                                                             : mc.full_variant_replaces;
            refs.push_back(fv);
        }

        std::vector<nk::ExperimentResult> results(specs.size());
        auto run_range = [&](std::size_t begin, std::size_t end) {
            nk::ExperimentRunner runner(refs, make_backend_factory(backend_name, seed));
            for (std::size_t i = begin; i < end; ++i) results[i] = runner.run(specs[i]);
        };
        if (jobs <= 1) {
            run_range(0, specs.size());
        } else {
            std::vector<std::future<void>> futs;
            const std::size_t per =
                (specs.size() + static_cast<std::size_t>(jobs) - 1) / jobs;
            for (std::size_t b = 0; b < specs.size(); b += per)
                futs.push_back(std::async(std::launch::async, run_range, b,
                                          std::min(specs.size(), b + per)));
            for (auto& f : futs) f.get();
        }

        std::vector<std::string> columns;
        for (const auto& d : mc.datasets) columns.push_back(d.name);
        nk::emit_report(results, columns, out);
        write_digest(out, digest);
        json envelope = {{"columns", columns},
                         {"experiments", nk::results_to_json(results)}};
        nk::write_text_file(out / "results.json", envelope.dump(2) + "\n");
        std::cout << "executed cells: " << nk::cell_count(specs) << "\n";
        return 0;
    }

    if (suite == "nls-tasks") {
        auto ref = dataset_ref_from_json(cfg, config_dir);
        std::vector<std::string> tasks =
            cfg.contains("tasks") ? cfg.at("tasks").get<std::vector<std::string>>()
                                  : nk::kNlsTasks;
        if (dry_run) {
            for (const auto& t : tasks)
                std::cout << "cell nls-task:" << t << " -> " << ref.name << " [cv5]\n";
            std::cout << "total cells: " << tasks.size() << "\n";
            return 0;
        }
        auto results = nk::run_nls_task_suite(ref, make_backend_factory(backend_name, seed),
                                              classes, seed, tasks);
        fs::create_directories(out);
        nk::write_text_file(out / "task_table.md", nk::render_task_table(results));
        json jr = json::array();
        for (const auto& t : results)
            jr.push_back({{"task", t.task},
                          {"f1_mean", t.cell.f1().mean},
                          {"ua_mean", t.cell.ua().mean},
                          {"acc_mean", t.cell.acc().mean}});
        nk::write_text_file(out / "results.json", jr.dump(2) + "\n");
        std::cout << "executed cells: " << results.size() << "\n";
        return 0;
    }

    throw nk::Error::usage("UsageError", "unknown suite '" + suite + "'");
}

int cmd_report(const fs::path& results_path, const fs::path& out) {
    const json envelope = json::parse(nk::read_text_file(results_path));
    auto results = nk::results_from_json(envelope.at("experiments"));
    auto columns = envelope.at("columns").get<std::vector<std::string>>();
    nk::emit_report(results, columns, out);
    std::cout << "report written to " << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Handwriting-based neurological disorder screening pipeline"};
    app.require_subcommand(1);

    // ingest
    std::string ig_dataset, ig_spec;
    fs::path ig_root, ig_out;
    auto* ingest = app.add_subcommand("ingest", "Convert a source corpus to the canonical layout");
    ingest->add_option("--dataset", ig_dataset, "Preset: handpd|newhandpd|parkd|pahaw|nls")
        ->required();
    ingest->add_option("--root", ig_root, "Source corpus root")->required();
    ingest->add_option("--out", ig_out, "Output directory")->required();
    ingest->add_option("--spec", ig_spec, "Adapter spec JSON overriding the preset");

    // rasterize
    fs::path ra_manifest, ra_out;
    nk::RenderParams ra_params;
    auto* rasterize = app.add_subcommand("rasterize", "Render time-series recordings to ink images");
    rasterize->add_option("--manifest", ra_manifest)->required();
    rasterize->add_option("--out", ra_out)->required();
    rasterize->add_option("--opacity", ra_params.opacity, "Per-dot alpha (default 0.10)");
    rasterize->add_option("--rmin", ra_params.r_min_px, "Min dot radius px (default 0.75)");
    rasterize->add_option("--rmax", ra_params.r_max_px, "Max dot radius px (default 3.0)");
    rasterize->add_option("--margin", ra_params.margin_frac, "Margin fraction (default 0.05)");
    rasterize->add_flag("--include-pen-up", ra_params.include_pen_up);

    // prep-images
    fs::path pi_manifest, pi_out;
    nk::PrepParams pi_params;
    auto* prep = app.add_subcommand("prep-images", "Preprocess image-modality datasets");
    prep->add_option("--manifest", pi_manifest)->required();
    prep->add_option("--out", pi_out)->required();
    prep->add_option("--luminosity", pi_params.luminosity_target, "Luminosity target (default 275)");
    prep->add_option("--blur-sigma", pi_params.blur_sigma, "Gaussian sigma px (default 1.0)");

    // synth
    fs::path sy_out;
    int sy_n = 60;
    std::string sy_profile = "pd-vs-ctl";
    std::uint64_t sy_seed = 0;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic handwriting cohort");
    synth->add_option("--out", sy_out)->required();
    synth->add_option("--n", sy_n, "Subjects per class (default 60)");
    synth->add_option("--profile", sy_profile, "Cohort profile (pd-vs-ctl)");
    synth->add_option("--seed", sy_seed);

    // train
    fs::path tr_manifest, tr_out;
    std::string tr_classes = "PD,CTL", tr_weights, tr_backend = "torch";
    int tr_fold = 0;
    std::uint64_t tr_seed = 0;
    auto* train = app.add_subcommand("train", "Train one cross-validation fold");
    train->add_option("--manifest", tr_manifest)->required();
    train->add_option("--classes", tr_classes, "Class pair, e.g. PD,CTL");
    train->add_option("--fold", tr_fold, "Test fold index 0..4")->required();
    train->add_option("--out", tr_out)->required();
    train->add_option("--seed", tr_seed);
    train->add_option("--weights", tr_weights, "Backbone weights archive (or NEUROINK_WEIGHTS)");
    train->add_option("--backend", tr_backend, "torch|torch-frozen");

    // run
    fs::path ru_config, ru_out;
    bool ru_dry = false;
    std::string ru_backend = "torch";
    int ru_jobs = 1;
    auto* run = app.add_subcommand("run", "Run an experiment suite (nls-tasks or matrix)");
    run->add_option("--config", ru_config)->required();
    run->add_option("--out", ru_out, "Results directory");
    run->add_flag("--dry-run", ru_dry, "Print the expanded job plan without executing");
    run->add_option("--backend", ru_backend, "linear|torch|torch-frozen");
    run->add_option("--jobs", ru_jobs, "Worker parallelism (default 1)");

    // report
    fs::path re_results, re_out;
    auto* report = app.add_subcommand("report", "Re-emit tables from a results file");
    report->add_option("--results", re_results)->required();
    report->add_option("--out", re_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // 0
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: UsageError: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*ingest) return cmd_ingest(ig_dataset, ig_root, ig_out, ig_spec);
        if (*rasterize) return cmd_rasterize(ra_manifest, ra_out, ra_params);
        if (*prep) return cmd_prep_images(pi_manifest, pi_out, pi_params);
        if (*synth) return cmd_synth(sy_out, sy_n, sy_profile, sy_seed);
        if (*train)
            return cmd_train(tr_manifest, tr_classes, tr_fold, tr_out, tr_seed,
                             tr_weights, tr_backend);
        if (*run) {
            if (!ru_dry && ru_out.empty())
                throw nk::Error::usage("UsageError", "--out required unless --dry-run");
            return cmd_run(ru_config, ru_out, ru_dry, ru_backend, ru_jobs);
        }
        if (*report) return cmd_report(re_results, re_out);
    } catch (const nk::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error: RuntimeFailure: " << e.what() << "\n";
        return 4;
    }
    return 2;
}
