#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neuroink/common.hpp"
#include "neuroink/core.hpp"
#include "neuroink/image.hpp"

namespace neuroink {

// The 10 retained NLS drawing/writing tasks.
inline const std::vector<std::string> kNlsTasks = {
    "SpiralDom", "SpiralNonDom", "SpiralPataka", "CopyCube",  "CopyImage",
    "DrawClock", "CopyText",     "CopyReadText", "FreeWrite", "Numbers"};

inline bool is_spiral_task(const std::string& task) {
    return task.rfind("Spiral", 0) == 0;
}

// One layout rule: a regex over the path relative to the dataset root. The
// first rule that matches a file decides its class/subject/task.
struct AdapterRule {
    std::string pattern;          // ECMAScript regex, '/' separators
    DiagnosticClass diagnosis = DiagnosticClass::CTL;
    int subject_group = 0;        // capture group for subject id; 0 = filename heuristics
    int task_group = 0;           // capture group for task; 0 = fixed `task`
    std::string task = "Spiral";
};

struct AdapterSpec {
    std::string dataset_name;
    Modality modality = Modality::image;
    bool has_template = false;
    std::vector<AdapterRule> rules;
    // Regex applied to the filename stem to pull out a subject id (group 1)
    // when the matching rule has subject_group == 0. No match: the file
    // becomes its own subject and a warning is raised.
    std::string subject_stem_regex = R"(^([A-Za-z]*[-_]?\d+))";
    // Time-series column order; names from
    // {t, x, y, pressure, pen_down, azimuth, altitude, ignore}.
    std::vector<std::string> columns = {"t", "x", "y", "pressure", "pen_down"};
    bool skip_first_line = false;     // sample-count header (SVC family)
    std::vector<std::string> tasks;   // allowed tasks; empty = unrestricted
};

namespace detail {

inline std::string generic_rel(const fs::path& root, const fs::path& p) {
    return fs::relative(p, root).generic_string();
}

inline std::vector<fs::path> sorted_files(const fs::path& root) {
    if (!fs::exists(root))
        throw Error::data("MissingFile", "root directory " + root.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        if (e.path().filename().string().starts_with(".")) continue;
        files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

struct MatchResult {
    DiagnosticClass diagnosis;
    std::string subject_id;
    std::string task;
};

inline MatchResult match_rules(const AdapterSpec& spec, const std::string& rel,
                               WarningLog* warnings) {
    for (const auto& rule : spec.rules) {
        std::smatch m;
        if (!std::regex_search(rel, m, std::regex(rule.pattern))) continue;
        MatchResult out;
        out.diagnosis = rule.diagnosis;
        out.task = rule.task_group > 0 ? m[rule.task_group].str() : rule.task;
        if (rule.subject_group > 0) {
            out.subject_id = m[rule.subject_group].str();
        } else {
            const std::string stem = fs::path(rel).stem().string();
            std::smatch sm;
            if (!spec.subject_stem_regex.empty() &&
                std::regex_search(stem, sm, std::regex(spec.subject_stem_regex))) {
                out.subject_id = sm[1].str();
            } else {
                out.subject_id = stem;
                if (warnings)
                    warnings->push_back(
                        {"no_subject_encoding",
                         rel + ": file treated as its own subject; "
                               "subject-disjointness is weakened"});
            }
        }
        return out;
    }
    throw Error::data("UnmappablePath", rel + " matches no layout rule");
}

inline std::string sanitize_id(std::string s) {
    for (auto& c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_'))
            c = '_';
    return s;
}

}  // namespace detail

inline DatasetManifest ingest_image_dataset(const fs::path& root, const AdapterSpec& spec,
                                            WarningLog* warnings = nullptr) {
    auto files = detail::sorted_files(root);
    DatasetManifest m;
    m.dataset_name = spec.dataset_name;
    m.has_template = spec.has_template;
    if (files.empty()) {
        if (warnings) warnings->push_back({"empty_dataset", root.string() + " has no files"});
        return m;
    }
    for (const auto& f : files) {
        const std::string rel = detail::generic_rel(root, f);
        auto match = detail::match_rules(spec, rel, warnings);
        auto [w, h] = probe_image_size(f);  // throws UndecodableImage
        ManifestEntry e;
        e.sample_id = detail::sanitize_id(rel);
        e.subject_id = to_string(match.diagnosis) + "_" + match.subject_id;
        e.diagnosis = match.diagnosis;
        e.task_id = match.task;
        e.modality = Modality::image;
        e.path = rel;
        e.width = w;
        e.height = h;
        m.entries.push_back(std::move(e));
    }
    return m;
}

namespace detail {

inline InkRecording parse_timeseries_file(const fs::path& file, const AdapterSpec& spec) {
    const std::string text = read_text_file(file);
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool skipped_header = false;
    InkRecording rec;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (spec.skip_first_line && !skipped_header) {
            skipped_header = true;
            continue;
        }
        std::istringstream ls(line);
        PenSample s;
        s.pen_down = true;
        for (const auto& col : spec.columns) {
            double v;
            if (!(ls >> v))
                throw Error::data("ParseError", file.string() + ":" +
                                                    std::to_string(lineno) +
                                                    ": missing/non-numeric '" + col + "'");
            if (col == "t") s.t = v;
            else if (col == "x") s.x = v;
            else if (col == "y") s.y = v;
            else if (col == "pressure") s.pressure = v;
            else if (col == "pen_down") s.pen_down = v != 0.0;
            else if (col == "azimuth") s.azimuth = v;
            else if (col == "altitude") s.altitude = v;
            else if (col != "ignore")
                throw Error::data("SchemaViolation", "unknown column '" + col + "'");
        }
        rec.samples.push_back(s);
    }
    return rec;
}

}  // namespace detail

// Parses every source file under the column mapping, writes canonical
// recordings into out_dir and returns a manifest referencing them. Invalid
// recordings are quarantined into an exclusion log, never silently dropped.
inline DatasetManifest ingest_timeseries_dataset(const fs::path& root,
                                                 const AdapterSpec& spec,
                                                 const fs::path& out_dir,
                                                 WarningLog* warnings = nullptr) {
    auto files = detail::sorted_files(root);
    DatasetManifest m;
    m.dataset_name = spec.dataset_name;
    m.has_template = spec.has_template;
    if (files.empty()) {
        if (warnings) warnings->push_back({"empty_dataset", root.string() + " has no files"});
        return m;
    }
    fs::create_directories(out_dir);
    json exclusions = json::array();
    for (const auto& f : files) {
        const std::string rel = detail::generic_rel(root, f);
        auto match = detail::match_rules(spec, rel, warnings);
        if (!spec.tasks.empty() &&
            std::find(spec.tasks.begin(), spec.tasks.end(), match.task) == spec.tasks.end())
            throw Error::data("UnknownTask", rel + ": task '" + match.task + "'");
        InkRecording rec = detail::parse_timeseries_file(f, spec);
        rec.subject_id = to_string(match.diagnosis) + "_" + match.subject_id;
        rec.task_id = match.task;
        rec.source_dataset = spec.dataset_name;

        const std::string sample_id = detail::sanitize_id(rel);
        auto violations = validate_recording(rec);
        if (!violations.empty()) {
            json v = json::array();
            for (const auto& viol : violations)
                v.push_back({{"kind", viol.kind}, {"index", viol.index},
                             {"detail", viol.detail}});
            exclusions.push_back({{"sample_id", sample_id}, {"source", rel},
                                  {"violations", std::move(v)}});
            if (warnings)
                warnings->push_back({"quarantined", rel});
            continue;
        }
        const std::string out_name = sample_id + ".txt";
        save_recording(rec, out_dir / out_name);
        ManifestEntry e;
        e.sample_id = sample_id;
        e.subject_id = rec.subject_id;
        e.diagnosis = match.diagnosis;
        e.task_id = match.task;
        e.modality = Modality::timeseries;
        e.path = out_name;
        m.entries.push_back(std::move(e));
    }
    write_text_file(out_dir / "exclusions.json", exclusions.dump(2) + "\n");
    return m;
}

// ---------------------------------------------------------------------------
// Built-in presets. Real corpora arrive in assorted layouts; these presets
// document the layout each adapter expects (see README).
// ---------------------------------------------------------------------------

inline AdapterSpec make_class_dir_image_spec(const std::string& name, bool has_template) {
    AdapterSpec s;
    s.dataset_name = name;
    s.modality = Modality::image;
    s.has_template = has_template;
    const std::string ext = R"(\.(?:jpg|jpeg|png|bmp|tif|tiff)$)";
    s.rules = {
        {R"((?:^|/)(?:CTL|Control|Healthy)[^/]*/.*)" + ext, DiagnosticClass::CTL, 0, 0, "Spiral"},
        {R"((?:^|/)(?:PD|Patient|Parkinson)[^/]*/.*)" + ext, DiagnosticClass::PD, 0, 0, "Spiral"},
        {R"((?:^|/)AD[^/]*/.*)" + ext, DiagnosticClass::AD, 0, 0, "Spiral"},
    };
    return s;
}

inline AdapterSpec make_class_dir_timeseries_spec(const std::string& name,
                                                  std::vector<std::string> columns,
                                                  bool skip_first_line,
                                                  std::vector<std::string> tasks) {
    AdapterSpec s;
    s.dataset_name = name;
    s.modality = Modality::timeseries;
    s.has_template = false;
    // <CLASS>/<subject>/<task>.<ext> or <CLASS>/<subject>_<task>.<ext>
    const std::string ext = R"(\.(?:txt|svc|tsv|dat)$)";
    auto rules_for = [&](const std::string& dir, DiagnosticClass c) {
        return std::vector<AdapterRule>{
            {R"((?:^|/))" + dir + R"(/([^/]+)/([A-Za-z0-9]+))" + ext, c, 1, 2, ""},
            {R"((?:^|/))" + dir + R"(/([^/]+?)[-_]([A-Za-z0-9]+))" + ext, c, 1, 2, ""},
        };
    };
    for (auto& r : rules_for("CTL", DiagnosticClass::CTL)) s.rules.push_back(r);
    for (auto& r : rules_for("PD", DiagnosticClass::PD)) s.rules.push_back(r);
    for (auto& r : rules_for("AD", DiagnosticClass::AD)) s.rules.push_back(r);
    s.columns = std::move(columns);
    s.skip_first_line = skip_first_line;
    s.tasks = std::move(tasks);
    return s;
}

inline AdapterSpec builtin_adapter_spec(const std::string& preset) {
    if (preset == "handpd") return make_class_dir_image_spec("HandPD", true);
    if (preset == "newhandpd") return make_class_dir_image_spec("NewHandPD", true);
    if (preset == "parkd") return make_class_dir_image_spec("ParkD", false);
    if (preset == "pahaw")
        // SVC export: x y t pen_down azimuth altitude pressure, count header line
        return make_class_dir_timeseries_spec(
            "PaHaW", {"x", "y", "t", "pen_down", "azimuth", "altitude", "pressure"}, true,
            {"Spiral"});
    if (preset == "nls")
        return make_class_dir_timeseries_spec(
            "NLS", {"t", "x", "y", "pressure", "pen_down"}, false, kNlsTasks);
    throw Error::usage("UnknownPreset", "no adapter preset '" + preset + "'");
}

inline AdapterSpec adapter_spec_from_json(const json& j) {
    AdapterSpec s;
    if (j.contains("preset")) s = builtin_adapter_spec(j.at("preset").get<std::string>());
    if (j.contains("dataset_name")) s.dataset_name = j.at("dataset_name").get<std::string>();
    if (j.contains("modality")) s.modality = parse_modality(j.at("modality").get<std::string>());
    if (j.contains("has_template")) s.has_template = j.at("has_template").get<bool>();
    if (j.contains("subject_stem_regex"))
        s.subject_stem_regex = j.at("subject_stem_regex").get<std::string>();
    if (j.contains("columns")) s.columns = j.at("columns").get<std::vector<std::string>>();
    if (j.contains("skip_first_line")) s.skip_first_line = j.at("skip_first_line").get<bool>();
    if (j.contains("tasks")) s.tasks = j.at("tasks").get<std::vector<std::string>>();
    if (j.contains("rules")) {
        s.rules.clear();
        for (const auto& jr : j.at("rules")) {
            AdapterRule r;
            r.pattern = jr.at("pattern").get<std::string>();
            r.diagnosis = parse_class(jr.at("class").get<std::string>());
            if (jr.contains("subject_group")) r.subject_group = jr.at("subject_group").get<int>();
            if (jr.contains("task_group")) r.task_group = jr.at("task_group").get<int>();
            if (jr.contains("task")) r.task = jr.at("task").get<std::string>();
            s.rules.push_back(std::move(r));
        }
    }
    return s;
}

}  // namespace neuroink
