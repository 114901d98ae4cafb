#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neuroink/common.hpp"
#include "neuroink/image.hpp"

namespace neuroink {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct PenSample {
    double t = 0.0;         // ms since recording start
    double x = 0.0;         // device units
    double y = 0.0;
    double pressure = 0.0;  // device pressure units, >= 0
    bool pen_down = true;
    std::optional<double> azimuth;   // degrees
    std::optional<double> altitude;  // degrees
};

enum class DiagnosticClass { CTL, PD, AD };

inline std::string to_string(DiagnosticClass c) {
    switch (c) {
        case DiagnosticClass::CTL: return "CTL";
        case DiagnosticClass::PD: return "PD";
        case DiagnosticClass::AD: return "AD";
    }
    return "?";
}

inline DiagnosticClass parse_class(const std::string& s) {
    if (s == "CTL") return DiagnosticClass::CTL;
    if (s == "PD") return DiagnosticClass::PD;
    if (s == "AD") return DiagnosticClass::AD;
    throw Error::data("SchemaViolation", "unknown diagnostic class '" + s + "'");
}

enum class Modality { image, timeseries };

inline std::string to_string(Modality m) {
    return m == Modality::image ? "image" : "timeseries";
}

inline Modality parse_modality(const std::string& s) {
    if (s == "image") return Modality::image;
    if (s == "timeseries") return Modality::timeseries;
    throw Error::data("SchemaViolation", "unknown modality '" + s + "'");
}

struct InkRecording {
    std::vector<PenSample> samples;
    std::string subject_id;
    std::string task_id;
    std::string source_dataset;
};

struct ManifestEntry {
    std::string sample_id;
    std::string subject_id;
    DiagnosticClass diagnosis = DiagnosticClass::CTL;
    std::string task_id;
    Modality modality = Modality::image;
    std::string path;  // relative to the manifest file's directory
    std::optional<int> width, height;
};

struct DatasetManifest {
    std::string dataset_name;
    bool has_template = false;
    std::vector<ManifestEntry> entries;

    std::map<DiagnosticClass, std::size_t> class_counts() const {
        std::map<DiagnosticClass, std::size_t> c;
        for (const auto& e : entries) ++c[e.diagnosis];
        return c;
    }

    std::set<std::string> subjects() const {
        std::set<std::string> s;
        for (const auto& e : entries) s.insert(e.subject_id);
        return s;
    }

    DatasetManifest filtered(std::vector<DiagnosticClass> keep) const {
        return filtered([&](const ManifestEntry& e) {
            return std::find(keep.begin(), keep.end(), e.diagnosis) != keep.end();
        });
    }

    DatasetManifest filtered(const std::function<bool(const ManifestEntry&)>& pred) const {
        DatasetManifest out;
        out.dataset_name = dataset_name;
        out.has_template = has_template;
        for (const auto& e : entries)
            if (pred(e)) out.entries.push_back(e);
        return out;
    }
};

struct ImageProvenance {
    std::string sample_id;
    std::string pipeline_version;
    std::string param_digest;
};

struct CanonicalImage {
    GrayImage pixels;  // 224x224
    ImageProvenance provenance;
};

inline constexpr int kCanvasPx = 224;
inline constexpr const char* kPipelineVersion = "1";

// ---------------------------------------------------------------------------
// Manifest serialization (JSON sidecar)
// ---------------------------------------------------------------------------

inline json manifest_to_json(const DatasetManifest& m) {
    json entries = json::array();
    for (const auto& e : m.entries) {
        json je = {
            {"sample_id", e.sample_id}, {"subject_id", e.subject_id},
            {"class", to_string(e.diagnosis)}, {"task", e.task_id},
            {"modality", to_string(e.modality)}, {"path", e.path},
        };
        if (e.width) je["width"] = *e.width;
        if (e.height) je["height"] = *e.height;
        entries.push_back(std::move(je));
    }
    return json{{"dataset_name", m.dataset_name},
                {"has_template", m.has_template},
                {"entries", std::move(entries)}};
}

inline void save_manifest(const DatasetManifest& m, const fs::path& path) {
    write_text_file(path, manifest_to_json(m).dump(2) + "\n");
}

// check_paths: verify every referenced file exists relative to the manifest dir.
inline DatasetManifest load_manifest(const fs::path& path, bool check_paths = true) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw Error::data("SchemaViolation", path.string() + ": " + e.what());
    }
    DatasetManifest m;
    try {
        m.dataset_name = j.at("dataset_name").get<std::string>();
        m.has_template = j.at("has_template").get<bool>();
        for (const auto& je : j.at("entries")) {
            ManifestEntry e;
            e.sample_id = je.at("sample_id").get<std::string>();
            e.subject_id = je.at("subject_id").get<std::string>();
            e.diagnosis = parse_class(je.at("class").get<std::string>());
            e.task_id = je.at("task").get<std::string>();
            e.modality = parse_modality(je.at("modality").get<std::string>());
            e.path = je.at("path").get<std::string>();
            if (je.contains("width")) e.width = je.at("width").get<int>();
            if (je.contains("height")) e.height = je.at("height").get<int>();
            m.entries.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw Error::data("SchemaViolation", path.string() + ": " + e.what());
    }
    std::set<std::string> seen;
    for (const auto& e : m.entries)
        if (!seen.insert(e.sample_id).second)
            throw Error::data("DuplicateId", "duplicate sample_id '" + e.sample_id + "'");
    if (check_paths) {
        const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
        for (const auto& e : m.entries)
            if (!fs::exists(base / e.path))
                throw Error::data("MissingFile", (base / e.path).string());
    }
    return m;
}

// ---------------------------------------------------------------------------
// Canonical recording files
//   one sample per line: t x y pressure pen_down [azimuth altitude]
//   lines starting with '#' are ignored
// ---------------------------------------------------------------------------

inline std::string recording_to_text(const InkRecording& rec) {
    std::ostringstream out;
    out.precision(17);
    out << "# t x y pressure pen_down [azimuth altitude]\n";
    for (const auto& s : rec.samples) {
        out << s.t << ' ' << s.x << ' ' << s.y << ' ' << s.pressure << ' '
            << (s.pen_down ? 1 : 0);
        if (s.azimuth && s.altitude) out << ' ' << *s.azimuth << ' ' << *s.altitude;
        out << '\n';
    }
    return out.str();
}

inline void save_recording(const InkRecording& rec, const fs::path& path) {
    write_text_file(path, recording_to_text(rec));
}

inline InkRecording load_recording(const fs::path& path) {
    const std::string text = read_text_file(path);
    InkRecording rec;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        PenSample s;
        int down;
        if (!(ls >> s.t >> s.x >> s.y >> s.pressure >> down))
            throw Error::data("ParseError",
                              path.string() + ":" + std::to_string(lineno) + ": bad row");
        s.pen_down = down != 0;
        double az, alt;
        if (ls >> az >> alt) {
            s.azimuth = az;
            s.altitude = alt;
        }
        rec.samples.push_back(s);
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Recording validation: violations are data, not exceptions.
// ---------------------------------------------------------------------------

struct Violation {
    std::string kind;       // empty_recording | non_monotone_time | negative_pressure | negative_time
    std::ptrdiff_t index;   // sample index, -1 for whole-recording violations
    std::string detail;
};

inline std::vector<Violation> validate_recording(const InkRecording& rec) {
    std::vector<Violation> out;
    if (rec.samples.empty()) {
        out.push_back({"empty_recording", -1, "recording has no samples"});
        return out;
    }
    for (std::size_t i = 0; i < rec.samples.size(); ++i) {
        const auto& s = rec.samples[i];
        if (s.t < 0.0)
            out.push_back({"negative_time", static_cast<std::ptrdiff_t>(i),
                           "t = " + std::to_string(s.t)});
        if (s.pressure < 0.0)
            out.push_back({"negative_pressure", static_cast<std::ptrdiff_t>(i),
                           "pressure = " + std::to_string(s.pressure)});
        if (i > 0 && s.t < rec.samples[i - 1].t)
            out.push_back({"non_monotone_time", static_cast<std::ptrdiff_t>(i),
                           "t decreases at sample " + std::to_string(i)});
    }
    return out;
}

}  // namespace neuroink
