#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "neuroink/common.hpp"
#include "neuroink/core.hpp"

namespace neuroink {

enum class PressureProfile { constant, ramp, noisy };

// Archimedean spiral with radial tremor, progressive slowdown and shrinking
// pitch. Radial (not isotropic) tremor keeps the injected amplitude directly
// measurable against the ideal spiral.
struct SynthParams {
    double pitch = 5.0;            // b, device units per radian
    double turns = 6.0;
    double omega = 4.0;            // base angular speed, rad/s
    double sample_rate_hz = 100.0;
    double tremor_amp = 0.0;       // A, device units
    double tremor_hz = 5.0;
    double slowdown = 1.0;         // gamma in (0,1]: omega eases to gamma*omega
    double micrographia = 0.0;     // in [0,1): pitch shrinks to (1-m)*b by the last turn
    PressureProfile pressure = PressureProfile::constant;
    double base_pressure = 512.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (sample_rate_hz <= 0.0) throw Error::data("InvalidParams", "sample_rate_hz <= 0");
        if (turns <= 0.0) throw Error::data("InvalidParams", "turns <= 0");
        if (tremor_amp < 0.0) throw Error::data("InvalidParams", "tremor_amp < 0");
        if (!(slowdown > 0.0 && slowdown <= 1.0))
            throw Error::data("InvalidParams", "slowdown must be in (0, 1]");
        if (!(micrographia >= 0.0 && micrographia < 1.0))
            throw Error::data("InvalidParams", "micrographia must be in [0, 1)");
        if (omega <= 0.0) throw Error::data("InvalidParams", "omega <= 0");
        if (pitch <= 0.0) throw Error::data("InvalidParams", "pitch <= 0");
    }
};

// r(theta) = b*theta*shrink(theta) + A*sin(2*pi*f*t),
// shrink(theta) = 1 - m*theta/theta_total,
// d theta/dt = omega*slow(t), slow(t) easing linearly from 1 to gamma over the
// nominal duration theta_total/omega and staying at gamma afterwards.
inline InkRecording generate_recording(const SynthParams& p,
                                       const std::string& subject_id = "synth",
                                       const std::string& task_id = "Spiral",
                                       const std::string& dataset = "synth") {
    p.validate();
    const double theta_total = 2.0 * std::numbers::pi * p.turns;
    const double nominal_duration = theta_total / p.omega;
    const double dt = 1.0 / p.sample_rate_hz;

    std::mt19937_64 rng(p.seed);
    std::uniform_real_distribution<double> noise(-0.15, 0.15);

    InkRecording rec;
    rec.subject_id = subject_id;
    rec.task_id = task_id;
    rec.source_dataset = dataset;

    double theta = 0.0;
    for (std::size_t k = 0; theta < theta_total; ++k) {
        const double t = k * dt;
        const double shrink = 1.0 - p.micrographia * theta / theta_total;
        const double r = p.pitch * theta * shrink +
                         p.tremor_amp * std::sin(2.0 * std::numbers::pi * p.tremor_hz * t);
        PenSample s;
        s.t = t * 1000.0;  // ms
        s.x = r * std::cos(theta);
        s.y = r * std::sin(theta);
        switch (p.pressure) {
            case PressureProfile::constant: s.pressure = p.base_pressure; break;
            case PressureProfile::ramp:
                s.pressure = p.base_pressure * (0.2 + 0.8 * theta / theta_total);
                break;
            case PressureProfile::noisy:
                s.pressure = p.base_pressure * (1.0 + noise(rng));
                break;
        }
        s.pen_down = true;
        rec.samples.push_back(s);

        const double ease = std::min(t / nominal_duration, 1.0);
        const double slow = 1.0 + (p.slowdown - 1.0) * ease;
        theta += p.omega * slow * dt;
    }
    return rec;
}

struct CohortRange {
    double lo = 0.0, hi = 0.0;
    double sample(std::mt19937_64& rng) const {
        if (hi <= lo) return lo;
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    }
};

struct CohortProfile {
    CohortRange tremor_amp{0.0, 0.2};
    CohortRange slowdown{0.9, 1.0};
    CohortRange micrographia{0.0, 0.0};
    SynthParams base;
};

// "pd-vs-ctl" desk-scale profile: patients draw tremor from a clearly nonzero
// band plus slowdown; controls stay near the ideal spiral.
inline CohortProfile patient_profile() {
    CohortProfile p;
    p.tremor_amp = {1.5, 3.0};
    p.slowdown = {0.25, 0.5};
    p.micrographia = {0.1, 0.3};
    return p;
}

inline CohortProfile control_profile() {
    CohortProfile p;
    p.tremor_amp = {0.0, 0.2};
    p.slowdown = {0.85, 1.0};
    p.micrographia = {0.0, 0.05};
    return p;
}

struct SynthCohort {
    DatasetManifest manifest;
    std::vector<InkRecording> recordings;  // parallel to manifest.entries
};

// One subject per recording; patient class first in the manifest, then controls.
inline SynthCohort generate_cohort(int n_per_class, const CohortProfile& patient,
                                   const CohortProfile& control, std::uint64_t seed,
                                   DiagnosticClass patient_class = DiagnosticClass::PD,
                                   const std::string& dataset_name = "synth") {
    if (n_per_class < 1) throw Error::data("InvalidParams", "n_per_class must be >= 1");
    SynthCohort cohort;
    cohort.manifest.dataset_name = dataset_name;
    cohort.manifest.has_template = false;

    std::mt19937_64 rng(seed);
    auto emit = [&](const CohortProfile& prof, DiagnosticClass cls, int idx) {
        SynthParams sp = prof.base;
        sp.tremor_amp = prof.tremor_amp.sample(rng);
        sp.slowdown = prof.slowdown.sample(rng);
        sp.micrographia = prof.micrographia.sample(rng);
        sp.seed = rng();
        const std::string subject =
            to_string(cls) + "_" + std::to_string(idx);
        const std::string sample_id = dataset_name + "_" + subject;
        cohort.recordings.push_back(generate_recording(sp, subject, "Spiral", dataset_name));
        ManifestEntry e;
        e.sample_id = sample_id;
        e.subject_id = subject;
        e.diagnosis = cls;
        e.task_id = "Spiral";
        e.modality = Modality::timeseries;
        e.path = sample_id + ".txt";
        cohort.manifest.entries.push_back(std::move(e));
    };
    for (int i = 0; i < n_per_class; ++i) emit(patient, patient_class, i);
    for (int i = 0; i < n_per_class; ++i) emit(control, DiagnosticClass::CTL, i);
    return cohort;
}

inline void write_cohort(const SynthCohort& cohort, const fs::path& out_dir,
                         const std::string& manifest_name = "manifest.json") {
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < cohort.recordings.size(); ++i)
        save_recording(cohort.recordings[i], out_dir / cohort.manifest.entries[i].path);
    save_manifest(cohort.manifest, out_dir / manifest_name);
}

}  // namespace neuroink
