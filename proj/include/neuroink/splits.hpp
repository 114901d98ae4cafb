#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neuroink/common.hpp"
#include "neuroink/core.hpp"

namespace neuroink {

// Subject-level plan: stratification and the inner 80/20 split both operate on
// subjects, never samples, so subject-disjointness holds by construction.
struct FoldPlan {
    int k = 5;
    std::uint64_t seed = 0;
    std::pair<DiagnosticClass, DiagnosticClass> classes{DiagnosticClass::PD,
                                                        DiagnosticClass::CTL};
    std::map<std::string, int> fold_of_subject;
    std::vector<std::vector<std::string>> train_subjects;  // indexed by test fold
    std::vector<std::vector<std::string>> val_subjects;

    json to_json() const {
        json jf = json::object();
        for (const auto& [s, f] : fold_of_subject) jf[s] = f;
        json folds = json::array();
        for (int f = 0; f < k; ++f)
            folds.push_back({{"train", train_subjects[f]}, {"val", val_subjects[f]}});
        return json{{"k", k},
                    {"seed", seed},
                    {"classes", {to_string(classes.first), to_string(classes.second)}},
                    {"fold_of_subject", std::move(jf)},
                    {"folds", std::move(folds)}};
    }

    static FoldPlan from_json(const json& j) {
        FoldPlan p;
        p.k = j.at("k").get<int>();
        p.seed = j.at("seed").get<std::uint64_t>();
        p.classes = {parse_class(j.at("classes")[0].get<std::string>()),
                     parse_class(j.at("classes")[1].get<std::string>())};
        for (const auto& [s, f] : j.at("fold_of_subject").items())
            p.fold_of_subject[s] = f.get<int>();
        for (const auto& jf : j.at("folds")) {
            p.train_subjects.push_back(jf.at("train").get<std::vector<std::string>>());
            p.val_subjects.push_back(jf.at("val").get<std::vector<std::string>>());
        }
        return p;
    }
};

namespace detail {

// Subjects per class, sorted for determinism before any shuffling.
inline std::map<DiagnosticClass, std::vector<std::string>> subjects_by_class(
    const DatasetManifest& manifest,
    std::pair<DiagnosticClass, DiagnosticClass> classes) {
    std::map<std::string, DiagnosticClass> cls_of;
    for (const auto& e : manifest.entries) {
        if (e.diagnosis != classes.first && e.diagnosis != classes.second) continue;
        auto it = cls_of.find(e.subject_id);
        if (it == cls_of.end())
            cls_of[e.subject_id] = e.diagnosis;
        else if (it->second != e.diagnosis)
            throw Error::data("MixedSubjectClass",
                              "subject '" + e.subject_id + "' has entries in two classes");
    }
    std::map<DiagnosticClass, std::vector<std::string>> out;
    out[classes.first] = {};
    out[classes.second] = {};
    for (const auto& [s, c] : cls_of) out[c].push_back(s);
    return out;
}

}  // namespace detail

inline FoldPlan make_fold_plan(const DatasetManifest& manifest,
                               std::pair<DiagnosticClass, DiagnosticClass> classes,
                               int k = 5, std::uint64_t seed = 0) {
    if (k < 2) throw Error::data("InvalidParams", "k must be >= 2");
    auto by_class = detail::subjects_by_class(manifest, classes);
    for (const auto& [c, subs] : by_class)
        if (subs.size() < static_cast<std::size_t>(k))
            throw Error::data("TooFewSubjects",
                              "class " + to_string(c) + " has " +
                                  std::to_string(subs.size()) + " subjects, need >= " +
                                  std::to_string(k));

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.classes = classes;

    // Per class: shuffle, deal round-robin; fold class counts stay within +-1.
    std::map<DiagnosticClass, std::vector<std::string>> shuffled;
    for (auto& [c, subs] : by_class) {
        std::mt19937_64 rng(seed * 1000003ull + 17ull * static_cast<unsigned>(c));
        std::shuffle(subs.begin(), subs.end(), rng);
        for (std::size_t i = 0; i < subs.size(); ++i)
            plan.fold_of_subject[subs[i]] = static_cast<int>(i % k);
        shuffled[c] = subs;
    }

    // Inner 80/20 split of the non-test subjects, stratified by class.
    plan.train_subjects.assign(k, {});
    plan.val_subjects.assign(k, {});
    for (int f = 0; f < k; ++f) {
        for (const auto& [c, subs] : shuffled) {
            std::vector<std::string> rest;
            for (const auto& s : subs)
                if (plan.fold_of_subject[s] != f) rest.push_back(s);
            std::sort(rest.begin(), rest.end());
            std::mt19937_64 rng(seed * 9176ull + f * 131ull + static_cast<unsigned>(c));
            std::shuffle(rest.begin(), rest.end(), rng);
            // round toward validation having at least one subject
            std::size_t n_val = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::lround(0.2 * rest.size())));
            if (n_val >= rest.size()) n_val = rest.size() - 1;
            for (std::size_t i = 0; i < rest.size(); ++i)
                (i < n_val ? plan.val_subjects[f] : plan.train_subjects[f])
                    .push_back(rest[i]);
        }
        std::sort(plan.train_subjects[f].begin(), plan.train_subjects[f].end());
        std::sort(plan.val_subjects[f].begin(), plan.val_subjects[f].end());
    }
    return plan;
}

struct SplitLists {
    std::vector<ManifestEntry> train, val, test;
};

inline SplitLists materialize_split(const FoldPlan& plan, int fold,
                                    const DatasetManifest& manifest) {
    if (fold < 0 || fold >= plan.k)
        throw Error::data("InvalidParams", "fold index out of range");
    std::set<std::string> train_set(plan.train_subjects[fold].begin(),
                                    plan.train_subjects[fold].end());
    std::set<std::string> val_set(plan.val_subjects[fold].begin(),
                                  plan.val_subjects[fold].end());
    SplitLists out;
    for (const auto& e : manifest.entries) {
        if (e.diagnosis != plan.classes.first && e.diagnosis != plan.classes.second)
            continue;
        auto it = plan.fold_of_subject.find(e.subject_id);
        if (it == plan.fold_of_subject.end())
            throw Error::data("UnknownSubject",
                              "subject '" + e.subject_id + "' not covered by the fold plan");
        if (it->second == fold)
            out.test.push_back(e);
        else if (val_set.count(e.subject_id))
            out.val.push_back(e);
        else if (train_set.count(e.subject_id))
            out.train.push_back(e);
        else
            throw Error::data("UnknownSubject",
                              "subject '" + e.subject_id + "' missing from inner split");
    }
    return out;
}

}  // namespace neuroink
