#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "neuroink/common.hpp"
#include "neuroink/image.hpp"

namespace neuroink {

struct LabeledImage {
    GrayImage image;
    int label = 0;  // 1 = positive class (classes.first), 0 = control side
    std::string sample_id;
    std::string subject_id;
    std::string dataset;
};

// Train/evaluate seam between the experiment orchestrator and the classifier.
// The ResNet50 backend (torch_backend.hpp) and the lightweight linear backend
// below both implement it; orchestration code never touches tensors.
class TrainEvalBackend {
public:
    virtual ~TrainEvalBackend() = default;
    virtual void fit(const std::vector<LabeledImage>& train,
                     const std::vector<LabeledImage>& val, std::uint64_t seed) = 0;
    virtual std::vector<int> predict(const std::vector<LabeledImage>& samples) = 0;
};

using BackendFactory = std::function<std::unique_ptr<TrainEvalBackend>()>;

// Logistic regression on a handful of global intensity statistics. Exists for
// fast pipeline exercises (dry runs, bookkeeping tests, smoke suites), not for
// accuracy.
class LinearPixelBackend : public TrainEvalBackend {
public:
    static std::vector<double> features(const GrayImage& img) {
        const double n = static_cast<double>(img.px.size());
        double mean = 0.0;
        for (auto v : img.px) mean += v;
        mean /= n;
        double var = 0.0, ink = 0.0;
        for (auto v : img.px) {
            var += (v - mean) * (v - mean);
            if (v < 250) ink += 1.0;
        }
        var /= n;
        // quadrant means pick up gross spatial asymmetry
        std::array<double, 4> quad{0, 0, 0, 0};
        std::array<double, 4> qn{0, 0, 0, 0};
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                const int q = (y >= img.height / 2) * 2 + (x >= img.width / 2);
                quad[q] += img.at(x, y);
                qn[q] += 1.0;
            }
        std::vector<double> f = {1.0, mean / 255.0, std::sqrt(var) / 255.0, ink / n};
        for (int q = 0; q < 4; ++q) f.push_back(quad[q] / qn[q] / 255.0);
        return f;
    }

    void fit(const std::vector<LabeledImage>& train,
             const std::vector<LabeledImage>& /*val*/, std::uint64_t seed) override {
        if (train.empty()) throw Error::data("EmptySplit", "no training samples");
        std::vector<std::vector<double>> xs;
        std::vector<int> ys;
        for (const auto& s : train) {
            xs.push_back(features(s.image));
            ys.push_back(s.label);
        }
        const std::size_t dim = xs[0].size();
        w_.assign(dim, 0.0);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> init(0.0, 0.01);
        for (auto& v : w_) v = init(rng);

        const double lr = 0.5;
        for (int epoch = 0; epoch < 300; ++epoch) {
            std::vector<double> grad(dim, 0.0);
            for (std::size_t i = 0; i < xs.size(); ++i) {
                double z = 0.0;
                for (std::size_t d = 0; d < dim; ++d) z += w_[d] * xs[i][d];
                const double p = 1.0 / (1.0 + std::exp(-z));
                const double err = p - ys[i];
                for (std::size_t d = 0; d < dim; ++d) grad[d] += err * xs[i][d];
            }
            for (std::size_t d = 0; d < dim; ++d)
                w_[d] -= lr * grad[d] / static_cast<double>(xs.size());
        }
    }

    std::vector<int> predict(const std::vector<LabeledImage>& samples) override {
        std::vector<int> out;
        out.reserve(samples.size());
        for (const auto& s : samples) {
            const auto f = features(s.image);
            double z = 0.0;
            for (std::size_t d = 0; d < f.size(); ++d) z += w_[d] * f[d];
            out.push_back(z >= 0.0 ? 1 : 0);
        }
        return out;
    }

private:
    std::vector<double> w_;
};

}  // namespace neuroink
