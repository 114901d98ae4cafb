#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "neuroink/backend.hpp"
#include "neuroink/early_stopping.hpp"
#include "neuroink/metrics.hpp"
#include "neuroink/model.hpp"

namespace neuroink {

namespace detail {

inline torch::Tensor labels_tensor(const std::vector<LabeledImage>& samples,
                                   const std::vector<std::size_t>& idx) {
    auto t = torch::empty({static_cast<long>(idx.size())}, torch::kLong);
    auto acc = t.accessor<long, 1>();
    for (std::size_t i = 0; i < idx.size(); ++i) acc[i] = samples[idx[i]].label;
    return t;
}

inline torch::Tensor images_tensor(const std::vector<LabeledImage>& samples,
                                   const std::vector<std::size_t>& idx) {
    std::vector<const GrayImage*> ptrs;
    ptrs.reserve(idx.size());
    for (auto i : idx) ptrs.push_back(&samples[i].image);
    return to_input_tensor(ptrs);
}

inline std::map<std::string, torch::Tensor> clone_state(const torch::nn::Module& m) {
    std::map<std::string, torch::Tensor> out;
    for (const auto& p : m.named_parameters()) out[p.key()] = p.value().detach().clone();
    for (const auto& b : m.named_buffers()) out["buf/" + b.key()] = b.value().detach().clone();
    return out;
}

inline void restore_state(torch::nn::Module& m,
                          const std::map<std::string, torch::Tensor>& state) {
    torch::NoGradGuard no_grad;
    for (const auto& p : m.named_parameters()) p.value().copy_(state.at(p.key()));
    for (const auto& b : m.named_buffers()) b.value().copy_(state.at("buf/" + b.key()));
}

}  // namespace detail

struct EvalResult {
    std::vector<int> y_true, y_pred;
    std::vector<double> prob_positive;
    double macro_f1_score = 0.0;
    double unweighted_acc = 0.0;
    double accuracy = 0.0;
};

inline EvalResult evaluate(Classifier& model, const std::vector<LabeledImage>& samples,
                           int batch_size = 16) {
    if (samples.empty()) throw Error::data("EmptySplit", "no samples to evaluate");
    EvalResult res;
    for (std::size_t start = 0; start < samples.size();
         start += static_cast<std::size_t>(batch_size)) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start;
             i < std::min(samples.size(), start + batch_size); ++i)
            idx.push_back(i);
        auto probs = predict(model, detail::images_tensor(samples, idx));
        auto acc = probs.accessor<float, 2>();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            res.y_true.push_back(samples[idx[i]].label);
            res.y_pred.push_back(acc[i][1] >= acc[i][0] ? 1 : 0);
            res.prob_positive.push_back(acc[i][1]);
        }
    }
    res.macro_f1_score = macro_f1(res.y_true, res.y_pred);
    res.unweighted_acc = unweighted_accuracy(res.y_true, res.y_pred);
    res.accuracy = plain_accuracy(res.y_true, res.y_pred);
    return res;
}

// AdamW + cross-entropy loop with per-epoch validation, early stopping on
// validation loss, best-validation-loss checkpoint restored before returning.
inline TrainRecordLog train_fold(Classifier& model,
                                 const std::vector<LabeledImage>& train,
                                 const std::vector<LabeledImage>& val,
                                 const TrainConfig& cfg) {
    cfg.validate();
    if (train.empty() || val.empty())
        throw Error::data("EmptySplit", "train and validation must be non-empty");

    torch::optim::AdamW optim(
        model->parameters(),
        torch::optim::AdamWOptions(cfg.lr)
            .betas({cfg.beta1, cfg.beta2})
            .weight_decay(cfg.weight_decay));

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed);

    TrainRecordLog log;
    EarlyStopper stopper(cfg.patience);
    std::map<std::string, torch::Tensor> best_state = detail::clone_state(*model);
    bool stopped_early = false;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        model->train();
        std::shuffle(order.begin(), order.end(), rng);
        double train_loss = 0.0;
        std::size_t nbatches = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<std::size_t> idx(
                order.begin() + start,
                order.begin() + std::min(order.size(),
                                         start + static_cast<std::size_t>(cfg.batch_size)));
            auto x = detail::images_tensor(train, idx);
            auto y = detail::labels_tensor(train, idx);
            optim.zero_grad();
            auto loss = torch::nn::functional::cross_entropy(model->forward(x), y);
            const double lval = loss.item<double>();
            if (!std::isfinite(lval))
                throw Error::runtime("NonFiniteLoss",
                                     "training loss is not finite at epoch " +
                                         std::to_string(epoch));
            loss.backward();
            optim.step();
            train_loss += lval;
            ++nbatches;
        }
        train_loss /= static_cast<double>(std::max<std::size_t>(1, nbatches));

        // validation pass
        model->eval();
        double val_loss = 0.0;
        std::vector<int> vy_true, vy_pred;
        {
            torch::NoGradGuard no_grad;
            std::size_t nval = 0;
            for (std::size_t start = 0; start < val.size();
                 start += static_cast<std::size_t>(cfg.batch_size)) {
                std::vector<std::size_t> idx;
                for (std::size_t i = start;
                     i < std::min(val.size(), start + static_cast<std::size_t>(cfg.batch_size));
                     ++i)
                    idx.push_back(i);
                auto logits = model->forward(detail::images_tensor(val, idx));
                auto y = detail::labels_tensor(val, idx);
                val_loss += torch::nn::functional::cross_entropy(
                                logits, y,
                                torch::nn::functional::CrossEntropyFuncOptions().reduction(
                                    torch::kSum))
                                .item<double>();
                auto pred = logits.argmax(1);
                auto pacc = pred.accessor<long, 1>();
                for (std::size_t i = 0; i < idx.size(); ++i) {
                    vy_true.push_back(val[idx[i]].label);
                    vy_pred.push_back(static_cast<int>(pacc[i]));
                }
                nval += idx.size();
            }
            val_loss /= static_cast<double>(nval);
        }
        if (!std::isfinite(val_loss))
            throw Error::runtime("NonFiniteLoss", "validation loss is not finite");

        log.epochs.push_back({epoch, train_loss, val_loss, macro_f1(vy_true, vy_pred)});

        const int prev_best = stopper.best_epoch();
        const bool stop = stopper.observe(epoch, val_loss);
        if (stopper.best_epoch() == epoch && stopper.best_epoch() != prev_best)
            best_state = detail::clone_state(*model);
        if (stop) {
            stopped_early = true;
            break;
        }
    }

    log.best_epoch = stopper.best_epoch();
    log.stop_reason = stopped_early ? "early_stop" : "max_epochs";
    detail::restore_state(*model, best_state);
    return log;
}

}  // namespace neuroink
