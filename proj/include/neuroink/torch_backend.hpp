#pragma once

#include <map>
#include <memory>
#include <vector>

#include "neuroink/train.hpp"

namespace neuroink {

struct TorchBackendConfig {
    ClassifierConfig model;
    TrainConfig train;
    // Frozen mode: backbone features computed once per sample and cached,
    // only the head is optimized (at head_lr, which may exceed train.lr).
    bool freeze_backbone = false;
    double head_lr = 1e-3;
    int head_max_epochs = 200;
    int head_patience = 20;
};

// Shared across folds when the backbone is frozen: features depend only on the
// backbone weights, which are fixed by the config.
using FeatureCache = std::map<std::string, torch::Tensor>;

class TorchBackend : public TrainEvalBackend {
public:
    explicit TorchBackend(TorchBackendConfig cfg,
                          std::shared_ptr<FeatureCache> cache = nullptr)
        : cfg_(std::move(cfg)), cache_(std::move(cache)) {}

    void fit(const std::vector<LabeledImage>& train,
             const std::vector<LabeledImage>& val, std::uint64_t seed) override {
        auto model_cfg = cfg_.model;
        model_cfg.init_seed = model_cfg.init_seed ^ (cfg_.freeze_backbone ? 0 : seed);
        model_ = std::make_unique<Classifier>(build_classifier(model_cfg));
        if (cfg_.freeze_backbone) {
            torch::manual_seed(seed);  // fresh head init per fold
            reinit_head(seed);
            fit_head(train, val);
        } else {
            auto train_cfg = cfg_.train;
            train_cfg.seed = seed;
            log_ = train_fold(*model_, train, val, train_cfg);
        }
    }

    std::vector<int> predict(const std::vector<LabeledImage>& samples) override {
        if (!model_) throw Error::runtime("NotFitted", "fit() before predict()");
        if (!cfg_.freeze_backbone) return evaluate(*model_, samples).y_pred;
        auto feats = features_for(samples);
        torch::NoGradGuard no_grad;
        (*model_)->eval();
        auto pred = (*model_)->head(feats).argmax(1);
        auto acc = pred.accessor<long, 1>();
        std::vector<int> out(samples.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(acc[i]);
        return out;
    }

    const TrainRecordLog& log() const { return log_; }
    Classifier& model() { return *model_; }

private:
    void reinit_head(std::uint64_t seed) {
        torch::manual_seed(seed * 7919ull + 1);
        for (auto& m : {(*model_)->fc1, (*model_)->fc2}) {
            torch::NoGradGuard no_grad;
            torch::nn::init::kaiming_uniform_(m->weight, std::sqrt(5.0));
            torch::nn::init::zeros_(m->bias);
        }
    }

    torch::Tensor features_for(const std::vector<LabeledImage>& samples) {
        if (samples.empty()) throw Error::data("EmptySplit", "no samples");
        torch::NoGradGuard no_grad;
        (*model_)->eval();
        std::vector<torch::Tensor> rows(samples.size());
        // fill cache misses in small batches
        std::vector<std::size_t> missing;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (cache_) {
                auto it = cache_->find(samples[i].sample_id);
                if (it != cache_->end()) {
                    rows[i] = it->second;
                    continue;
                }
            }
            missing.push_back(i);
        }
        const std::size_t bs = 8;
        for (std::size_t start = 0; start < missing.size(); start += bs) {
            std::vector<const GrayImage*> ptrs;
            for (std::size_t i = start; i < std::min(missing.size(), start + bs); ++i)
                ptrs.push_back(&samples[missing[i]].image);
            auto f = (*model_)->backbone(to_input_tensor(ptrs));
            for (std::size_t i = start; i < std::min(missing.size(), start + bs); ++i) {
                rows[missing[i]] = f[static_cast<long>(i - start)].clone();
                if (cache_) (*cache_)[samples[missing[i]].sample_id] = rows[missing[i]];
            }
        }
        return torch::stack(rows);
    }

    void fit_head(const std::vector<LabeledImage>& train,
                  const std::vector<LabeledImage>& val) {
        if (train.empty() || val.empty())
            throw Error::data("EmptySplit", "train and validation must be non-empty");
        auto x_train = features_for(train);
        auto x_val = features_for(val);
        auto y_train = torch::empty({static_cast<long>(train.size())}, torch::kLong);
        auto y_val = torch::empty({static_cast<long>(val.size())}, torch::kLong);
        for (std::size_t i = 0; i < train.size(); ++i)
            y_train[static_cast<long>(i)] = train[i].label;
        for (std::size_t i = 0; i < val.size(); ++i)
            y_val[static_cast<long>(i)] = val[i].label;

        std::vector<torch::Tensor> head_params;
        for (auto& m : {(*model_)->fc1, (*model_)->fc2}) {
            head_params.push_back(m->weight);
            head_params.push_back(m->bias);
        }
        torch::optim::AdamW optim(head_params,
                                  torch::optim::AdamWOptions(cfg_.head_lr)
                                      .betas({cfg_.train.beta1, cfg_.train.beta2})
                                      .weight_decay(cfg_.train.weight_decay));

        EarlyStopper stopper(cfg_.head_patience);
        auto best = detail::clone_state(*(*model_)->fc1);
        auto best2 = detail::clone_state(*(*model_)->fc2);
        log_ = TrainRecordLog{};
        bool stopped_early = false;
        for (int epoch = 1; epoch <= cfg_.head_max_epochs; ++epoch) {
            optim.zero_grad();
            auto loss = torch::nn::functional::cross_entropy((*model_)->head(x_train),
                                                             y_train);
            const double lval = loss.item<double>();
            if (!std::isfinite(lval))
                throw Error::runtime("NonFiniteLoss", "head training diverged");
            loss.backward();
            optim.step();

            double val_loss;
            double val_f1;
            {
                torch::NoGradGuard no_grad;
                auto logits = (*model_)->head(x_val);
                val_loss = torch::nn::functional::cross_entropy(logits, y_val)
                               .item<double>();
                auto pred = logits.argmax(1);
                std::vector<int> yt, yp;
                auto ta = y_val.accessor<long, 1>();
                auto pa = pred.accessor<long, 1>();
                for (long i = 0; i < y_val.size(0); ++i) {
                    yt.push_back(static_cast<int>(ta[i]));
                    yp.push_back(static_cast<int>(pa[i]));
                }
                val_f1 = macro_f1(yt, yp);
            }
            log_.epochs.push_back({epoch, lval, val_loss, val_f1});
            const int prev_best = stopper.best_epoch();
            const bool stop = stopper.observe(epoch, val_loss);
            if (stopper.best_epoch() == epoch && stopper.best_epoch() != prev_best) {
                best = detail::clone_state(*(*model_)->fc1);
                best2 = detail::clone_state(*(*model_)->fc2);
            }
            if (stop) {
                stopped_early = true;
                break;
            }
        }
        log_.best_epoch = stopper.best_epoch();
        log_.stop_reason = stopped_early ? "early_stop" : "max_epochs";
        detail::restore_state(*(*model_)->fc1, best);
        detail::restore_state(*(*model_)->fc2, best2);
    }

    TorchBackendConfig cfg_;
    std::shared_ptr<FeatureCache> cache_;
    std::unique_ptr<Classifier> model_;
    TrainRecordLog log_;
};

}  // namespace neuroink
