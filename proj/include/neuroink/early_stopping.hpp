#pragma once

#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neuroink/common.hpp"

namespace neuroink {

struct TrainConfig {
    double lr = 1e-5;  // one rate for head and backbone
    double weight_decay = 0.01;
    double beta1 = 0.9, beta2 = 0.999;
    int batch_size = 16;
    int max_epochs = 50;
    int patience = 10;
    std::uint64_t seed = 0;

    void validate() const {
        if (lr <= 0.0) throw Error::data("InvalidParams", "lr must be positive");
        if (patience >= max_epochs)
            throw Error::data("InvalidParams", "patience must be < max_epochs");
        if (batch_size <= 0) throw Error::data("InvalidParams", "batch_size must be positive");
    }
};

// Improvement = strictly lower validation loss (min_delta 0), checked once per
// epoch; stop after `patience` consecutive non-improving epochs.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    // Epochs are 1-based. Returns true when training should stop after this epoch.
    bool observe(int epoch, double val_loss) {
        if (val_loss < best_loss_) {
            best_loss_ = val_loss;
            best_epoch_ = epoch;
            bad_streak_ = 0;
        } else {
            ++bad_streak_;
        }
        return bad_streak_ >= patience_;
    }

    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }

private:
    int patience_;
    int best_epoch_ = 0;
    int bad_streak_ = 0;
    double best_loss_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_macro_f1 = 0.0;
};

struct TrainRecordLog {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    std::string stop_reason;  // "early_stop" | "max_epochs"

    nlohmann::json to_json() const {
        nlohmann::json je = nlohmann::json::array();
        for (const auto& e : epochs)
            je.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"val_loss", e.val_loss},
                          {"val_macro_f1", e.val_macro_f1}});
        return {{"epochs", std::move(je)},
                {"best_epoch", best_epoch},
                {"stop_reason", stop_reason}};
    }
};

struct StopOutcome {
    int stop_epoch = 0;  // last epoch actually run
    int best_epoch = 0;
    std::string reason;
};

// Replays a validation-loss sequence through the stopper; the training loop
// follows exactly this schedule.
inline StopOutcome simulate_early_stopping(const std::vector<double>& val_losses,
                                           int patience, int max_epochs) {
    EarlyStopper stopper(patience);
    StopOutcome out;
    for (int epoch = 1; epoch <= max_epochs &&
                        epoch <= static_cast<int>(val_losses.size()); ++epoch) {
        out.stop_epoch = epoch;
        if (stopper.observe(epoch, val_losses[epoch - 1])) {
            out.best_epoch = stopper.best_epoch();
            out.reason = "early_stop";
            return out;
        }
    }
    out.best_epoch = stopper.best_epoch();
    out.reason = "max_epochs";
    return out;
}

}  // namespace neuroink
