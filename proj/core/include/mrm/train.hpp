#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mrm/events.hpp"
#include "mrm/key_value.hpp"
#include "mrm/model.hpp"
#include "mrm/params.hpp"

namespace mrm {

enum class ModelKind { mrm, plain_lstm, logistic };

std::string_view to_string(ModelKind kind);
/// Accepts "mrm", "plain_lstm" and "lr".
ModelKind parse_model_kind(std::string_view text);

/// A trainable scorer of event sequences.
class SequenceModel {
public:
    virtual ~SequenceModel() = default;

    virtual ModelKind kind() const = 0;
    virtual ad::ParameterSet& params() = 0;
    virtual const ad::ParameterSet& params() const = 0;
    /// Probability of the positive outcome.
    virtual double predict(const EventSequence& seq) const = 0;
    /// Loss on one sequence; its gradient is added into `grads`, which has
    /// the layout of params(). Safe to call concurrently.
    virtual double loss_and_gradient(const EventSequence& seq, ad::ParameterSet& grads) const = 0;
};

/// The multi-level model, or the plain LSTM baseline sharing its parameters.
class MrmModel final : public SequenceModel {
public:
    MrmModel(MrmConfig config, MrmParams params, bool plain_lstm = false);

    ModelKind kind() const override { return plain_ ? ModelKind::plain_lstm : ModelKind::mrm; }
    ad::ParameterSet& params() override { return params_.set(); }
    const ad::ParameterSet& params() const override { return params_.set(); }
    double predict(const EventSequence& seq) const override;
    double loss_and_gradient(const EventSequence& seq, ad::ParameterSet& grads) const override;

    const MrmConfig& config() const noexcept { return config_; }

private:
    MrmConfig config_;
    MrmParams params_;
    bool plain_;
};

/// Logistic regression on the code frequency vector with an L2 penalty
/// l2 * ||w||^2 on the weights (not the bias).
class LogisticModel final : public SequenceModel {
public:
    LogisticModel(std::size_t num_codes, double l2);
    LogisticModel(ad::ParameterSet params, double l2);

    ModelKind kind() const override { return ModelKind::logistic; }
    ad::ParameterSet& params() override { return params_; }
    const ad::ParameterSet& params() const override { return params_; }
    double predict(const EventSequence& seq) const override;
    double loss_and_gradient(const EventSequence& seq, ad::ParameterSet& grads) const override;

    double l2() const noexcept { return l2_; }
    std::size_t num_codes() const noexcept { return params_[0].rows(); }

private:
    ad::ParameterSet params_;
    double l2_;
};

struct TrainConfig {
    double lr = 1e-3;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 30;
    /// Stop once this many consecutive epochs fail to improve validation AUC.
    std::size_t patience = 5;
    std::uint64_t seed = 1;
    double clip_norm = 5.0;
    /// Workers for per-sequence forward/backward; results do not depend on it.
    std::size_t threads = 1;

    void validate() const;
};

/// Metrics on one split; NaN where the split lacks a class.
struct SplitMetrics {
    double auc = 0.0;
    double ap = 0.0;
    double loss = 0.0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
};

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double valid_auc = 0.0;
    double valid_loss = 0.0;
    bool improved = false;
};

struct EvalReport {
    ModelKind kind = ModelKind::mrm;
    SplitMetrics train;
    SplitMetrics valid;
    SplitMetrics test;
    std::vector<EpochStats> trace;
    std::size_t best_epoch = 0;

    double auc() const noexcept { return test.auc; }
    double ap() const noexcept { return test.ap; }

    KeyValues to_key_values() const;
    /// `epoch,train_loss,valid_auc` rows with round-trip exact numbers.
    void write_trace_csv(std::ostream& out) const;
};

/// Hooks for progress reporting and call-order auditing.
struct TrainObserver {
    std::function<void(const EpochStats&)> on_epoch;
    /// Called with "valid", "train" or "test" whenever a split is scored.
    std::function<void(std::string_view split)> on_evaluate;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::size_t epoch, std::size_t batch, const std::string& what);
    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

std::vector<double> predict_all(const SequenceModel& model, std::span<const EventSequence> sequences,
                                std::size_t threads = 1);
SplitMetrics evaluate(const SequenceModel& model, std::span<const EventSequence> sequences, std::size_t threads = 1);

/// Mini-batch Adam on the mean loss with global-norm clipping and early
/// stopping on validation AUC (validation loss when the validation split has
/// a single class). Leaves the best parameters in `model` and scores the test
/// split only after selection. `split` must already be normalised.
EvalReport fit(SequenceModel& model, const DatasetSplit& split, const TrainConfig& config,
               const TrainObserver* observer = nullptr);

}  // namespace mrm
