#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>

#include "mrm/archive.hpp"
#include "mrm/events.hpp"
#include "mrm/model.hpp"
#include "mrm/train.hpp"

namespace mrm {

/// Trained weights together with everything needed to score new data: model
/// kind and configuration, vocabulary sizes, normalisation statistics from
/// the training split, and the split recipe.
struct Checkpoint {
    ModelKind kind = ModelKind::mrm;
    MrmConfig model_config;
    DatasetConfig dataset;
    double l2 = 0.0;
    std::uint64_t split_seed = 1;
    std::array<double, 3> split_fractions = kDefaultSplit;
    ad::ParameterSet params;

    ad::Archive to_archive() const;
    /// Re-validates the embedded configuration against the stored tensors.
    static Checkpoint from_archive(const ad::Archive& archive);
    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

    std::unique_ptr<SequenceModel> make_model() const;
    /// Human-readable configuration written next to the checkpoint.
    KeyValues config_echo() const;
    /// Throws DataError when a dataset's vocabulary differs from the checkpoint's.
    void check_compatible(const DatasetConfig& data) const;
};

struct TrainResult {
    Checkpoint checkpoint;
    EvalReport report;
};

/// Normalises with training-split statistics, initialises from config.seed
/// and fits an MRM (or plain LSTM) model.
TrainResult train(ModelKind kind, const DatasetSplit& split, const TrainConfig& train_config,
                  const MrmConfig& model_config, const TrainObserver* observer = nullptr);

/// Logistic regression on frequency vectors, same optimiser and stopping rule.
TrainResult train_lr_baseline(const DatasetSplit& split, double l2, const TrainConfig& train_config,
                              const DatasetConfig& dataset, const TrainObserver* observer = nullptr);

}  // namespace mrm
