#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mrm/events.hpp"
#include "mrm/key_value.hpp"

namespace mrm {

/// Synthetic benchmark with a planted label rule:
///
///   y = 1  iff  some A and some B lie within `signal_window` hours of each
///               other, and the first C precedes the first D.
///
/// Every sequence carries exactly one A, B, C and D, so code counts carry no
/// signal. Negatives break the rule by separating A and B by at least
/// kDecoyGapFactor * signal_window hours, by reversing C and D, or both.
/// Background events use the remaining codes at homogeneous Poisson times
/// (uniform given the count) and get random, label-free features.
struct SynthConfig {
    std::size_t n_sequences = 2000;
    std::size_t vocab_size = 50;
    std::size_t seq_len_min = 40;
    std::size_t seq_len_max = 120;
    /// Mean events per hour.
    double base_rate = 4.0;
    double signal_window = 0.5;
    std::size_t marker_a = 0;
    std::size_t marker_b = 1;
    std::size_t marker_c = 2;
    std::size_t marker_d = 3;
    double positive_fraction = 0.5;
    std::size_t num_features = 8;
    std::size_t max_features = 3;
    std::uint64_t seed = 1;

    /// Throws std::invalid_argument for impossible combinations, e.g. a
    /// duration too short to place a separated A/B pair.
    void validate() const;
    DatasetConfig dataset_config() const;
    KeyValues to_key_values() const;
    /// Missing keys keep their defaults.
    static SynthConfig from_key_values(const KeyValues& kv);
};

inline constexpr double kDecoyGapFactor = 3.0;

/// Deterministic in the config; sequence i draws from a generator seeded by (seed, i).
std::vector<EventSequence> generate(const SynthConfig& config);
EventSequence generate_one(const SynthConfig& config, std::size_t index);

/// Evaluates the label rule on the events as given.
int label_oracle(const EventSequence& seq, const SynthConfig& config);

}  // namespace mrm
