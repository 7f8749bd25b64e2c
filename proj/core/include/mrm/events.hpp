#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrm/key_value.hpp"

namespace mrm {

struct NumericFeature {
    std::size_t id = 0;
    double value = 0.0;

    friend bool operator==(const NumericFeature&, const NumericFeature&) = default;
};

/// One clinical event: type code, time in hours, categorical and numerical features.
struct ClinicalEvent {
    std::size_t code = 0;
    double t = 0.0;
    std::vector<std::size_t> cat;
    std::vector<NumericFeature> num;

    friend bool operator==(const ClinicalEvent&, const ClinicalEvent&) = default;
};

/// A labelled patient record; events are sorted by time (ties keep file order).
struct EventSequence {
    std::string patient_id;
    int label = 0;
    std::vector<ClinicalEvent> events;

    std::size_t length() const noexcept { return events.size(); }
    std::vector<double> times() const;

    friend bool operator==(const EventSequence&, const EventSequence&) = default;
};

struct FeatureStats {
    double mean = 0.0;
    double std = 1.0;
};

inline constexpr double kStdFloor = 1e-6;

struct DatasetConfig {
    std::size_t num_codes = 1;
    std::size_t num_features = 0;
    std::size_t max_features = 3;
    /// Indexed by feature id; empty until computed from a training split.
    std::vector<FeatureStats> numeric_stats;

    void validate() const;
    /// Only the vocabulary sizes; statistics travel with model checkpoints.
    KeyValues to_key_values() const;
    static DatasetConfig from_key_values(const KeyValues& kv);
};

/// Malformed or out-of-range input data. `line()` is 1-based, 0 when unknown.
class DataError : public std::runtime_error {
public:
    DataError(std::size_t line, const std::string& what);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Throws DataError when the sequence violates the data model invariants.
void validate_sequence(const EventSequence& seq, const DatasetConfig& config, std::size_t line = 0);

/// Parses one record per line; sorts events by time (stable).
std::vector<EventSequence> parse_dataset(std::istream& in, const DatasetConfig& config);
std::vector<EventSequence> load_dataset(const std::filesystem::path& path, const DatasetConfig& config);
void write_dataset(std::ostream& out, std::span<const EventSequence> sequences);
void save_dataset(const std::filesystem::path& path, std::span<const EventSequence> sequences);

/// Sidecar holding N_c, N_f and maxFeat: `<dataset>.cfg`.
std::filesystem::path sidecar_path(const std::filesystem::path& dataset);
DatasetConfig load_dataset_config(const std::filesystem::path& dataset);

/// Per-feature mean and population standard deviation over the given
/// sequences. Features never observed get mean 0, std 1.
std::vector<FeatureStats> compute_numeric_stats(std::span<const EventSequence> sequences,
                                                std::size_t num_features);

/// Replaces each numerical value v by (v - mean) / max(std, 1e-6).
std::vector<EventSequence> normalize_numeric(std::span<const EventSequence> sequences,
                                             const DatasetConfig& config);

/// Count of events per code.
std::vector<double> frequency_vector(const EventSequence& seq, std::size_t num_codes);

struct DatasetSplit {
    std::vector<EventSequence> train;
    std::vector<EventSequence> valid;
    std::vector<EventSequence> test;
};

/// Seeded shuffle, then floor(n * f_train) and floor(n * f_valid) sequences
/// for the first two parts; the remainder goes to test.
DatasetSplit split_dataset(std::vector<EventSequence> sequences, std::array<double, 3> fractions,
                           std::uint64_t seed);

inline constexpr std::array<double, 3> kDefaultSplit{0.7, 0.1, 0.2};

}  // namespace mrm
