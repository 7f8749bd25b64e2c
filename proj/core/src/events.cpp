#include "mrm/events.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

namespace mrm {

using nlohmann::json;

std::vector<double> EventSequence::times() const {
    std::vector<double> out;
    out.reserve(events.size());
    for (const auto& e : events) out.push_back(e.t);
    return out;
}

void DatasetConfig::validate() const {
    if (num_codes < 1) throw std::invalid_argument("DatasetConfig: N_c must be >= 1");
    if (!numeric_stats.empty() && numeric_stats.size() != num_features)
        throw std::invalid_argument("DatasetConfig: " + std::to_string(numeric_stats.size()) +
                                    " feature statistics for N_f = " + std::to_string(num_features));
}

KeyValues DatasetConfig::to_key_values() const {
    KeyValues kv;
    kv.set("N_c", static_cast<long long>(num_codes));
    kv.set("N_f", static_cast<long long>(num_features));
    kv.set("maxFeat", static_cast<long long>(max_features));
    return kv;
}

DatasetConfig DatasetConfig::from_key_values(const KeyValues& kv) {
    DatasetConfig c;
    const auto nc = kv.get_int("N_c");
    const auto nf = kv.get_int("N_f");
    const auto mf = kv.get_int("maxFeat");
    if (nc < 1 || nf < 0 || mf < 0) throw std::invalid_argument("DatasetConfig: N_c >= 1, N_f >= 0, maxFeat >= 0");
    c.num_codes = static_cast<std::size_t>(nc);
    c.num_features = static_cast<std::size_t>(nf);
    c.max_features = static_cast<std::size_t>(mf);
    return c;
}

DataError::DataError(std::size_t line, const std::string& what)
    : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

void validate_sequence(const EventSequence& seq, const DatasetConfig& config, std::size_t line) {
    if (seq.label != 0 && seq.label != 1) throw DataError(line, "label must be 0 or 1");
    if (seq.events.empty()) throw DataError(line, "empty event list for patient '" + seq.patient_id + "'");
    for (std::size_t i = 0; i < seq.events.size(); ++i) {
        const ClinicalEvent& e = seq.events[i];
        const std::string where = "event " + std::to_string(i) + ": ";
        if (e.code >= config.num_codes)
            throw DataError(line, where + "code " + std::to_string(e.code) + " >= N_c = " +
                                      std::to_string(config.num_codes));
        if (!std::isfinite(e.t)) throw DataError(line, where + "non-finite time");
        if (i > 0 && e.t < seq.events[i - 1].t) throw DataError(line, where + "events not sorted by time");
        if (e.cat.size() + e.num.size() > config.max_features)
            throw DataError(line, where + std::to_string(e.cat.size() + e.num.size()) + " features > maxFeat = " +
                                      std::to_string(config.max_features));
        for (std::size_t f : e.cat)
            if (f >= config.num_features)
                throw DataError(line, where + "categorical feature " + std::to_string(f) + " >= N_f = " +
                                          std::to_string(config.num_features));
        for (const NumericFeature& f : e.num) {
            if (f.id >= config.num_features)
                throw DataError(line, where + "numerical feature " + std::to_string(f.id) + " >= N_f = " +
                                          std::to_string(config.num_features));
            if (!std::isfinite(f.value)) throw DataError(line, where + "non-finite numerical value");
        }
    }
}

namespace {

EventSequence from_json(const json& j) {
    EventSequence seq;
    seq.patient_id = j.at("patient_id").get<std::string>();
    seq.label = j.at("label").get<int>();
    for (const json& je : j.at("events")) {
        ClinicalEvent e;
        const auto code = je.at("code").get<long long>();
        if (code < 0) throw std::invalid_argument("negative code");
        e.code = static_cast<std::size_t>(code);
        e.t = je.at("t").get<double>();
        if (je.contains("cat"))
            for (const json& f : je.at("cat")) {
                const auto id = f.get<long long>();
                if (id < 0) throw std::invalid_argument("negative feature id");
                e.cat.push_back(static_cast<std::size_t>(id));
            }
        if (je.contains("num"))
            for (const json& f : je.at("num")) {
                if (!f.is_array() || f.size() != 2) throw std::invalid_argument("num entry must be [id, value]");
                const auto id = f.at(0).get<long long>();
                if (id < 0) throw std::invalid_argument("negative feature id");
                e.num.push_back({static_cast<std::size_t>(id), f.at(1).get<double>()});
            }
        seq.events.push_back(std::move(e));
    }
    std::stable_sort(seq.events.begin(), seq.events.end(),
                     [](const ClinicalEvent& a, const ClinicalEvent& b) { return a.t < b.t; });
    return seq;
}

json to_json(const EventSequence& seq) {
    json events = json::array();
    for (const ClinicalEvent& e : seq.events) {
        json num = json::array();
        for (const NumericFeature& f : e.num) num.push_back(json::array({f.id, f.value}));
        events.push_back({{"code", e.code}, {"t", e.t}, {"cat", e.cat}, {"num", std::move(num)}});
    }
    return {{"patient_id", seq.patient_id}, {"label", seq.label}, {"events", std::move(events)}};
}

}  // namespace

std::vector<EventSequence> parse_dataset(std::istream& in, const DatasetConfig& config) {
    std::vector<EventSequence> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        EventSequence seq;
        try {
            seq = from_json(json::parse(line));
        } catch (const std::exception& e) {
            throw DataError(line_no, std::string("malformed record: ") + e.what());
        }
        validate_sequence(seq, config, line_no);
        out.push_back(std::move(seq));
    }
    return out;
}

std::vector<EventSequence> load_dataset(const std::filesystem::path& path, const DatasetConfig& config) {
    std::ifstream in(path);
    if (!in) throw DataError(0, "cannot read dataset " + path.string());
    return parse_dataset(in, config);
}

void write_dataset(std::ostream& out, std::span<const EventSequence> sequences) {
    for (const EventSequence& s : sequences) out << to_json(s).dump() << '\n';
}

void save_dataset(const std::filesystem::path& path, std::span<const EventSequence> sequences) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_dataset(out, sequences);
}

std::filesystem::path sidecar_path(const std::filesystem::path& dataset) {
    auto p = dataset;
    p += ".cfg";
    return p;
}

DatasetConfig load_dataset_config(const std::filesystem::path& dataset) {
    return DatasetConfig::from_key_values(KeyValues::load(sidecar_path(dataset)));
}

std::vector<FeatureStats> compute_numeric_stats(std::span<const EventSequence> sequences,
                                                std::size_t num_features) {
    std::vector<double> sum(num_features, 0.0), count(num_features, 0.0);
    for (const auto& s : sequences)
        for (const auto& e : s.events)
            for (const auto& f : e.num) {
                if (f.id >= num_features) throw DataError(0, "unknown feature id " + std::to_string(f.id));
                sum[f.id] += f.value;
                count[f.id] += 1.0;
            }
    std::vector<FeatureStats> stats(num_features);
    for (std::size_t k = 0; k < num_features; ++k)
        if (count[k] > 0) stats[k].mean = sum[k] / count[k];
    std::vector<double> sq(num_features, 0.0);
    for (const auto& s : sequences)
        for (const auto& e : s.events)
            for (const auto& f : e.num) {
                const double d = f.value - stats[f.id].mean;
                sq[f.id] += d * d;
            }
    for (std::size_t k = 0; k < num_features; ++k)
        if (count[k] > 0) stats[k].std = std::sqrt(sq[k] / count[k]);
    return stats;
}

std::vector<EventSequence> normalize_numeric(std::span<const EventSequence> sequences,
                                             const DatasetConfig& config) {
    const auto& stats = config.numeric_stats;
    std::vector<EventSequence> out(sequences.begin(), sequences.end());
    for (auto& s : out)
        for (auto& e : s.events)
            for (auto& f : e.num) {
                if (f.id >= stats.size())
                    throw DataError(0, "no normalization statistics for feature " + std::to_string(f.id));
                f.value = (f.value - stats[f.id].mean) / std::max(stats[f.id].std, kStdFloor);
            }
    return out;
}

std::vector<double> frequency_vector(const EventSequence& seq, std::size_t num_codes) {
    std::vector<double> fv(num_codes, 0.0);
    for (const auto& e : seq.events) {
        if (e.code >= num_codes)
            throw std::out_of_range("frequency_vector: code " + std::to_string(e.code) + " >= N_c");
        fv[e.code] += 1.0;
    }
    return fv;
}

DatasetSplit split_dataset(std::vector<EventSequence> sequences, std::array<double, 3> fractions,
                           std::uint64_t seed) {
    if (sequences.size() < 3)
        throw std::invalid_argument("split_dataset: need at least 3 sequences, got " +
                                    std::to_string(sequences.size()));
    const double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9 || fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0)
        throw std::invalid_argument("split_dataset: fractions must be non-negative and sum to 1");
    std::mt19937_64 rng(seed);
    std::shuffle(sequences.begin(), sequences.end(), rng);
    const auto n = static_cast<double>(sequences.size());
    // Guard against 0.7 * 10 = 6.9999... style underflow.
    const auto n_train = static_cast<std::size_t>(std::floor(n * fractions[0] + 1e-9));
    const auto n_valid = static_cast<std::size_t>(std::floor(n * fractions[1] + 1e-9));
    DatasetSplit split;
    auto it = std::make_move_iterator(sequences.begin());
    split.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
    it += static_cast<std::ptrdiff_t>(n_train);
    split.valid.assign(it, it + static_cast<std::ptrdiff_t>(n_valid));
    it += static_cast<std::ptrdiff_t>(n_valid);
    split.test.assign(it, std::make_move_iterator(sequences.end()));
    return split;
}

}  // namespace mrm
