#include "mrm/syngen.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace mrm {

void SynthConfig::validate() const {
    if (n_sequences == 0) throw std::invalid_argument("SynthConfig: n_sequences must be positive");
    const std::size_t markers[] = {marker_a, marker_b, marker_c, marker_d};
    for (std::size_t i = 0; i < 4; ++i) {
        if (markers[i] >= vocab_size) throw std::invalid_argument("SynthConfig: marker code >= vocab_size");
        for (std::size_t j = 0; j < i; ++j)
            if (markers[i] == markers[j]) throw std::invalid_argument("SynthConfig: marker codes must be distinct");
    }
    if (vocab_size < 5) throw std::invalid_argument("SynthConfig: vocab_size must leave room for background codes");
    if (seq_len_min < 8) throw std::invalid_argument("SynthConfig: seq_len_min must be >= 8");
    if (seq_len_max < seq_len_min) throw std::invalid_argument("SynthConfig: seq_len_max < seq_len_min");
    if (!(base_rate > 0.0) || !(signal_window > 0.0))
        throw std::invalid_argument("SynthConfig: base_rate and T_signal must be positive");
    if (!(positive_fraction > 0.0 && positive_fraction < 1.0))
        throw std::invalid_argument("SynthConfig: positive_fraction must lie in (0, 1)");
    const double shortest = static_cast<double>(seq_len_min) / base_rate;
    if (shortest < 2.0 * kDecoyGapFactor * signal_window)
        throw std::invalid_argument("SynthConfig: shortest sequence spans " + std::to_string(shortest) +
                                    " h, too short to separate A and B by " +
                                    std::to_string(kDecoyGapFactor * signal_window) + " h");
    if (max_features > 0 && num_features == 0)
        throw std::invalid_argument("SynthConfig: max_features > 0 requires num_features > 0");
}

DatasetConfig SynthConfig::dataset_config() const {
    DatasetConfig d;
    d.num_codes = vocab_size;
    d.num_features = num_features;
    d.max_features = max_features;
    return d;
}

KeyValues SynthConfig::to_key_values() const {
    KeyValues kv;
    kv.set("n_sequences", static_cast<long long>(n_sequences));
    kv.set("vocab_size", static_cast<long long>(vocab_size));
    kv.set("seq_len_min", static_cast<long long>(seq_len_min));
    kv.set("seq_len_max", static_cast<long long>(seq_len_max));
    kv.set("base_rate", base_rate);
    kv.set("T_signal", signal_window);
    kv.set("marker_A", static_cast<long long>(marker_a));
    kv.set("marker_B", static_cast<long long>(marker_b));
    kv.set("marker_C", static_cast<long long>(marker_c));
    kv.set("marker_D", static_cast<long long>(marker_d));
    kv.set("positive_fraction", positive_fraction);
    kv.set("num_features", static_cast<long long>(num_features));
    kv.set("max_features", static_cast<long long>(max_features));
    kv.set("seed", static_cast<long long>(seed));
    return kv;
}

SynthConfig SynthConfig::from_key_values(const KeyValues& kv) {
    SynthConfig c;
    auto count = [&](const char* key, std::size_t fallback) {
        const auto v = kv.get_int(key, static_cast<long long>(fallback));
        if (v < 0) throw std::invalid_argument(std::string("SynthConfig: negative ") + key);
        return static_cast<std::size_t>(v);
    };
    c.n_sequences = count("n_sequences", c.n_sequences);
    c.vocab_size = count("vocab_size", c.vocab_size);
    c.seq_len_min = count("seq_len_min", c.seq_len_min);
    c.seq_len_max = count("seq_len_max", c.seq_len_max);
    c.base_rate = kv.get_double("base_rate", c.base_rate);
    c.signal_window = kv.get_double("T_signal", c.signal_window);
    c.marker_a = count("marker_A", c.marker_a);
    c.marker_b = count("marker_B", c.marker_b);
    c.marker_c = count("marker_C", c.marker_c);
    c.marker_d = count("marker_D", c.marker_d);
    c.positive_fraction = kv.get_double("positive_fraction", c.positive_fraction);
    c.num_features = count("num_features", c.num_features);
    c.max_features = count("max_features", c.max_features);
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
    return c;
}

namespace {

enum class PairPlacement { close, far };

std::mt19937_64 sequence_rng(std::uint64_t seed, std::size_t index) {
    const auto i = static_cast<std::uint64_t>(index);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace

EventSequence generate_one(const SynthConfig& c, std::size_t index) {
    auto rng = sequence_rng(c.seed, index);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    EventSequence seq;
    seq.patient_id = "p" + std::to_string(index);
    seq.label = unit(rng) < c.positive_fraction ? 1 : 0;

    const std::size_t length = std::uniform_int_distribution<std::size_t>(c.seq_len_min, c.seq_len_max)(rng);
    const double duration = static_cast<double>(length) / c.base_rate;
    auto uniform_time = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

    PairPlacement pair = PairPlacement::close;
    bool c_first = true;
    if (!seq.label) {
        switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
            case 0: c_first = false; break;
            case 1: pair = PairPlacement::far; break;
            default:
                pair = PairPlacement::far;
                c_first = false;
        }
    }

    double t_a = 0, t_b = 0;
    if (pair == PairPlacement::close) {
        // 0.95 keeps |t_a - t_b| clear of the window edge after rounding.
        const double reach = 0.95 * c.signal_window;
        t_a = uniform_time(0.0, duration);
        const double delta = uniform_time(-reach, reach);
        t_b = (t_a + delta >= 0.0 && t_a + delta <= duration) ? t_a + delta : t_a - delta;
    } else {
        const double gap = uniform_time(kDecoyGapFactor * c.signal_window, duration);
        const double start = uniform_time(0.0, duration - gap);
        t_a = start;
        t_b = start + gap;
        if (unit(rng) < 0.5) std::swap(t_a, t_b);
    }
    double first = uniform_time(0.0, duration), second = uniform_time(0.0, duration);
    while (first == second) second = uniform_time(0.0, duration);
    if (first > second) std::swap(first, second);
    const double t_c = c_first ? first : second;
    const double t_d = c_first ? second : first;

    std::vector<std::size_t> background;
    for (std::size_t code = 0; code < c.vocab_size; ++code)
        if (code != c.marker_a && code != c.marker_b && code != c.marker_c && code != c.marker_d)
            background.push_back(code);
    std::uniform_int_distribution<std::size_t> pick_background(0, background.size() - 1);

    seq.events.reserve(length);
    seq.events.push_back({c.marker_a, t_a, {}, {}});
    seq.events.push_back({c.marker_b, t_b, {}, {}});
    seq.events.push_back({c.marker_c, t_c, {}, {}});
    seq.events.push_back({c.marker_d, t_d, {}, {}});
    for (std::size_t k = 4; k < length; ++k)
        seq.events.push_back({background[pick_background(rng)], uniform_time(0.0, duration), {}, {}});

    if (c.max_features > 0) {
        std::uniform_int_distribution<std::size_t> how_many(0, c.max_features);
        std::uniform_int_distribution<std::size_t> feature(0, c.num_features - 1);
        std::normal_distribution<double> lab_value(10.0, 5.0);
        for (ClinicalEvent& e : seq.events) {
            const std::size_t n = how_many(rng);
            for (std::size_t k = 0; k < n; ++k) {
                if (unit(rng) < 0.5)
                    e.cat.push_back(feature(rng));
                else
                    e.num.push_back({feature(rng), lab_value(rng)});
            }
        }
    }
    std::stable_sort(seq.events.begin(), seq.events.end(),
                     [](const ClinicalEvent& a, const ClinicalEvent& b) { return a.t < b.t; });
    return seq;
}

std::vector<EventSequence> generate(const SynthConfig& config) {
    config.validate();
    std::vector<EventSequence> out;
    out.reserve(config.n_sequences);
    for (std::size_t i = 0; i < config.n_sequences; ++i) out.push_back(generate_one(config, i));
    return out;
}

int label_oracle(const EventSequence& seq, const SynthConfig& config) {
    std::vector<double> a_times, b_times;
    std::size_t first_c = seq.events.size(), first_d = seq.events.size();
    for (std::size_t i = 0; i < seq.events.size(); ++i) {
        const ClinicalEvent& e = seq.events[i];
        if (e.code == config.marker_a) a_times.push_back(e.t);
        if (e.code == config.marker_b) b_times.push_back(e.t);
        if (e.code == config.marker_c && first_c == seq.events.size()) first_c = i;
        if (e.code == config.marker_d && first_d == seq.events.size()) first_d = i;
    }
    bool co_occur = false;
    for (double ta : a_times)
        for (double tb : b_times)
            if (std::abs(ta - tb) <= config.signal_window) co_occur = true;
    const bool ordered = first_c < seq.events.size() && first_d < seq.events.size() && first_c < first_d;
    return co_occur && ordered ? 1 : 0;
}

}  // namespace mrm
