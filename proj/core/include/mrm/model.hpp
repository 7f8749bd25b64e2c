#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mrm/events.hpp"
#include "mrm/graph.hpp"
#include "mrm/key_value.hpp"
#include "mrm/params.hpp"
#include "mrm/partition.hpp"

namespace mrm {

/// Hyperparameters of the multi-level representation model. Defaults are the
/// published configuration.
struct MrmConfig {
    std::size_t model_dim = 64;       // D_m
    std::size_t num_heads = 8;        // N_h
    std::size_t head_dim = 8;         // D_a
    std::size_t topk = 4;
    double half_window = 0.5;         // T_r, hours
    std::size_t max_groups = 64;      // M
    std::size_t max_group_size = 32;  // L_G
    std::size_t num_codes = 1;        // N_c
    std::size_t num_features = 0;     // N_f
    std::size_t max_features = 3;

    /// Throws std::invalid_argument; in particular D_a * N_h must equal D_m.
    void validate() const;
    std::size_t max_events() const noexcept { return max_groups * max_group_size; }

    KeyValues to_key_values() const;
    static MrmConfig from_key_values(const KeyValues& kv);
    DatasetConfig dataset_config() const;
};

/// Learnable weights. Layout (names in the parameter set):
///   emb.code  N_c x D_m     emb.cat  N_f x D_m     emb.num  N_f x D_m
///   attn.<h>.q / .k / .v    D_a x D_m each, for h in [0, N_h)
///   lstm.wx   4D_m x D_m    lstm.wh  4D_m x D_m    lstm.b   4D_m x 1
///   out.w     D_m x 1       out.b    1 x 1
/// LSTM gate blocks are stacked input, forget, candidate, output.
class MrmParams {
public:
    static MrmParams zeros(const MrmConfig& config);
    /// Xavier-uniform weights, N(0, 1/sqrt(D_m)) embeddings, zero biases with
    /// forget-gate bias 1.
    static MrmParams initialize(const MrmConfig& config, std::uint64_t seed);
    /// Adopts a loaded parameter set after checking names and shapes.
    static MrmParams from_set(ad::ParameterSet set, const MrmConfig& config);

    ad::ParameterSet& set() noexcept { return set_; }
    const ad::ParameterSet& set() const noexcept { return set_; }

    const ad::Tensor& code_embedding() const { return set_[0]; }
    const ad::Tensor& cat_embedding() const { return set_[1]; }
    const ad::Tensor& num_projection() const { return set_[2]; }
    const ad::Tensor& query(std::size_t head) const { return set_[3 + 3 * head]; }
    const ad::Tensor& key(std::size_t head) const { return set_[4 + 3 * head]; }
    const ad::Tensor& value(std::size_t head) const { return set_[5 + 3 * head]; }
    const ad::Tensor& lstm_input_weights() const { return set_[lstm_offset()]; }
    const ad::Tensor& lstm_hidden_weights() const { return set_[lstm_offset() + 1]; }
    const ad::Tensor& lstm_bias() const { return set_[lstm_offset() + 2]; }
    const ad::Tensor& output_weights() const { return set_[lstm_offset() + 3]; }
    const ad::Tensor& output_bias() const { return set_[lstm_offset() + 4]; }
    std::size_t num_heads() const noexcept { return heads_; }

private:
    static ad::ParameterSet layout(const MrmConfig& config);
    std::size_t lstm_offset() const noexcept { return 3 + 3 * heads_; }

    ad::ParameterSet set_;
    std::size_t heads_ = 0;
};

/// MrmParams bound into one graph, in parameter-set order.
struct BoundParams {
    std::vector<ad::Var> all;
    ad::Var code, cat, num;
    std::vector<ad::Var> query, key, value;
    ad::Var lstm_wx, lstm_wh, lstm_b, out_w, out_b;
};
BoundParams bind(ad::Graph& graph, const MrmParams& params);

/// The events the model reads: the most recent M * L_G when the sequence is longer.
std::span<const ClinicalEvent> model_window(const EventSequence& seq, const MrmConfig& config);

/// x_i = emb.code[code] + sum emb.cat[f] + sum value * emb.num[f]; one row per event.
ad::Var encode_events(ad::Graph& graph, const BoundParams& params, std::span<const ClinicalEvent> events,
                      const MrmConfig& config);
std::vector<std::vector<double>> encode_events(const EventSequence& seq, const MrmParams& params,
                                               const MrmConfig& config);

/// Indices j with |t_j - t_i| <= half_window, as a contiguous range (self included).
IndexRange neighborhood(std::size_t i, std::span<const double> times, double half_window);
/// Neighborhood of every event, computed with a two-pointer sweep.
std::vector<IndexRange> neighborhoods(std::span<const double> times, double half_window);

/// Keeps min(topk, n) entries: order by (score desc, index asc) and take the prefix.
std::vector<bool> topk_mask(std::span<const double> scores, std::size_t topk);

/// Attention weights per head and event, over that event's neighborhood range.
struct AttentionTrace {
    std::vector<IndexRange> neighborhoods;
    /// weights[head][i][j - neighborhoods[i].begin]
    std::vector<std::vector<std::vector<double>>> weights;
};

/// Windowed top-k multi-head attention over the rows of `x` (L x D_m). Returns
/// one D_m x 1 column v_i per event, the concatenation of all heads.
std::vector<ad::Var> sparse_attention(ad::Graph& graph, const BoundParams& params, ad::Var x,
                                      std::span<const double> times, const MrmConfig& config,
                                      AttentionTrace* trace = nullptr);
std::vector<std::vector<double>> sparse_attention(std::span<const std::vector<double>> x,
                                                  std::span<const double> times, const MrmParams& params,
                                                  const MrmConfig& config, AttentionTrace* trace = nullptr);

struct LstmState {
    ad::Var h;
    ad::Var c;
};
LstmState lstm_step(const BoundParams& params, LstmState previous, ad::Var input, std::size_t dim);
LstmState lstm_initial_state(ad::Graph& graph, std::size_t dim);

struct ForwardDiagnostics {
    std::size_t events_used = 0;
    std::size_t events_dropped = 0;
    Partition partition;
    AttentionTrace attention;
};

/// Full model as a graph: encode, attend, partition and pool, LSTM over the
/// groups, sigmoid head. Returns the 1 x 1 probability.
ad::Var mrm_graph(ad::Graph& graph, const BoundParams& params, const EventSequence& seq,
                  const MrmConfig& config, ForwardDiagnostics* diagnostics = nullptr);
/// Baseline: LSTM directly over the encoded events, sigmoid head.
ad::Var plain_lstm_graph(ad::Graph& graph, const BoundParams& params, const EventSequence& seq,
                         const MrmConfig& config);

struct ForwardResult {
    double probability = 0.5;
    ForwardDiagnostics diagnostics;
};
ForwardResult forward(const EventSequence& seq, const MrmParams& params, const MrmConfig& config);
double plain_lstm_forward(const EventSequence& seq, const MrmParams& params, const MrmConfig& config);

inline constexpr double kProbabilityClamp = 1e-7;
/// Cross entropy with the prediction clamped to [1e-7, 1 - 1e-7].
double loss(double probability, int label);

}  // namespace mrm
