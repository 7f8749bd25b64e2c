#include "mrm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace mrm {

using ad::Graph;
using ad::Tensor;
using ad::Var;

void MrmConfig::validate() const {
    if (model_dim == 0 || num_heads == 0 || head_dim == 0)
        throw std::invalid_argument("MrmConfig: D_m, N_h and D_a must be positive");
    if (head_dim * num_heads != model_dim)
        throw std::invalid_argument("MrmConfig: D_a x N_h = " + std::to_string(head_dim) + " x " +
                                    std::to_string(num_heads) + " must equal D_m = " + std::to_string(model_dim));
    if (topk < 1) throw std::invalid_argument("MrmConfig: topk must be >= 1");
    if (!(half_window > 0.0) || !std::isfinite(half_window))
        throw std::invalid_argument("MrmConfig: T_r must be a positive number of hours");
    if (max_groups < 1 || max_group_size < 1) throw std::invalid_argument("MrmConfig: M and L_G must be >= 1");
    if (num_codes < 1) throw std::invalid_argument("MrmConfig: N_c must be >= 1");
}

KeyValues MrmConfig::to_key_values() const {
    KeyValues kv;
    kv.set("D_m", static_cast<long long>(model_dim));
    kv.set("N_h", static_cast<long long>(num_heads));
    kv.set("D_a", static_cast<long long>(head_dim));
    kv.set("topk", static_cast<long long>(topk));
    kv.set("T_r", half_window);
    kv.set("M", static_cast<long long>(max_groups));
    kv.set("L_G", static_cast<long long>(max_group_size));
    kv.set("N_c", static_cast<long long>(num_codes));
    kv.set("N_f", static_cast<long long>(num_features));
    kv.set("maxFeat", static_cast<long long>(max_features));
    return kv;
}

MrmConfig MrmConfig::from_key_values(const KeyValues& kv) {
    auto count = [&](const char* key) {
        const auto v = kv.get_int(key);
        if (v < 0) throw std::invalid_argument(std::string("MrmConfig: negative ") + key);
        return static_cast<std::size_t>(v);
    };
    MrmConfig c;
    c.model_dim = count("D_m");
    c.num_heads = count("N_h");
    c.head_dim = count("D_a");
    c.topk = count("topk");
    c.half_window = kv.get_double("T_r");
    c.max_groups = count("M");
    c.max_group_size = count("L_G");
    c.num_codes = count("N_c");
    c.num_features = count("N_f");
    c.max_features = count("maxFeat");
    c.validate();
    return c;
}

DatasetConfig MrmConfig::dataset_config() const {
    DatasetConfig d;
    d.num_codes = num_codes;
    d.num_features = num_features;
    d.max_features = max_features;
    return d;
}

ad::ParameterSet MrmParams::layout(const MrmConfig& c) {
    c.validate();
    const std::size_t D = c.model_dim;
    ad::ParameterSet s;
    s.add("emb.code", Tensor({c.num_codes, D}));
    s.add("emb.cat", Tensor({c.num_features, D}));
    s.add("emb.num", Tensor({c.num_features, D}));
    for (std::size_t h = 0; h < c.num_heads; ++h) {
        const std::string prefix = "attn." + std::to_string(h);
        s.add(prefix + ".q", Tensor({c.head_dim, D}));
        s.add(prefix + ".k", Tensor({c.head_dim, D}));
        s.add(prefix + ".v", Tensor({c.head_dim, D}));
    }
    s.add("lstm.wx", Tensor({4 * D, D}));
    s.add("lstm.wh", Tensor({4 * D, D}));
    s.add("lstm.b", Tensor({4 * D, 1}));
    s.add("out.w", Tensor({D, 1}));
    s.add("out.b", Tensor({1, 1}));
    return s;
}

MrmParams MrmParams::zeros(const MrmConfig& config) {
    MrmParams p;
    p.set_ = layout(config);
    p.heads_ = config.num_heads;
    return p;
}

MrmParams MrmParams::initialize(const MrmConfig& config, std::uint64_t seed) {
    MrmParams p = zeros(config);
    std::mt19937_64 rng(seed);
    auto xavier = [&rng](Tensor& t) {
        const double a = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
        std::uniform_real_distribution<double> u(-a, a);
        for (double& x : t.data()) x = u(rng);
    };
    auto embedding = [&rng, &config](Tensor& t) {
        std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(config.model_dim)));
        for (double& x : t.data()) x = n(rng);
    };
    ad::ParameterSet& s = p.set_;
    embedding(s[0]);
    embedding(s[1]);
    embedding(s[2]);
    for (std::size_t h = 0; h < config.num_heads; ++h)
        for (std::size_t k = 0; k < 3; ++k) xavier(s[3 + 3 * h + k]);
    const std::size_t off = p.lstm_offset();
    xavier(s[off]);
    xavier(s[off + 1]);
    Tensor& bias = s[off + 2];
    for (std::size_t i = config.model_dim; i < 2 * config.model_dim; ++i) bias[i] = 1.0;
    xavier(s[off + 3]);
    return p;
}

MrmParams MrmParams::from_set(ad::ParameterSet set, const MrmConfig& config) {
    MrmParams p = zeros(config);
    if (!p.set_.same_layout(set))
        throw std::invalid_argument("MrmParams: parameter names or shapes do not match the model configuration");
    p.set_ = std::move(set);
    return p;
}

BoundParams bind(Graph& graph, const MrmParams& params) {
    BoundParams b;
    const ad::ParameterSet& s = params.set();
    b.all.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) b.all.push_back(graph.parameter(s[i]));
    b.code = b.all[0];
    b.cat = b.all[1];
    b.num = b.all[2];
    const std::size_t heads = params.num_heads();
    for (std::size_t h = 0; h < heads; ++h) {
        b.query.push_back(b.all[3 + 3 * h]);
        b.key.push_back(b.all[4 + 3 * h]);
        b.value.push_back(b.all[5 + 3 * h]);
    }
    const std::size_t off = 3 + 3 * heads;
    b.lstm_wx = b.all[off];
    b.lstm_wh = b.all[off + 1];
    b.lstm_b = b.all[off + 2];
    b.out_w = b.all[off + 3];
    b.out_b = b.all[off + 4];
    return b;
}

std::span<const ClinicalEvent> model_window(const EventSequence& seq, const MrmConfig& config) {
    std::span<const ClinicalEvent> all(seq.events);
    const std::size_t cap = config.max_events();
    if (all.size() <= cap) return all;
    return all.subspan(all.size() - cap);
}

Var encode_events(Graph& /*graph*/, const BoundParams& params, std::span<const ClinicalEvent> events,
                  const MrmConfig& config) {
    std::vector<ad::EmbedTerm> code_terms, cat_terms, num_terms;
    code_terms.reserve(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
        const ClinicalEvent& e = events[i];
        if (e.code >= config.num_codes) throw std::out_of_range("encode_events: code out of range");
        code_terms.push_back({i, e.code, 1.0});
        for (std::size_t f : e.cat) {
            if (f >= config.num_features) throw std::out_of_range("encode_events: feature out of range");
            cat_terms.push_back({i, f, 1.0});
        }
        for (const NumericFeature& f : e.num) {
            if (f.id >= config.num_features) throw std::out_of_range("encode_events: feature out of range");
            num_terms.push_back({i, f.id, f.value});
        }
    }
    Var x = ad::embed_sum(params.code, code_terms, events.size());
    if (!cat_terms.empty()) x = x + ad::embed_sum(params.cat, cat_terms, events.size());
    if (!num_terms.empty()) x = x + ad::embed_sum(params.num, num_terms, events.size());
    return x;
}

std::vector<std::vector<double>> encode_events(const EventSequence& seq, const MrmParams& params,
                                               const MrmConfig& config) {
    Graph g;
    const BoundParams b = bind(g, params);
    const Tensor& x = encode_events(g, b, seq.events, config).value();
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < x.rows(); ++i) rows.emplace_back(x.row(i).begin(), x.row(i).end());
    return rows;
}

IndexRange neighborhood(std::size_t i, std::span<const double> times, double half_window) {
    if (i >= times.size()) throw std::out_of_range("neighborhood: index out of range");
    IndexRange r{i, i + 1};
    while (r.begin > 0 && times[i] - times[r.begin - 1] <= half_window) --r.begin;
    while (r.end < times.size() && times[r.end] - times[i] <= half_window) ++r.end;
    return r;
}

std::vector<IndexRange> neighborhoods(std::span<const double> times, double half_window) {
    std::vector<IndexRange> out(times.size());
    std::size_t lo = 0, hi = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        while (times[i] - times[lo] > half_window) ++lo;
        if (hi < i + 1) hi = i + 1;
        while (hi < times.size() && times[hi] - times[i] <= half_window) ++hi;
        out[i] = {lo, hi};
    }
    return out;
}

std::vector<bool> topk_mask(std::span<const double> scores, std::size_t topk) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t keep = std::min(topk, scores.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                      });
    std::vector<bool> mask(scores.size(), false);
    for (std::size_t k = 0; k < keep; ++k) mask[order[k]] = true;
    return mask;
}

std::vector<Var> sparse_attention(Graph& /*graph*/, const BoundParams& params, Var x,
                                  std::span<const double> times, const MrmConfig& config, AttentionTrace* trace) {
    const std::size_t L = x.value().rows();
    if (L == 0 || times.size() != L)
        throw std::invalid_argument("sparse_attention: need one time per event and at least one event");
    const auto nb = neighborhoods(times, config.half_window);
    const std::size_t H = config.num_heads;
    if (trace) {
        trace->neighborhoods = nb;
        trace->weights.assign(H, std::vector<std::vector<double>>(L));
    }
    std::vector<std::vector<Var>> heads(L, std::vector<Var>(H));
    for (std::size_t h = 0; h < H; ++h) {
        const Var q = ad::matmul_nt(x, params.query[h]);
        const Var k = ad::matmul_nt(x, params.key[h]);
        const Var v = ad::matmul_nt(x, params.value[h]);
        for (std::size_t i = 0; i < L; ++i) {
            const IndexRange r = nb[i];
            const Var qi = ad::slice_rows(q, i, i + 1);
            const Var scores = ad::matmul_nt(ad::slice_rows(k, r.begin, r.end), qi);
            const Var weights = ad::masked_softmax(scores, topk_mask(scores.value().data(), config.topk));
            heads[i][h] = ad::matmul_tn(ad::slice_rows(v, r.begin, r.end), weights);
            if (trace) {
                const auto w = weights.value().data();
                trace->weights[h][i].assign(w.begin(), w.end());
            }
        }
    }
    std::vector<Var> out;
    out.reserve(L);
    for (auto& per_head : heads) out.push_back(ad::concat(per_head));
    return out;
}

std::vector<std::vector<double>> sparse_attention(std::span<const std::vector<double>> x,
                                                  std::span<const double> times, const MrmParams& params,
                                                  const MrmConfig& config, AttentionTrace* trace) {
    Graph g;
    const BoundParams b = bind(g, params);
    std::vector<double> flat;
    for (const auto& row : x) {
        if (row.size() != config.model_dim) throw std::invalid_argument("sparse_attention: rows must have D_m entries");
        flat.insert(flat.end(), row.begin(), row.end());
    }
    const Var xv = g.constant(Tensor({x.size(), config.model_dim}, std::move(flat)));
    const auto v = sparse_attention(g, b, xv, times, config, trace);
    std::vector<std::vector<double>> out;
    out.reserve(v.size());
    for (const Var& vi : v) out.emplace_back(vi.value().data().begin(), vi.value().data().end());
    return out;
}

LstmState lstm_initial_state(Graph& graph, std::size_t dim) {
    return {graph.constant(Tensor({dim, 1})), graph.constant(Tensor({dim, 1}))};
}

LstmState lstm_step(const BoundParams& params, LstmState previous, Var input, std::size_t dim) {
    const Var z = ad::matmul(params.lstm_wx, input) + ad::matmul(params.lstm_wh, previous.h) + params.lstm_b;
    const Var in_gate = ad::sigmoid(ad::slice_rows(z, 0, dim));
    const Var forget_gate = ad::sigmoid(ad::slice_rows(z, dim, 2 * dim));
    const Var candidate = ad::tanh(ad::slice_rows(z, 2 * dim, 3 * dim));
    const Var out_gate = ad::sigmoid(ad::slice_rows(z, 3 * dim, 4 * dim));
    const Var c = forget_gate * previous.c + in_gate * candidate;
    return {out_gate * ad::tanh(c), c};
}

namespace {

Var prediction_head(const BoundParams& params, Var h) {
    return ad::sigmoid(ad::matmul_tn(params.out_w, h) + params.out_b);
}

}  // namespace

Var mrm_graph(Graph& graph, const BoundParams& params, const EventSequence& seq, const MrmConfig& config,
              ForwardDiagnostics* diagnostics) {
    const auto events = model_window(seq, config);
    if (events.empty()) throw std::invalid_argument("mrm_graph: empty sequence");
    std::vector<double> times;
    times.reserve(events.size());
    for (const auto& e : events) times.push_back(e.t);

    const Var x = encode_events(graph, params, events, config);
    const auto v = sparse_attention(graph, params, x, times, config,
                                    diagnostics ? &diagnostics->attention : nullptr);
    Partition partition = optimal_partition(times, config.max_groups, config.max_group_size);

    LstmState state = lstm_initial_state(graph, config.model_dim);
    const std::span<const Var> vs(v);
    for (const IndexRange& g : partition.groups) {
        const Var pooled = ad::maxpool_rows(vs.subspan(g.begin, g.size()));
        state = lstm_step(params, state, pooled, config.model_dim);
    }
    if (diagnostics) {
        diagnostics->events_used = events.size();
        diagnostics->events_dropped = seq.events.size() - events.size();
        diagnostics->partition = std::move(partition);
    }
    return prediction_head(params, state.h);
}

Var plain_lstm_graph(Graph& graph, const BoundParams& params, const EventSequence& seq, const MrmConfig& config) {
    if (seq.events.empty()) throw std::invalid_argument("plain_lstm_graph: empty sequence");
    const Var x = encode_events(graph, params, seq.events, config);
    LstmState state = lstm_initial_state(graph, config.model_dim);
    const std::size_t L = x.value().rows();
    for (std::size_t i = 0; i < L; ++i)
        state = lstm_step(params, state, ad::transpose(ad::slice_rows(x, i, i + 1)), config.model_dim);
    return prediction_head(params, state.h);
}

ForwardResult forward(const EventSequence& seq, const MrmParams& params, const MrmConfig& config) {
    Graph g;
    const BoundParams b = bind(g, params);
    ForwardResult result;
    result.probability = mrm_graph(g, b, seq, config, &result.diagnostics).value()[0];
    return result;
}

double plain_lstm_forward(const EventSequence& seq, const MrmParams& params, const MrmConfig& config) {
    Graph g;
    const BoundParams b = bind(g, params);
    return plain_lstm_graph(g, b, seq, config).value()[0];
}

double loss(double probability, int label) {
    const double p = std::clamp(probability, kProbabilityClamp, 1.0 - kProbabilityClamp);
    const double y = label ? 1.0 : 0.0;
    return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

}  // namespace mrm
