#pragma once

// Independent reference implementations used only by tests. They work on
// plain std::vector<double> with straight loops and never call into the
// graph code, the partition solver, or the metric implementations they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "mrm/events.hpp"
#include "mrm/model.hpp"
#include "mrm/params.hpp"

namespace mrm::oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline const ad::Tensor& param(const ad::ParameterSet& p, const std::string& name) {
    const auto i = p.find(name);
    if (!i) throw std::runtime_error("oracle: missing parameter " + name);
    return p[*i];
}

/// y = W x for W stored row-major (rows x cols).
inline Vec apply(const ad::Tensor& w, const Vec& x) {
    Vec y(w.rows(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r)
        for (std::size_t c = 0; c < w.cols(); ++c) y[r] += w.at(r, c) * x[c];
    return y;
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// ---------------------------------------------------------------- partition

/// Minimum over all contiguous partitions (every composition of L) with at
/// most max_groups parts of size <= max_group_size of the largest span.
/// Infinity when none exists. Exponential; for L <= ~14.
inline double exhaustive_min_max_span(const Vec& t, std::size_t max_groups, std::size_t max_group_size) {
    const std::size_t n = t.size();
    if (n == 0) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    // Bit k set => cut between event k and k+1.
    for (unsigned long mask = 0; mask < (1UL << (n - 1)); ++mask) {
        std::size_t groups = 0, start = 0;
        double worst = 0.0;
        bool ok = true;
        for (std::size_t k = 0; k < n; ++k) {
            const bool cut = k == n - 1 || (mask >> k) & 1UL;
            if (!cut) continue;
            ++groups;
            if (k + 1 - start > max_group_size) ok = false;
            worst = std::max(worst, t[k] - t[start]);
            start = k + 1;
        }
        if (ok && groups <= max_groups) best = std::min(best, worst);
    }
    return best;
}

/// Fewest groups over all contiguous partitions whose spans are <= s and sizes <= cap.
inline std::size_t exhaustive_min_groups(const Vec& t, double s, std::size_t cap) {
    const std::size_t n = t.size();
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (unsigned long mask = 0; mask < (1UL << (n - 1)); ++mask) {
        std::size_t groups = 0, start = 0;
        bool ok = true;
        for (std::size_t k = 0; k < n; ++k) {
            const bool cut = k == n - 1 || (mask >> k) & 1UL;
            if (!cut) continue;
            ++groups;
            if (k + 1 - start > cap || t[k] - t[start] > s) ok = false;
            start = k + 1;
        }
        if (ok) best = std::min(best, groups);
    }
    return best;
}

/// best[k][j]: optimal max span covering the first j events with exactly k groups.
inline double dp_min_max_span(const Vec& t, std::size_t max_groups, std::size_t max_group_size) {
    const std::size_t n = t.size();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<Vec> best(max_groups + 1, Vec(n + 1, inf));
    best[0][0] = 0.0;
    for (std::size_t k = 1; k <= max_groups; ++k)
        for (std::size_t j = 1; j <= n; ++j)
            for (std::size_t i = (j > max_group_size ? j - max_group_size : 0); i < j; ++i)
                if (best[k - 1][i] < inf) best[k][j] = std::min(best[k][j], std::max(best[k - 1][i], t[j - 1] - t[i]));
    double answer = inf;
    for (std::size_t k = 1; k <= max_groups; ++k) answer = std::min(answer, best[k][n]);
    return answer;
}

/// Greedy grouping at a fixed threshold (first-fit left to right).
inline std::vector<std::pair<std::size_t, std::size_t>> greedy_groups(const Vec& t, double s, std::size_t cap) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t start = 0;
    for (std::size_t k = 1; k <= t.size(); ++k) {
        if (k == t.size() || k - start == cap || t[k] - t[start] > s) {
            out.emplace_back(start, k);
            start = k;
        }
    }
    return out;
}

// ---------------------------------------------------------------- attention

/// Event representations: code row + categorical rows + value-scaled numeric rows.
inline Mat encode(const std::vector<ClinicalEvent>& events, const ad::ParameterSet& p) {
    const auto& code = param(p, "emb.code");
    const auto& cat = param(p, "emb.cat");
    const auto& num = param(p, "emb.num");
    Mat x;
    for (const auto& e : events) {
        Vec xi(code.cols(), 0.0);
        for (std::size_t c = 0; c < xi.size(); ++c) xi[c] += code.at(e.code, c);
        for (auto f : e.cat)
            for (std::size_t c = 0; c < xi.size(); ++c) xi[c] += cat.at(f, c);
        for (const auto& f : e.num)
            for (std::size_t c = 0; c < xi.size(); ++c) xi[c] += f.value * num.at(f.id, c);
        x.push_back(xi);
    }
    return x;
}

/// Literal windowed top-k multi-head attention: scan every j for the window,
/// score, sort, keep topk, softmax, weighted sum of values, concat heads.
inline Mat attention(const Mat& x, const Vec& t, const ad::ParameterSet& p, const MrmConfig& cfg) {
    const std::size_t L = x.size();
    Mat out(L);
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t h = 0; h < cfg.num_heads; ++h) {
            const std::string prefix = "attn." + std::to_string(h);
            const auto& wq = param(p, prefix + ".q");
            const auto& wk = param(p, prefix + ".k");
            const auto& wv = param(p, prefix + ".v");
            const Vec q = apply(wq, x[i]);
            std::vector<std::size_t> window;
            for (std::size_t j = 0; j < L; ++j)
                if (std::abs(t[j] - t[i]) <= cfg.half_window) window.push_back(j);
            std::vector<std::pair<double, std::size_t>> scored;
            for (auto j : window) scored.emplace_back(dot(q, apply(wk, x[j])), j);
            std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                return a.first > b.first || (a.first == b.first && a.second < b.second);
            });
            scored.resize(std::min(scored.size(), cfg.topk));
            double top = scored.front().first, z = 0.0;
            for (const auto& s : scored) z += std::exp(s.first - top);
            Vec head(wv.rows(), 0.0);
            for (const auto& s : scored) {
                const double a = std::exp(s.first - top) / z;
                const Vec v = apply(wv, x[s.second]);
                for (std::size_t c = 0; c < head.size(); ++c) head[c] += a * v[c];
            }
            out[i].insert(out[i].end(), head.begin(), head.end());
        }
    }
    return out;
}

struct LstmOut {
    Vec h, c;
};

inline LstmOut lstm_cell(const ad::ParameterSet& p, const Vec& h, const Vec& c, const Vec& x) {
    const auto& wx = param(p, "lstm.wx");
    const auto& wh = param(p, "lstm.wh");
    const auto& b = param(p, "lstm.b");
    const std::size_t D = h.size();
    const Vec zx = apply(wx, x), zh = apply(wh, h);
    LstmOut out{Vec(D), Vec(D)};
    for (std::size_t d = 0; d < D; ++d) {
        const double ig = sigmoid(zx[d] + zh[d] + b[d]);
        const double fg = sigmoid(zx[D + d] + zh[D + d] + b[D + d]);
        const double cand = std::tanh(zx[2 * D + d] + zh[2 * D + d] + b[2 * D + d]);
        const double og = sigmoid(zx[3 * D + d] + zh[3 * D + d] + b[3 * D + d]);
        out.c[d] = fg * c[d] + ig * cand;
        out.h[d] = og * std::tanh(out.c[d]);
    }
    return out;
}

inline double head(const ad::ParameterSet& p, const Vec& h) {
    const auto& w = param(p, "out.w");
    double z = param(p, "out.b")[0];
    for (std::size_t d = 0; d < h.size(); ++d) z += w[d] * h[d];
    return sigmoid(z);
}

/// Whole model, straight-line: truncate, encode, attend, optimal partition
/// (DP optimum then greedy at that threshold), max-pool, LSTM, sigmoid.
inline double mrm_forward(const EventSequence& seq, const ad::ParameterSet& p, const MrmConfig& cfg) {
    std::vector<ClinicalEvent> events = seq.events;
    const std::size_t cap = cfg.max_groups * cfg.max_group_size;
    if (events.size() > cap) events.erase(events.begin(), events.end() - static_cast<std::ptrdiff_t>(cap));
    Vec t;
    for (const auto& e : events) t.push_back(e.t);
    const Mat v = attention(encode(events, p), t, p, cfg);
    const double best = dp_min_max_span(t, cfg.max_groups, cfg.max_group_size);
    Vec h(cfg.model_dim, 0.0), c(cfg.model_dim, 0.0);
    for (const auto& [b, e] : greedy_groups(t, best, cfg.max_group_size)) {
        Vec g = v[b];
        for (std::size_t k = b + 1; k < e; ++k)
            for (std::size_t d = 0; d < g.size(); ++d) g[d] = std::max(g[d], v[k][d]);
        auto next = lstm_cell(p, h, c, g);
        h = next.h;
        c = next.c;
    }
    return head(p, h);
}

inline double plain_lstm_forward(const EventSequence& seq, const ad::ParameterSet& p, const MrmConfig& cfg) {
    Vec h(cfg.model_dim, 0.0), c(cfg.model_dim, 0.0);
    for (const Vec& x : encode(seq.events, p)) {
        auto next = lstm_cell(p, h, c, x);
        h = next.h;
        c = next.c;
    }
    return head(p, h);
}

// ---------------------------------------------------------------- metrics

inline double pair_count_auc(const Vec& s, const std::vector<int>& y) {
    double good = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1;
                good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
    return good / pairs;
}

/// AP by definition: for each positive, precision among everything scored
/// at least as high (ties resolved by index, as documented).
inline double definition_ap(const Vec& s, const std::vector<int>& y) {
    double total = 0;
    int positives = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!y[i]) continue;
        ++positives;
        double above = 0, above_pos = 0;
        for (std::size_t j = 0; j < s.size(); ++j) {
            const bool ranked_before = s[j] > s[i] || (s[j] == s[i] && j <= i);
            if (!ranked_before) continue;
            above += 1;
            above_pos += y[j];
        }
        total += above_pos / above;
    }
    return total / positives;
}

// ---------------------------------------------------------------- gradients

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central differences of f with respect to every entry of every tensor in
/// `params` (which f must read through the reference it was given).
inline ad::ParameterSet finite_difference(ad::ParameterSet& params, const std::function<double()>& f,
                                          double h = 1e-5) {
    ad::ParameterSet out = params.zeros_like();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto data = params[i].data();
        for (std::size_t k = 0; k < data.size(); ++k) {
            const double saved = data[k];
            data[k] = saved + h;
            const double up = f();
            data[k] = saved - h;
            const double down = f();
            data[k] = saved;
            out[i][k] = (up - down) / (2 * h);
        }
    }
    return out;
}

/// Random sequence with distinct, well separated times (no attention or
/// pooling ties) and random features.
inline EventSequence random_sequence(std::mt19937_64& rng, std::size_t length, const MrmConfig& cfg,
                                     double mean_gap = 0.25) {
    EventSequence s;
    s.patient_id = "rand";
    s.label = static_cast<int>(rng() % 2);
    std::exponential_distribution<double> gap(1.0 / mean_gap);
    std::uniform_int_distribution<std::size_t> code(0, cfg.num_codes - 1);
    std::normal_distribution<double> value(0.0, 1.0);
    double t = 0;
    for (std::size_t i = 0; i < length; ++i) {
        t += 0.01 + gap(rng);
        ClinicalEvent e{code(rng), t, {}, {}};
        if (cfg.num_features > 0 && cfg.max_features > 0) {
            std::uniform_int_distribution<std::size_t> fid(0, cfg.num_features - 1);
            const std::size_t n = rng() % (cfg.max_features + 1);
            for (std::size_t k = 0; k < n; ++k) {
                if (rng() % 2)
                    e.cat.push_back(fid(rng));
                else
                    e.num.push_back({fid(rng), value(rng)});
            }
        }
        s.events.push_back(e);
    }
    return s;
}

}  // namespace mrm::oracle
