#include "mrm/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include "mrm/metrics.hpp"

namespace mrm {

using ad::Graph;
using ad::Tensor;
using ad::Var;

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::mrm: return "mrm";
        case ModelKind::plain_lstm: return "plain_lstm";
        case ModelKind::logistic: return "lr";
    }
    return "unknown";
}

ModelKind parse_model_kind(std::string_view text) {
    if (text == "mrm") return ModelKind::mrm;
    if (text == "plain_lstm") return ModelKind::plain_lstm;
    if (text == "lr") return ModelKind::logistic;
    throw std::invalid_argument("unknown model kind '" + std::string(text) + "' (expected mrm, plain_lstm or lr)");
}

namespace {

void add_gradients(const Graph& g, std::span<const Var> vars, ad::ParameterSet& grads) {
    for (std::size_t i = 0; i < vars.size(); ++i)
        if (const Tensor* gi = g.grad_if_any(vars[i])) grads[i].add_inplace(*gi);
}

template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

MrmModel::MrmModel(MrmConfig config, MrmParams params, bool plain_lstm)
    : config_(std::move(config)), params_(std::move(params)), plain_(plain_lstm) {
    config_.validate();
}

double MrmModel::predict(const EventSequence& seq) const {
    return plain_ ? plain_lstm_forward(seq, params_, config_) : forward(seq, params_, config_).probability;
}

double MrmModel::loss_and_gradient(const EventSequence& seq, ad::ParameterSet& grads) const {
    Graph g;
    const BoundParams b = bind(g, params_);
    const Var p = plain_ ? plain_lstm_graph(g, b, seq, config_) : mrm_graph(g, b, seq, config_);
    const Var l = ad::binary_cross_entropy(p, seq.label ? 1.0 : 0.0, kProbabilityClamp);
    g.backward(l);
    add_gradients(g, b.all, grads);
    return l.value()[0];
}

LogisticModel::LogisticModel(std::size_t num_codes, double l2) : l2_(l2) {
    if (num_codes == 0) throw std::invalid_argument("LogisticModel: N_c must be >= 1");
    if (!(l2 >= 0.0)) throw std::invalid_argument("LogisticModel: l2 must be >= 0");
    params_.add("lr.w", Tensor({num_codes, 1}));
    params_.add("lr.b", Tensor({1, 1}));
}

LogisticModel::LogisticModel(ad::ParameterSet params, double l2) : LogisticModel(1, l2) {
    if (params.size() != 2 || params.name(0) != "lr.w" || params.name(1) != "lr.b" || params[0].cols() != 1 ||
        params[1].size() != 1)
        throw std::invalid_argument("LogisticModel: expected parameters lr.w (N_c x 1) and lr.b (1 x 1)");
    params_ = std::move(params);
}

double LogisticModel::predict(const EventSequence& seq) const {
    const auto fv = frequency_vector(seq, num_codes());
    double z = params_[1][0];
    for (std::size_t c = 0; c < fv.size(); ++c) z += fv[c] * params_[0][c];
    return 1.0 / (1.0 + std::exp(-z));
}

double LogisticModel::loss_and_gradient(const EventSequence& seq, ad::ParameterSet& grads) const {
    Graph g;
    const Var w = g.parameter(params_[0]);
    const Var b = g.parameter(params_[1]);
    const Var fv = g.constant(Tensor({1, num_codes()}, frequency_vector(seq, num_codes())));
    const Var p = ad::sigmoid(ad::matmul(fv, w) + b);
    Var l = ad::binary_cross_entropy(p, seq.label ? 1.0 : 0.0, kProbabilityClamp);
    if (l2_ > 0.0) l = l + ad::scale(ad::sum_squares(w), l2_);
    g.backward(l);
    const Var vars[] = {w, b};
    add_gradients(g, vars, grads);
    return l.value()[0];
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    if (max_epochs == 0) throw std::invalid_argument("TrainConfig: max_epochs must be positive");
    if (patience >= max_epochs) throw std::invalid_argument("TrainConfig: patience must be < max_epochs");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("TrainConfig: clip norm must be positive");
}

KeyValues EvalReport::to_key_values() const {
    KeyValues kv;
    kv.set("model", std::string(to_string(kind)));
    kv.set("auc", test.auc);
    kv.set("ap", test.ap);
    kv.set("n_pos", static_cast<long long>(test.n_pos));
    kv.set("n_neg", static_cast<long long>(test.n_neg));
    kv.set("test_loss", test.loss);
    kv.set("train_auc", train.auc);
    kv.set("train_ap", train.ap);
    kv.set("train_loss", train.loss);
    kv.set("valid_auc", valid.auc);
    kv.set("valid_ap", valid.ap);
    kv.set("valid_loss", valid.loss);
    kv.set("best_epoch", static_cast<long long>(best_epoch));
    kv.set("epochs_run", static_cast<long long>(trace.size()));
    return kv;
}

void EvalReport::write_trace_csv(std::ostream& out) const {
    out << "epoch,train_loss,valid_auc\n";
    for (const EpochStats& e : trace)
        out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.valid_auc) << '\n';
}

TrainingDiverged::TrainingDiverged(std::size_t epoch, std::size_t batch, const std::string& what)
    : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                         ": " + what),
      epoch_(epoch),
      batch_(batch) {}

std::vector<double> predict_all(const SequenceModel& model, std::span<const EventSequence> sequences,
                                std::size_t threads) {
    std::vector<double> out(sequences.size());
    parallel_for(sequences.size(), threads, [&](std::size_t i) { out[i] = model.predict(sequences[i]); });
    return out;
}

SplitMetrics evaluate(const SequenceModel& model, std::span<const EventSequence> sequences, std::size_t threads) {
    SplitMetrics m;
    const auto scores = predict_all(model, sequences, threads);
    std::vector<int> labels;
    labels.reserve(sequences.size());
    double total = 0.0;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        labels.push_back(sequences[i].label);
        (labels.back() ? m.n_pos : m.n_neg) += 1;
        total += loss(scores[i], labels.back());
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    m.loss = sequences.empty() ? nan : total / static_cast<double>(sequences.size());
    m.auc = (m.n_pos && m.n_neg) ? auc(scores, labels) : nan;
    m.ap = m.n_pos ? average_precision(scores, labels) : nan;
    return m;
}

EvalReport fit(SequenceModel& model, const DatasetSplit& split, const TrainConfig& config,
               const TrainObserver* observer) {
    config.validate();
    if (split.train.empty() || split.valid.empty() || split.test.empty())
        throw std::invalid_argument("fit: train, validation and test splits must be non-empty");
    auto notify = [&](std::string_view which) {
        if (observer && observer->on_evaluate) observer->on_evaluate(which);
    };

    EvalReport report;
    report.kind = model.kind();
    ad::AdamState adam(model.params(), ad::AdamConfig{config.lr});
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(split.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    const std::size_t batch_cap = std::min(config.batch_size, split.train.size());
    std::vector<ad::ParameterSet> slots(batch_cap, model.params().zeros_like());
    std::vector<double> losses(batch_cap);
    ad::ParameterSet best = model.params();
    double best_score = -std::numeric_limits<double>::infinity();
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t batch_id = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_cap, ++batch_id) {
            const std::size_t n = std::min(batch_cap, order.size() - start);
            parallel_for(n, config.threads, [&](std::size_t k) {
                slots[k].fill(0.0);
                losses[k] = model.loss_and_gradient(split.train[order[start + k]], slots[k]);
            });
            ad::ParameterSet grad = model.params().zeros_like();
            for (std::size_t k = 0; k < n; ++k) {
                if (!std::isfinite(losses[k])) throw TrainingDiverged(epoch, batch_id, "non-finite loss");
                grad.add_inplace(slots[k]);
                epoch_loss += losses[k];
            }
            grad.scale_inplace(1.0 / static_cast<double>(n));
            const double norm = std::sqrt(grad.squared_norm());
            if (!std::isfinite(norm)) throw TrainingDiverged(epoch, batch_id, "non-finite gradient");
            if (norm > config.clip_norm) grad.scale_inplace(config.clip_norm / norm);
            ad::adam_step(model.params(), grad, adam);
        }

        notify("valid");
        const SplitMetrics valid = evaluate(model, split.valid, config.threads);
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(order.size());
        stats.valid_auc = valid.auc;
        stats.valid_loss = valid.loss;
        // Higher AUC wins; equal AUC falls back to lower validation loss.
        const double score = std::isnan(valid.auc) ? -std::numeric_limits<double>::infinity() : valid.auc;
        stats.improved = score > best_score || (score == best_score && valid.loss < best_loss);
        bool stop = false;
        if (stats.improved) {
            best_score = score;
            best_loss = valid.loss;
            best = model.params();
            report.best_epoch = epoch;
            stale = 0;
        } else {
            stop = ++stale >= config.patience;
        }
        report.trace.push_back(stats);
        if (observer && observer->on_epoch) observer->on_epoch(stats);
        if (stop) break;
    }

    model.params() = std::move(best);
    notify("valid");
    report.valid = evaluate(model, split.valid, config.threads);
    notify("train");
    report.train = evaluate(model, split.train, config.threads);
    notify("test");
    report.test = evaluate(model, split.test, config.threads);
    return report;
}

}  // namespace mrm
