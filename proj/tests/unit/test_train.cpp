#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "mrm/experiment.hpp"
#include "mrm/syngen.hpp"
#include "support/oracles.hpp"

using namespace mrm;

namespace {

MrmConfig small_model(const DatasetConfig& d) {
    MrmConfig c;
    c.model_dim = 8;
    c.num_heads = 2;
    c.head_dim = 4;
    c.topk = 2;
    c.max_groups = 8;
    c.max_group_size = 8;
    c.num_codes = d.num_codes;
    c.num_features = d.num_features;
    c.max_features = d.max_features;
    return c;
}

SynthConfig small_synth(std::size_t n) {
    SynthConfig s;
    s.n_sequences = n;
    s.vocab_size = 12;
    s.seq_len_min = 12;
    s.seq_len_max = 20;
    s.base_rate = 4.0;
    s.signal_window = 0.5;
    return s;
}

EventSequence counts(std::initializer_list<std::size_t> codes, int label) {
    EventSequence s;
    s.label = label;
    double t = 0;
    for (std::size_t c : codes) s.events.push_back({c, t++, {}, {}});
    return s;
}

/// Predicts 0.5 everywhere and never changes.
class ConstantModel final : public SequenceModel {
public:
    ConstantModel() { params_.add("w", ad::Tensor({1, 1})); }
    ModelKind kind() const override { return ModelKind::logistic; }
    ad::ParameterSet& params() override { return params_; }
    const ad::ParameterSet& params() const override { return params_; }
    double predict(const EventSequence&) const override { return 0.5; }
    double loss_and_gradient(const EventSequence&, ad::ParameterSet&) const override { return std::log(2.0); }

private:
    ad::ParameterSet params_;
};

std::string trace_csv(const EvalReport& r) {
    std::ostringstream out;
    r.write_trace_csv(out);
    return out.str();
}

}  // namespace

TEST_CASE("model kind names") {
    CHECK(parse_model_kind("mrm") == ModelKind::mrm);
    CHECK(parse_model_kind("plain_lstm") == ModelKind::plain_lstm);
    CHECK(parse_model_kind("lr") == ModelKind::logistic);
    CHECK(to_string(ModelKind::logistic) == "lr");
    CHECK_THROWS_AS(parse_model_kind("svm"), std::invalid_argument);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.patience = c.max_epochs;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.lr = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("patience zero with one epoch runs exactly one epoch") {
    const auto split = split_dataset(generate(small_synth(60)), kDefaultSplit, 1);
    TrainConfig tc;
    tc.max_epochs = 1;
    tc.patience = 0;
    const auto r = train(ModelKind::mrm, split, tc, small_model(small_synth(60).dataset_config()));
    CHECK(r.report.trace.size() == 1);
    CHECK(r.report.best_epoch == 1);
}

TEST_CASE("early stopping after the patience runs out") {
    // Constant predictions: validation AUC and loss never move after epoch 1.
    DatasetSplit split;
    for (int k = 0; k < 10; ++k) split.train.push_back(counts({0, 1}, k % 2));
    split.valid = {counts({0, 1}, 1), counts({1, 0}, 0)};
    split.test = split.valid;
    ConstantModel model;
    TrainConfig tc;
    tc.max_epochs = 40;
    tc.patience = 3;
    const EvalReport r = fit(model, split, tc);
    CHECK(r.trace.size() == 4);
    CHECK(r.best_epoch == 1);
    CHECK(r.trace[0].improved);
    for (std::size_t e = 1; e < r.trace.size(); ++e) CHECK_FALSE(r.trace[e].improved);
}

TEST_CASE("equal validation AUC falls back to validation loss") {
    DatasetSplit split;
    for (int k = 0; k < 20; ++k) {
        split.train.push_back(counts({0, 0}, 1));
        split.train.push_back(counts({1, 1}, 0));
    }
    split.valid = {counts({0}, 1), counts({1}, 0)};
    split.test = split.valid;
    LogisticModel model(2, 0.0);
    TrainConfig tc;
    tc.lr = 0.1;
    tc.max_epochs = 20;
    tc.patience = 5;
    const EvalReport r = fit(model, split, tc);
    // AUC is 1 from the first epoch on, yet the loss keeps falling.
    CHECK(r.best_epoch == 20);
    CHECK(r.trace.size() == 20);
}

TEST_CASE("identical seeds give identical traces and metrics") {
    const auto split = split_dataset(generate(small_synth(80)), kDefaultSplit, 4);
    TrainConfig tc;
    tc.max_epochs = 3;
    tc.patience = 2;
    tc.lr = 1e-2;
    const MrmConfig mc = small_model(small_synth(80).dataset_config());
    const auto a = train(ModelKind::mrm, split, tc, mc);
    const auto b = train(ModelKind::mrm, split, tc, mc);
    CHECK(trace_csv(a.report) == trace_csv(b.report));
    CHECK(a.report.test.auc == b.report.test.auc);
    CHECK(a.checkpoint.params == b.checkpoint.params);

    tc.threads = 3;
    const auto c = train(ModelKind::mrm, split, tc, mc);
    CHECK(trace_csv(a.report) == trace_csv(c.report));
    CHECK(a.checkpoint.params == c.checkpoint.params);
}

TEST_CASE("test data is scored only after model selection") {
    const auto split = split_dataset(generate(small_synth(60)), kDefaultSplit, 2);
    std::vector<std::string> calls;
    TrainObserver spy;
    spy.on_evaluate = [&](std::string_view which) { calls.emplace_back(which); };
    spy.on_epoch = [&](const EpochStats&) { calls.emplace_back("epoch"); };
    TrainConfig tc;
    tc.max_epochs = 3;
    tc.patience = 2;
    (void)train(ModelKind::plain_lstm, split, tc, small_model(small_synth(60).dataset_config()), &spy);
    REQUIRE(!calls.empty());
    CHECK(calls.back() == "test");
    CHECK(std::count(calls.begin(), calls.end(), "test") == 1);
    const auto last_epoch = std::find(calls.rbegin(), calls.rend(), "epoch");
    CHECK(std::find(calls.begin(), last_epoch.base(), "test") == last_epoch.base());
}

TEST_CASE("report serialisation") {
    const auto split = split_dataset(generate(small_synth(60)), kDefaultSplit, 3);
    TrainConfig tc;
    tc.max_epochs = 2;
    tc.patience = 1;
    const auto r = train_lr_baseline(split, 1e-3, tc, small_synth(60).dataset_config());
    const KeyValues kv = r.report.to_key_values();
    for (const char* key : {"model", "auc", "ap", "n_pos", "n_neg", "best_epoch"}) CHECK(kv.contains(key));
    CHECK(kv.get("model") == "lr");
    CHECK(kv.get_int("n_pos") + kv.get_int("n_neg") == static_cast<long long>(split.test.size()));
    const std::string csv = trace_csv(r.report);
    CHECK(csv.rfind("epoch,train_loss,valid_auc\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(r.report.trace.size() + 1));
}

TEST_CASE("logistic regression separates a separable set") {
    DatasetSplit split;
    for (int k = 0; k < 20; ++k) {
        split.train.push_back(counts({0, 0, 2}, 1));
        split.train.push_back(counts({1, 1, 2}, 0));
    }
    split.valid = {counts({0, 2}, 1), counts({1, 2}, 0)};
    split.test = split.valid;
    DatasetConfig d;
    d.num_codes = 3;
    d.num_features = 0;
    TrainConfig tc;
    tc.lr = 0.1;
    tc.batch_size = 8;
    tc.max_epochs = 200;
    tc.patience = 199;
    const auto r = train_lr_baseline(split, 0.0, tc, d);
    CHECK(r.report.train.loss < 0.01);
    CHECK(r.report.test.auc == 1.0);
}

TEST_CASE("a huge penalty shrinks the weights to zero") {
    DatasetSplit split;
    std::mt19937_64 rng(5);
    auto symmetric = [&](int label) {
        EventSequence s;
        s.label = label;
        for (int i = 0; i < 6; ++i) s.events.push_back({rng() % 4, static_cast<double>(i), {}, {}});
        return s;
    };
    for (int k = 0; k < 40; ++k) split.train.push_back(symmetric(k % 2));
    for (int k = 0; k < 10; ++k) split.valid.push_back(symmetric(k % 2));
    for (int k = 0; k < 200; ++k) split.test.push_back(symmetric(k % 2));
    LogisticModel model(4, 1e6);
    model.params()[0].fill(1.0);
    TrainConfig tc;
    tc.lr = 0.01;
    tc.max_epochs = 100;
    tc.patience = 99;
    ad::Tensor last;
    TrainObserver watch;
    watch.on_epoch = [&](const EpochStats&) { last = model.params()[0]; };
    const EvalReport r = fit(model, split, tc, &watch);
    // Adam keeps hopping around the minimum by about one step size.
    for (double x : last.data()) CHECK(std::abs(x) < 0.01);
    CHECK(std::abs(r.test.auc - 0.5) < 0.1);
}

TEST_CASE("divergence names the batch") {
    DatasetSplit split;
    for (int k = 0; k < 6; ++k) split.train.push_back(counts({0, 1}, k % 2));
    split.valid = {counts({0}, 1), counts({1}, 0)};
    split.test = split.valid;
    LogisticModel model(2, 0.0);
    model.params()[0][0] = std::nan("");
    TrainConfig tc;
    tc.max_epochs = 2;
    tc.patience = 1;
    tc.batch_size = 4;
    try {
        (void)fit(model, split, tc);
        FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
        CHECK(e.epoch() == 1);
        CHECK(e.batch() == 0);
    }
}

TEST_CASE("single-class splits report NaN metrics") {
    LogisticModel model(3, 0.0);
    const std::vector<EventSequence> only_pos{counts({0}, 1), counts({1}, 1)};
    const SplitMetrics m = evaluate(model, only_pos);
    CHECK(std::isnan(m.auc));
    CHECK(m.ap == 1.0);
    CHECK(m.n_pos == 2);
    CHECK(m.loss == doctest::Approx(std::log(2.0)));
}

TEST_CASE("checkpoint round trip") {
    const SynthConfig syn = small_synth(60);
    const auto split = split_dataset(generate(syn), kDefaultSplit, 7);
    TrainConfig tc;
    tc.max_epochs = 2;
    tc.patience = 1;
    const auto r = train(ModelKind::mrm, split, tc, small_model(syn.dataset_config()));
    std::stringstream ss;
    ad::write_archive(ss, r.checkpoint.to_archive());
    const Checkpoint back = Checkpoint::from_archive(ad::read_archive(ss));
    CHECK(back.kind == ModelKind::mrm);
    CHECK(back.params == r.checkpoint.params);
    CHECK(back.model_config.model_dim == 8);
    REQUIRE(back.dataset.numeric_stats.size() == syn.num_features);
    for (std::size_t f = 0; f < syn.num_features; ++f) {
        CHECK(back.dataset.numeric_stats[f].mean == r.checkpoint.dataset.numeric_stats[f].mean);
        CHECK(back.dataset.numeric_stats[f].std == r.checkpoint.dataset.numeric_stats[f].std);
    }
    const auto model = back.make_model();
    const auto scored = evaluate(*model, normalize_numeric(split.test, back.dataset));
    CHECK(scored.auc == r.report.test.auc);
    CHECK(scored.loss == r.report.test.loss);

    DatasetConfig other = syn.dataset_config();
    other.num_codes += 1;
    CHECK_THROWS_AS(back.check_compatible(other), DataError);

    ad::Archive broken = r.checkpoint.to_archive();
    broken.params[0] = ad::Tensor({3, 3});
    CHECK_THROWS(Checkpoint::from_archive(broken));
}
