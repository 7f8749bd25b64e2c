// Runs the seven acceptance criteria and prints one PASS/FAIL line each.
//
//   mrm_acceptance            all criteria
//   mrm_acceptance 1 3 7      a subset

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "mrm/experiment.hpp"
#include "mrm/syngen.hpp"
#include "support/criteria.hpp"

using namespace mrm;
using check::Outcome;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, a, b, c, d);
    return buf;
}

Outcome timed(const Outcome& o, double secs, double limit) {
    Outcome r = o;
    r.pass = o.pass && secs < limit;
    r.detail += fmt("; %.1f s (limit %.0f s)", secs, limit);
    return r;
}

std::size_t worker_threads() {
    return std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 4);
}

// Dataset and training recipe for the ordering benchmark.
SynthConfig benchmark_data() {
    SynthConfig s;
    s.n_sequences = 2000;
    s.vocab_size = 50;
    s.max_features = 0;  // the generator's features are pure noise
    s.seed = 1;
    return s;
}

MrmConfig benchmark_model(const DatasetConfig& d) {
    MrmConfig c;
    c.model_dim = 32;
    c.num_heads = 8;
    c.head_dim = 4;
    c.num_codes = d.num_codes;
    c.num_features = d.num_features;
    c.max_features = d.max_features;
    return c;
}

TrainConfig benchmark_training() {
    TrainConfig t;
    t.lr = 3e-3;
    t.max_epochs = 30;
    t.patience = 5;
    t.seed = 1;
    t.threads = worker_threads();
    return t;
}

Outcome relative_ordering() {
    const auto start = Clock::now();
    const SynthConfig syn = benchmark_data();
    const DatasetConfig d = syn.dataset_config();
    const auto split = split_dataset(generate(syn), kDefaultSplit, 1);
    const TrainConfig tc = benchmark_training();
    const MrmConfig mc = benchmark_model(d);

    const double mrm = train(ModelKind::mrm, split, tc, mc).report.test.auc;
    const double lstm = train(ModelKind::plain_lstm, split, tc, mc).report.test.auc;
    const double lr = train_lr_baseline(split, 1e-3, tc, d).report.test.auc;

    Outcome o;
    o.pass = mrm >= 0.85 && lstm <= mrm + 0.02 && lr <= 0.60;
    o.detail = fmt("test AUC mrm %.4f (>= 0.85), plain_lstm %.4f (<= mrm + 0.02), lr %.4f (<= 0.60)", mrm, lstm, lr);
    o.detail += fmt(", %.0f threads", static_cast<double>(tc.threads));
    return timed(o, seconds_since(start), 15 * 60);
}

Outcome determinism() {
    SynthConfig syn;
    syn.n_sequences = 300;
    syn.seq_len_min = 20;
    syn.seq_len_max = 40;
    const auto split = split_dataset(generate(syn), kDefaultSplit, 1);
    MrmConfig mc = benchmark_model(syn.dataset_config());
    mc.model_dim = 16;
    mc.num_heads = 4;
    TrainConfig tc;
    tc.max_epochs = 4;
    tc.patience = 3;
    tc.threads = 1;
    auto csv = [&] {
        std::ostringstream out;
        train(ModelKind::mrm, split, tc, mc).report.write_trace_csv(out);
        return out.str();
    };
    const std::string a = csv();
    const std::string b = csv();
    Outcome o;
    o.pass = a == b && !a.empty();
    o.detail = o.pass ? fmt("trace CSVs identical (%.0f bytes)", static_cast<double>(a.size()))
                      : "trace CSVs differ";
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const Criterion criteria[] = {
        {1, "gradient suite",
         [] {
             const auto s = Clock::now();
             const Outcome o = check::gradient_suite(10);
             return timed(o, seconds_since(s), 60);
         }},
        {2, "partition optimality",
         [] {
             const auto s = Clock::now();
             const Outcome o = check::partition_optimality(500, 1000);
             return timed(o, seconds_since(s), 60);
         }},
        {3, "attention oracle", [] { return check::attention_oracle(100); }},
        {4, "metric oracles", [] { return check::metric_oracles(100); }},
        {5, "relative ordering", relative_ordering},
        {6, "determinism", determinism},
        {7, "pipeline invariants", [] { return check::pipeline_invariants(1000); }},
    };

    bool all = true;
    for (const auto& c : criteria) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all = all && o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail
                  << std::endl;
    }
    return all ? 0 : 1;
}
