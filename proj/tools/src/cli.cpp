#include "mrm/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "mrm/events.hpp"
#include "mrm/experiment.hpp"
#include "mrm/partition.hpp"
#include "mrm/syngen.hpp"

namespace mrm::cli {

namespace {

/// Bad flags or flag combinations detected after parsing.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class LogLevel { quiet, info, debug };

LogLevel log_level_from_env() {
    const char* env = std::getenv("MRM_LOG");
    if (!env || !*env) return LogLevel::info;
    const std::string v = env;
    if (v == "quiet") return LogLevel::quiet;
    if (v == "info") return LogLevel::info;
    if (v == "debug") return LogLevel::debug;
    throw UsageError("MRM_LOG must be one of quiet, info, debug (got '" + v + "')");
}

class Log {
public:
    Log(std::ostream& err, LogLevel level) : err_(err), level_(level) {}
    void info(const std::string& msg) const {
        if (level_ >= LogLevel::info) err_ << msg << '\n';
    }
    void debug(const std::string& msg) const {
        if (level_ >= LogLevel::debug) err_ << msg << '\n';
    }

private:
    std::ostream& err_;
    LogLevel level_;
};

template <class Fn>
auto as_usage(Fn&& fn) {
    try {
        return fn();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

std::filesystem::path with_suffix(const std::filesystem::path& p, const std::string& suffix) {
    return p.string() + suffix;
}

std::vector<double> parse_times(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string token;
    while (std::getline(ss, token, ',')) {
        const auto first = token.find_first_not_of(" \t");
        const auto last = token.find_last_not_of(" \t");
        if (first == std::string::npos) throw UsageError("--times: empty entry");
        token = token.substr(first, last - first + 1);
        double v = 0;
        const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
        if (res.ec != std::errc() || res.ptr != token.data() + token.size() || !std::isfinite(v))
            throw UsageError("--times: not a number: '" + token + "'");
        out.push_back(v);
    }
    if (out.empty()) throw UsageError("--times: no values");
    return out;
}

void print(std::ostream& out, const KeyValues& kv) { kv.write(out); }

// ------------------------------------------------------------------ generate

struct GenerateArgs {
    std::string config;
    std::string out;
    long long seed = 0;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out, const Log& log) {
    SynthConfig c = SynthConfig::from_key_values(KeyValues::load(a.config));
    c.seed = static_cast<std::uint64_t>(a.seed);
    as_usage([&] {
        c.validate();
        return 0;
    });
    const auto seqs = generate(c);
    save_dataset(a.out, seqs);

    KeyValues sidecar = c.dataset_config().to_key_values();
    const KeyValues echo = c.to_key_values();
    for (const auto& [k, v] : echo.entries()) sidecar.set("syngen." + k, v);
    sidecar.save(sidecar_path(a.out));
    log.info("wrote " + std::to_string(seqs.size()) + " sequences to " + a.out);

    long long pos = 0;
    for (const auto& s : seqs) pos += s.label;
    KeyValues summary;
    summary.set("sequences", static_cast<long long>(seqs.size()));
    summary.set("positives", pos);
    summary.set("negatives", static_cast<long long>(seqs.size()) - pos);
    print(out, summary);
    return kOk;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
    std::string data;
    std::string model = "mrm";
    std::string out;
    MrmConfig mc;
    TrainConfig tc;
    double l2 = 1e-3;
};

int cmd_train(TrainArgs a, std::ostream& out, const Log& log) {
    const ModelKind kind = as_usage([&] { return parse_model_kind(a.model); });
    const DatasetConfig dataset = load_dataset_config(a.data);
    a.mc.num_codes = dataset.num_codes;
    a.mc.num_features = dataset.num_features;
    a.mc.max_features = dataset.max_features;
    as_usage([&] {
        a.tc.validate();
        if (kind != ModelKind::logistic) a.mc.validate();
        if (!(a.l2 >= 0.0)) throw std::invalid_argument("--l2 must be >= 0");
        return 0;
    });

    const auto seqs = load_dataset(a.data, dataset);
    log.info("loaded " + std::to_string(seqs.size()) + " sequences from " + a.data);
    const DatasetSplit split = split_dataset(seqs, kDefaultSplit, a.tc.seed);
    log.debug("split sizes " + std::to_string(split.train.size()) + "/" + std::to_string(split.valid.size()) + "/" +
              std::to_string(split.test.size()));

    TrainObserver observer;
    observer.on_epoch = [&](const EpochStats& s) {
        log.info("epoch " + std::to_string(s.epoch) + " train_loss " + format_double(s.train_loss) + " valid_auc " +
                 format_double(s.valid_auc) + (s.improved ? " *" : ""));
    };
    observer.on_evaluate = [&](std::string_view which) { log.debug("scoring " + std::string(which) + " split"); };

    const TrainResult r = kind == ModelKind::logistic ? train_lr_baseline(split, a.l2, a.tc, dataset, &observer)
                                                      : train(kind, split, a.tc, a.mc, &observer);
    const std::filesystem::path ckpt = a.out;
    r.checkpoint.save(ckpt);
    r.report.to_key_values().save(with_suffix(ckpt, ".report"));
    {
        std::ofstream csv(with_suffix(ckpt, ".trace.csv"));
        r.report.write_trace_csv(csv);
        if (!csv) throw std::runtime_error("cannot write " + with_suffix(ckpt, ".trace.csv").string());
    }
    KeyValues echo = r.checkpoint.config_echo();
    echo.set("lr", a.tc.lr);
    echo.set("batch_size", static_cast<long long>(a.tc.batch_size));
    echo.set("max_epochs", static_cast<long long>(a.tc.max_epochs));
    echo.set("patience", static_cast<long long>(a.tc.patience));
    echo.set("seed", static_cast<long long>(a.tc.seed));
    echo.set("clip", a.tc.clip_norm);
    echo.set("data", a.data);
    echo.save(with_suffix(ckpt, ".config"));
    log.info("wrote " + ckpt.string() + " (.report, .trace.csv, .config)");

    KeyValues summary;
    summary.set("model", std::string(to_string(kind)));
    summary.set("auc", r.report.test.auc);
    summary.set("ap", r.report.test.ap);
    summary.set("best_epoch", static_cast<long long>(r.report.best_epoch));
    print(out, summary);
    return kOk;
}

// ------------------------------------------------------------------ evaluate

struct EvaluateArgs {
    std::string data;
    std::string ckpt;
    std::string split = "all";
    std::size_t threads = 1;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, const Log& log) {
    const Checkpoint ck = Checkpoint::load(a.ckpt);
    const DatasetConfig dataset = load_dataset_config(a.data);
    ck.check_compatible(dataset);
    auto seqs = load_dataset(a.data, dataset);
    if (a.split != "all") {
        DatasetSplit parts = split_dataset(std::move(seqs), ck.split_fractions, ck.split_seed);
        seqs = a.split == "train" ? std::move(parts.train)
               : a.split == "valid" ? std::move(parts.valid)
                                    : std::move(parts.test);
    }
    log.info("scoring " + std::to_string(seqs.size()) + " sequences (" + a.split + ")");
    const auto model = ck.make_model();
    const SplitMetrics m = evaluate(*model, normalize_numeric(seqs, ck.dataset), a.threads);

    KeyValues kv;
    kv.set("model", std::string(to_string(ck.kind)));
    kv.set("split", a.split);
    kv.set("auc", m.auc);
    kv.set("ap", m.ap);
    kv.set("loss", m.loss);
    kv.set("n_pos", static_cast<long long>(m.n_pos));
    kv.set("n_neg", static_cast<long long>(m.n_neg));
    print(out, kv);
    return kOk;
}

// ------------------------------------------------------------------ partition

struct PartitionArgs {
    std::string times;
    std::size_t max_groups = 0;
    std::size_t max_group_size = 0;
};

int cmd_partition(const PartitionArgs& a, std::ostream& out) {
    const auto times = parse_times(a.times);
    for (std::size_t i = 1; i < times.size(); ++i)
        if (times[i] < times[i - 1]) throw UsageError("--times must be sorted non-decreasing");
    if (a.max_groups == 0 || a.max_group_size == 0) throw UsageError("--M and --L_G must be >= 1");
    const Partition p = optimal_partition(times, a.max_groups, a.max_group_size);
    out << "groups = " << p.groups.size() << '\n';
    for (std::size_t g = 0; g < p.groups.size(); ++g)
        out << "group." << g << " = [" << p.groups[g].begin << ", " << p.groups[g].end << ") span "
            << format_double(p.spans[g]) << '\n';
    out << "minimax_span = " << format_double(p.minimax_span) << '\n';
    return kOk;
}

// ------------------------------------------------------------------ inspect

struct InspectArgs {
    std::string ckpt;
    std::string data;
};

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
    if (a.ckpt.empty() == a.data.empty()) throw UsageError("inspect needs exactly one of --ckpt or --data");
    if (!a.ckpt.empty()) {
        const Checkpoint ck = Checkpoint::load(a.ckpt);
        print(out, ck.config_echo());
        std::size_t total = 0;
        for (std::size_t i = 0; i < ck.params.size(); ++i) {
            const auto& t = ck.params[i];
            double sq = 0;
            for (double v : t.data()) sq += v * v;
            out << "param." << ck.params.name(i) << " = " << t.shape_string() << " norm "
                << format_double(std::sqrt(sq)) << '\n';
            total += t.size();
        }
        out << "param_count = " << total << '\n';
        return kOk;
    }
    const DatasetConfig dataset = load_dataset_config(a.data);
    const auto seqs = load_dataset(a.data, dataset);
    std::size_t pos = 0, events = 0, shortest = seqs.empty() ? 0 : seqs.front().length(), longest = 0;
    for (const auto& s : seqs) {
        pos += static_cast<std::size_t>(s.label);
        events += s.length();
        shortest = std::min(shortest, s.length());
        longest = std::max(longest, s.length());
    }
    KeyValues kv = dataset.to_key_values();
    kv.set("sequences", static_cast<long long>(seqs.size()));
    kv.set("positives", static_cast<long long>(pos));
    kv.set("negatives", static_cast<long long>(seqs.size() - pos));
    kv.set("events", static_cast<long long>(events));
    kv.set("length_min", static_cast<long long>(shortest));
    kv.set("length_max", static_cast<long long>(longest));
    print(out, kv);
    return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-level representation model for clinical event sequences", "mrm"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "mrm 1.0");

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Write a synthetic dataset and its sidecar config");
    g->add_option("--config", gen.config, "Synthetic generator settings (key = value)")->required()->check(CLI::ExistingFile);
    g->add_option("--out", gen.out, "Dataset file to write")->required();
    g->add_option("--seed", gen.seed, "Generator seed")->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Fit a model and write checkpoint, report and trace");
    t->add_option("--data", tr.data, "Dataset file (sidecar <data>.cfg next to it)")->required()->check(CLI::ExistingFile);
    t->add_option("--model", tr.model, "mrm, plain_lstm or lr")->capture_default_str()
        ->check(CLI::IsMember({"mrm", "plain_lstm", "lr"}));
    t->add_option("--out", tr.out, "Checkpoint path")->required();
    t->add_option("--D_m", tr.mc.model_dim, "Model dimension")->capture_default_str();
    t->add_option("--N_h", tr.mc.num_heads, "Attention heads")->capture_default_str();
    t->add_option("--D_a", tr.mc.head_dim, "Per-head dimension")->capture_default_str();
    t->add_option("--topk", tr.mc.topk, "Neighbors kept per query")->capture_default_str();
    t->add_option("--T_r", tr.mc.half_window, "Attention half-window in hours")->capture_default_str();
    t->add_option("--M", tr.mc.max_groups, "Maximum number of event groups")->capture_default_str();
    t->add_option("--L_G", tr.mc.max_group_size, "Maximum events per group")->capture_default_str();
    t->add_option("--lr", tr.tc.lr, "Adam learning rate")->capture_default_str();
    t->add_option("--batch_size", tr.tc.batch_size, "Sequences per mini-batch")->capture_default_str();
    t->add_option("--max_epochs", tr.tc.max_epochs, "Epoch budget")->capture_default_str();
    t->add_option("--patience", tr.tc.patience, "Non-improving epochs before stopping")->capture_default_str();
    t->add_option("--seed", tr.tc.seed, "Seed for split, initialisation and shuffling")->capture_default_str();
    t->add_option("--clip", tr.tc.clip_norm, "Gradient norm clip")->capture_default_str();
    t->add_option("--l2", tr.l2, "L2 penalty (lr model only)")->capture_default_str();
    t->add_option("--threads", tr.tc.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

    EvaluateArgs ev;
    auto* e = app.add_subcommand("evaluate", "Score a dataset with a checkpoint");
    e->add_option("--data", ev.data, "Dataset file")->required()->check(CLI::ExistingFile);
    e->add_option("--ckpt", ev.ckpt, "Checkpoint from train")->required()->check(CLI::ExistingFile);
    e->add_option("--split", ev.split, "all, or the train/valid/test part under the checkpoint's split")
        ->capture_default_str()
        ->check(CLI::IsMember({"all", "train", "valid", "test"}));
    e->add_option("--threads", ev.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

    PartitionArgs pa;
    auto* p = app.add_subcommand("partition", "Minimax contiguous grouping of event times");
    p->add_option("--times", pa.times, "Comma-separated sorted times in hours")->required();
    p->add_option("--M", pa.max_groups, "Maximum number of groups")->required();
    p->add_option("--L_G", pa.max_group_size, "Maximum events per group")->required();

    InspectArgs in;
    auto* i = app.add_subcommand("inspect", "Summarise a checkpoint or a dataset");
    i->add_option("--ckpt", in.ckpt, "Checkpoint file")->check(CLI::ExistingFile);
    i->add_option("--data", in.data, "Dataset file")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& ex) {
        const int code = app.exit(ex, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        const Log log(err, log_level_from_env());
        if (g->parsed()) return cmd_generate(gen, out, log);
        if (t->parsed()) return cmd_train(tr, out, log);
        if (e->parsed()) return cmd_evaluate(ev, out, log);
        if (p->parsed()) return cmd_partition(pa, out);
        return cmd_inspect(in, out);
    } catch (const UsageError& ex) {
        err << "error: " << ex.what() << '\n';
        return kUsage;
    } catch (const TrainingDiverged& ex) {
        err << "error: training diverged at epoch " << ex.epoch() << ", batch " << ex.batch() << ": " << ex.what()
            << '\n';
        return kFailure;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return kFailure;
    }
}

}  // namespace mrm::cli
