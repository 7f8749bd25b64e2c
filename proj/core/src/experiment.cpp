#include "mrm/experiment.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

namespace mrm {

namespace {

std::string join(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ' ';
        out += format_double(values[i]);
    }
    return out;
}

std::vector<double> split_doubles(const std::string& text) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string token;
    while (in >> token) {
        double v = 0;
        const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
        if (res.ec != std::errc() || res.ptr != token.data() + token.size())
            throw std::runtime_error("checkpoint: bad number '" + token + "'");
        out.push_back(v);
    }
    return out;
}

const std::string& require_meta(const ad::Archive& a, const std::string& key) {
    const std::string* v = a.meta(key);
    if (!v) throw std::runtime_error("checkpoint: missing metadata '" + key + "'");
    return *v;
}

DatasetSplit normalized(const DatasetSplit& split, const DatasetConfig& dataset) {
    return {normalize_numeric(split.train, dataset), normalize_numeric(split.valid, dataset),
            normalize_numeric(split.test, dataset)};
}

}  // namespace

ad::Archive Checkpoint::to_archive() const {
    ad::Archive a;
    a.metadata.emplace_back("model", std::string(to_string(kind)));
    const KeyValues model_kv = model_config.to_key_values();
    for (const auto& [k, v] : model_kv.entries()) a.metadata.emplace_back("config." + k, v);
    const KeyValues data_kv = dataset.to_key_values();
    for (const auto& [k, v] : data_kv.entries()) a.metadata.emplace_back("data." + k, v);
    std::vector<double> means, stds;
    for (const FeatureStats& s : dataset.numeric_stats) {
        means.push_back(s.mean);
        stds.push_back(s.std);
    }
    a.metadata.emplace_back("norm.mean", join(means));
    a.metadata.emplace_back("norm.std", join(stds));
    a.metadata.emplace_back("l2", format_double(l2));
    a.metadata.emplace_back("split.seed", std::to_string(split_seed));
    a.metadata.emplace_back("split.fractions", join({split_fractions.begin(), split_fractions.end()}));
    a.params = params;
    return a;
}

Checkpoint Checkpoint::from_archive(const ad::Archive& a) {
    Checkpoint c;
    c.kind = parse_model_kind(require_meta(a, "model"));
    KeyValues model_kv, data_kv;
    for (const auto& [k, v] : a.metadata) {
        if (k.rfind("config.", 0) == 0) model_kv.set(k.substr(7), v);
        if (k.rfind("data.", 0) == 0) data_kv.set(k.substr(5), v);
    }
    c.model_config = MrmConfig::from_key_values(model_kv);
    c.dataset = DatasetConfig::from_key_values(data_kv);
    const auto means = split_doubles(require_meta(a, "norm.mean"));
    const auto stds = split_doubles(require_meta(a, "norm.std"));
    if (means.size() != stds.size()) throw std::runtime_error("checkpoint: normalisation statistics disagree");
    for (std::size_t i = 0; i < means.size(); ++i) c.dataset.numeric_stats.push_back({means[i], stds[i]});
    c.dataset.validate();
    c.l2 = split_doubles(require_meta(a, "l2")).at(0);
    c.split_seed = std::stoull(require_meta(a, "split.seed"));
    const auto fr = split_doubles(require_meta(a, "split.fractions"));
    if (fr.size() != 3) throw std::runtime_error("checkpoint: split.fractions needs three values");
    c.split_fractions = {fr[0], fr[1], fr[2]};
    c.params = a.params;
    // Construction re-checks names and shapes against the configuration.
    (void)c.make_model();
    return c;
}

void Checkpoint::save(const std::filesystem::path& path) const { ad::save_archive(path, to_archive()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return from_archive(ad::load_archive(path)); }

std::unique_ptr<SequenceModel> Checkpoint::make_model() const {
    if (kind == ModelKind::logistic) {
        auto m = std::make_unique<LogisticModel>(params, l2);
        if (m->num_codes() != dataset.num_codes)
            throw std::invalid_argument("checkpoint: lr.w has " + std::to_string(m->num_codes()) +
                                        " rows but N_c = " + std::to_string(dataset.num_codes));
        return m;
    }
    if (model_config.num_codes != dataset.num_codes || model_config.num_features != dataset.num_features)
        throw std::invalid_argument("checkpoint: model and dataset vocabularies disagree");
    return std::make_unique<MrmModel>(model_config, MrmParams::from_set(params, model_config),
                                      kind == ModelKind::plain_lstm);
}

KeyValues Checkpoint::config_echo() const {
    KeyValues kv = model_config.to_key_values();
    kv.set("model", std::string(to_string(kind)));
    kv.set("l2", l2);
    kv.set("split.seed", static_cast<long long>(split_seed));
    kv.set("split.fractions", join({split_fractions.begin(), split_fractions.end()}));
    return kv;
}

void Checkpoint::check_compatible(const DatasetConfig& data) const {
    if (data.num_codes != dataset.num_codes || data.num_features != dataset.num_features ||
        data.max_features > dataset.max_features)
        throw DataError(0, "dataset config (N_c=" + std::to_string(data.num_codes) + ", N_f=" +
                               std::to_string(data.num_features) + ", maxFeat=" + std::to_string(data.max_features) +
                               ") does not match checkpoint (N_c=" + std::to_string(dataset.num_codes) + ", N_f=" +
                               std::to_string(dataset.num_features) + ", maxFeat=" +
                               std::to_string(dataset.max_features) + ")");
}

TrainResult train(ModelKind kind, const DatasetSplit& split, const TrainConfig& train_config,
                  const MrmConfig& model_config, const TrainObserver* observer) {
    if (kind == ModelKind::logistic) throw std::invalid_argument("train: use train_lr_baseline for lr");
    model_config.validate();
    TrainResult result;
    Checkpoint& ck = result.checkpoint;
    ck.kind = kind;
    ck.model_config = model_config;
    ck.dataset = model_config.dataset_config();
    ck.dataset.numeric_stats = compute_numeric_stats(split.train, model_config.num_features);
    ck.split_seed = train_config.seed;

    MrmModel model(model_config, MrmParams::initialize(model_config, train_config.seed),
                   kind == ModelKind::plain_lstm);
    result.report = fit(model, normalized(split, ck.dataset), train_config, observer);
    ck.params = model.params();
    return result;
}

TrainResult train_lr_baseline(const DatasetSplit& split, double l2, const TrainConfig& train_config,
                              const DatasetConfig& dataset, const TrainObserver* observer) {
    TrainResult result;
    Checkpoint& ck = result.checkpoint;
    ck.kind = ModelKind::logistic;
    ck.dataset = dataset;
    ck.dataset.numeric_stats = compute_numeric_stats(split.train, dataset.num_features);
    ck.model_config.num_codes = dataset.num_codes;
    ck.model_config.num_features = dataset.num_features;
    ck.model_config.max_features = dataset.max_features;
    ck.l2 = l2;
    ck.split_seed = train_config.seed;

    LogisticModel model(dataset.num_codes, l2);
    result.report = fit(model, normalized(split, ck.dataset), train_config, observer);
    ck.params = model.params();
    return result;
}

}  // namespace mrm
