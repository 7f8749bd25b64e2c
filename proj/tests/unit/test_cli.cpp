#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mrm/cli.hpp"
#include "mrm/key_value.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "mrm");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = mrm::cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

mrm::KeyValues parse(const std::string& text) {
    std::istringstream in(text);
    return mrm::KeyValues::parse(in);
}

/// Scratch directory with a 50-sequence synthetic dataset.
struct Workspace {
    fs::path dir = fs::temp_directory_path() / "mrm_test_cli";
    fs::path config = dir / "syn.cfg";
    fs::path data = dir / "data.jsonl";

    Workspace() {
        fs::remove_all(dir);
        fs::create_directories(dir);
        std::ofstream(config) << "n_sequences = 50\nvocab_size = 12\nseq_len_min = 12\nseq_len_max = 24\n";
        setenv("MRM_LOG", "quiet", 1);
        const Run r = invoke({"generate", "--config", config.string(), "--out", data.string(), "--seed", "3"});
        REQUIRE(r.code == 0);
    }
    ~Workspace() { fs::remove_all(dir); }

    std::string path(const std::string& name) const { return (dir / name).string(); }
};

const std::vector<std::string> kSmallModel{"--D_m", "8", "--N_h", "2", "--D_a", "4", "--M", "8", "--L_G", "8",
                                           "--max_epochs", "2", "--patience", "1"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

}  // namespace

TEST_CASE("generate writes one line per sequence and is deterministic") {
    Workspace ws;
    const std::string first = read_file(ws.data);
    CHECK(std::count(first.begin(), first.end(), '\n') == 50);
    CHECK(fs::exists(ws.path("data.jsonl.cfg")));
    const Run again = invoke({"generate", "--config", ws.config.string(), "--out", ws.path("again.jsonl"), "--seed", "3"});
    REQUIRE(again.code == 0);
    CHECK(read_file(ws.path("again.jsonl")) == first);
    const auto summary = parse(again.out);
    CHECK(summary.get_int("positives") + summary.get_int("negatives") == 50);
}

TEST_CASE("generate without a seed lists the missing flag") {
    Workspace ws;
    const Run r = invoke({"generate", "--config", ws.config.string(), "--out", ws.path("x.jsonl")});
    CHECK(r.code == 1);
    CHECK(r.err.find("--seed") != std::string::npos);
}

TEST_CASE("generate rejects an impossible configuration") {
    Workspace ws;
    std::ofstream(ws.path("bad.cfg")) << "seq_len_min = 4\n";
    const Run r = invoke({"generate", "--config", ws.path("bad.cfg"), "--out", ws.path("x.jsonl"), "--seed", "1"});
    CHECK(r.code == 1);
}

TEST_CASE("train writes checkpoint, report, trace and config echo") {
    Workspace ws;
    const std::string ckpt = ws.path("m.ckpt");
    const Run r = invoke(concat({"train", "--data", ws.data.string(), "--model", "mrm", "--out", ckpt}, kSmallModel));
    INFO(r.err);
    REQUIRE(r.code == 0);
    for (const char* suffix : {"", ".report", ".trace.csv", ".config"}) CHECK(fs::exists(ckpt + suffix));
    const auto report = mrm::KeyValues::load(ckpt + ".report");
    CHECK(report.contains("auc"));
    CHECK(report.contains("ap"));
    CHECK(mrm::KeyValues::load(ckpt + ".config").get("D_m") == "8");

    const Run inspect = invoke({"inspect", "--ckpt", ckpt});
    REQUIRE(inspect.code == 0);
    CHECK(inspect.out.find("param.emb.code = [12x8]") != std::string::npos);

    // Scoring the training part of the same file reproduces the report.
    const Run ev = invoke({"evaluate", "--data", ws.data.string(), "--ckpt", ckpt, "--split", "train"});
    REQUIRE(ev.code == 0);
    const auto scored = parse(ev.out);
    CHECK(scored.get("auc") == report.get("train_auc"));
    CHECK(scored.get("ap") == report.get("train_ap"));

    const Run all = invoke({"evaluate", "--data", ws.data.string(), "--ckpt", ckpt});
    REQUIRE(all.code == 0);
    const auto whole = parse(all.out);
    CHECK(whole.get_int("n_pos") + whole.get_int("n_neg") == 50);
}

TEST_CASE("train rejects a head split that does not cover the model dimension") {
    Workspace ws;
    const Run r = invoke({"train", "--data", ws.data.string(), "--out", ws.path("x.ckpt"), "--D_a", "7", "--N_h", "8",
                       "--D_m", "64"});
    CHECK(r.code == 1);
    CHECK(r.err.find("D_a") != std::string::npos);
    CHECK_FALSE(fs::exists(ws.path("x.ckpt")));
}

TEST_CASE("the logistic baseline reports auc and ap") {
    Workspace ws;
    const std::string ckpt = ws.path("lr.ckpt");
    const Run r = invoke({"train", "--data", ws.data.string(), "--model", "lr", "--out", ckpt, "--max_epochs", "3",
                       "--patience", "1"});
    REQUIRE(r.code == 0);
    const auto report = mrm::KeyValues::load(ckpt + ".report");
    CHECK(report.get("model") == "lr");
    CHECK(report.contains("auc"));
    CHECK(report.contains("ap"));
    CHECK(parse(r.out).contains("auc"));
}

TEST_CASE("evaluate refuses a dataset with a different vocabulary") {
    Workspace ws;
    const std::string ckpt = ws.path("lr.ckpt");
    REQUIRE(invoke({"train", "--data", ws.data.string(), "--model", "lr", "--out", ckpt, "--max_epochs", "2",
                 "--patience", "1"})
                .code == 0);
    fs::copy_file(ws.data, ws.path("other.jsonl"));
    std::ofstream(ws.path("other.jsonl.cfg")) << "N_c = 13\nN_f = 8\nmaxFeat = 3\n";
    const Run r = invoke({"evaluate", "--data", ws.path("other.jsonl"), "--ckpt", ckpt});
    CHECK(r.code == 2);
    CHECK(r.err.find("does not match checkpoint") != std::string::npos);
}

TEST_CASE("partition prints groups and the minimax span") {
    const Run r = invoke({"partition", "--times", "0,1,2,10,11", "--M", "2", "--L_G", "10"});
    REQUIRE(r.code == 0);
    const auto kv = parse(r.out);
    CHECK(kv.get_double("minimax_span") == 2.0);
    CHECK(kv.get("group.0") == "[0, 3) span 2");
    CHECK(kv.get("group.1") == "[3, 5) span 1");
}

TEST_CASE("partition reports infeasible input") {
    const Run r = invoke({"partition", "--times", "0,1,2", "--M", "1", "--L_G", "2"});
    CHECK(r.code == 2);
    CHECK(r.err.find("exceed") != std::string::npos);
}

TEST_CASE("usage errors exit with 1") {
    CHECK(invoke({}).code == 1);
    CHECK(invoke({"partition", "--times", "0,1", "--M", "1", "--L_G", "2", "--bogus"}).code == 1);
    CHECK(invoke({"partition", "--times", "0,x", "--M", "1", "--L_G", "2"}).code == 1);
    CHECK(invoke({"partition", "--times", "2,1", "--M", "2", "--L_G", "2"}).code == 1);
    CHECK(invoke({"frobnicate"}).code == 1);
    CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("MRM_LOG controls logging") {
    Workspace ws;
    const std::vector<std::string> args{"inspect", "--data", ws.data.string()};
    setenv("MRM_LOG", "loud", 1);
    CHECK(invoke(args).code == 1);
    setenv("MRM_LOG", "debug", 1);
    const Run debug = invoke(concat({"train", "--data", ws.data.string(), "--out", ws.path("d.ckpt")}, kSmallModel));
    CHECK(debug.code == 0);
    CHECK(debug.err.find("scoring test split") != std::string::npos);
    setenv("MRM_LOG", "quiet", 1);
    const Run quiet = invoke(concat({"train", "--data", ws.data.string(), "--out", ws.path("q.ckpt")}, kSmallModel));
    CHECK(quiet.code == 0);
    CHECK(quiet.err.empty());
}

TEST_CASE("missing files are runtime errors") {
    Workspace ws;
    fs::remove(ws.path("data.jsonl.cfg"));
    const Run r = invoke({"train", "--data", ws.data.string(), "--out", ws.path("x.ckpt")});
    CHECK(r.code == 2);
}
