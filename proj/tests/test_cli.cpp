// Runs the seqscd binary end to end on a tiny corpus.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "scd_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run(const std::string& args) {
    const std::string cmd = std::string(SEQSCD_BIN) + " " + args + " > " + (workdir() / "stdout.txt").string() +
                            " 2> " + (workdir() / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

// Tiny corpus and model so the whole pipeline runs in seconds.
const fs::path& tiny_config() {
    static const fs::path path = [] {
        const nlohmann::json cfg = {
            {"data",
             {{"num_speakers", 2},
              {"feature_dim", 4},
              {"session_duration_s", 40.0},
              {"turn_duration_range_s", {1.0, 3.0}},
              {"num_train_sessions", 2},
              {"num_dev_sessions", 1}}},
            {"encoder", {{"tdnn_channels", 6}, {"bilstm_layers", 1}, {"bilstm_hidden", 4}}},
            {"differnet", {{"hidden", 6}}},
            {"head", {{"decoder_hidden", 6}}},
            {"train", {{"window_s", 2.0}, {"batch_size", 2}, {"total_steps", 3}}}};
        const fs::path p = workdir() / "tiny.json";
        std::ofstream(p) << cfg.dump(2);
        return p;
    }();
    return path;
}

const fs::path& corpus() {
    static const fs::path dir = [] {
        const fs::path d = workdir() / "corpus";
        REQUIRE(run("synth --config " + tiny_config().string() + " --out " + d.string()) == 0);
        return d;
    }();
    return dir;
}

const fs::path& trained() {
    static const fs::path dir = [] {
        const fs::path d = workdir() / "run";
        REQUIRE(run("train --config " + tiny_config().string() + " --out " + d.string() + " --train-dir " +
                    (corpus() / "train").string() + " --dev-dir " + (corpus() / "dev").string()) == 0);
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("usage errors exit with status 2") {
    CHECK(run("") == 2);
    CHECK(run("bogus") == 2);
    CHECK(run("train") == 2);
    CHECK(run("eval --out x --checkpoint /nonexistent.ckpt --data /nonexistent") == 2);
    CHECK(run("trace --out " + (workdir() / "t").string() + " --frames 1,2 --scores 0.5") == 2);

    const fs::path bad = workdir() / "bad.json";
    std::ofstream(bad) << R"({"train": {"learning_rate": 1}})";
    CHECK(run("synth --config " + bad.string() + " --out " + (workdir() / "bad").string()) == 2);
    CHECK(slurp(workdir() / "stderr.txt").find("learning_rate") != std::string::npos);
}

TEST_CASE("synth writes both splits and the config") {
    const fs::path d = corpus();
    CHECK(fs::exists(d / "train" / "session_0.feat"));
    CHECK(fs::exists(d / "train" / "session_1.lab"));
    CHECK(fs::exists(d / "dev" / "session_2.feat"));
    CHECK(fs::exists(d / "config.json"));
    CHECK(slurp(d / "train" / "session_0.lab").find("spk0") != std::string::npos);

    // Another seed gives other contents with the same shapes.
    const fs::path other = workdir() / "corpus_seed";
    REQUIRE(run("synth --seed 99 --config " + tiny_config().string() + " --out " + other.string()) == 0);
    const std::string a = slurp(d / "train" / "session_0.feat");
    const std::string b = slurp(other / "train" / "session_0.feat");
    CHECK(a != b);
    CHECK(a.substr(0, a.find(' ', a.find(' ') + 1)) == b.substr(0, b.find(' ', b.find(' ') + 1)));

    const fs::path one = workdir() / "one.json";
    std::ofstream(one) << R"({"data": {"num_speakers": 1}})";
    CHECK(run("synth --config " + one.string() + " --out " + (workdir() / "one").string()) == 2);
}

TEST_CASE("train, eval and tune produce their artifacts") {
    const fs::path d = trained();
    CHECK(fs::exists(d / "model.ckpt"));
    const std::string log = slurp(d / "train_log.csv");
    CHECK(log.rfind("step,lr,loss,mlfl,quantity,dev_purity,dev_coverage,dev_hn", 0) == 0);
    const nlohmann::json summary = read_json(d / "train_summary.json");
    CHECK(summary["steps"] == 3);
    CHECK(summary.contains("dev"));

    const std::string common = " --checkpoint " + (d / "model.ckpt").string() + " --data " + (corpus() / "dev").string();
    const fs::path ev = workdir() / "eval";
    REQUIRE(run("eval --out " + ev.string() + common) == 0);
    const nlohmann::json agg = read_json(ev / "aggregate.json");
    CHECK(agg["hn"].get<double>() >= 0.0);
    std::istringstream lines(slurp(ev / "results.jsonl"));
    std::string line;
    int records = 0;
    while (std::getline(lines, line)) {
        const auto rec = nlohmann::json::parse(line);
        CHECK(rec.contains("session"));
        CHECK(rec.contains("change_times_s"));
        ++records;
    }
    CHECK(records == 1);

    const fs::path again = workdir() / "eval_again";
    REQUIRE(run("eval --out " + again.string() + common) == 0);
    CHECK(slurp(ev / "results.jsonl") == slurp(again / "results.jsonl"));

    const fs::path none = workdir() / "eval_none";
    REQUIRE(run("eval --theta 1.0 --out " + none.string() + common) == 0);
    CHECK(read_json(none / "aggregate.json")["num_hypothesized_changes"] == 0);

    const fs::path tn = workdir() / "tune";
    REQUIRE(run("tune --out " + tn.string() + common) == 0);
    const nlohmann::json tune = read_json(tn / "tune.json");
    CHECK(tune["curve"].size() == 49);

    const fs::path base = workdir() / "base";
    REQUIRE(run("train-baseline --config " + tiny_config().string() + " --out " + base.string() + " --train-dir " +
                (corpus() / "train").string() + " --dev-dir " + (corpus() / "dev").string()) == 0);
    CHECK(fs::exists(base / "baseline.ckpt"));
    CHECK(run("eval --out " + (workdir() / "eval_base").string() + " --checkpoint " + (base / "baseline.ckpt").string() +
              " --data " + (corpus() / "dev").string()) == 0);
}

TEST_CASE("ablation flags are recorded and validated") {
    const fs::path d = workdir() / "ablate";
    REQUIRE(run("train --config " + tiny_config().string() + " --out " + d.string() + " --ablate focal --ablate scaling") ==
            0);
    const nlohmann::json summary = read_json(d / "train_summary.json");
    CHECK(summary["ablations"] == nlohmann::json::array({"focal", "scaling"}));
    CHECK(run("train --config " + tiny_config().string() + " --out " + d.string() + " --ablate dropout") == 2);
}

TEST_CASE("trace reproduces the hand example") {
    const fs::path d = workdir() / "trace";
    REQUIRE(run("trace --out " + d.string() + " --frames 1,2,3 --scores 0.3,0.5,0.4") == 0);
    const std::string csv = slurp(d / "trace.csv");
    std::istringstream in(csv);
    std::string header, r0, r1, r2;
    std::getline(in, header);
    std::getline(in, r0);
    std::getline(in, r1);
    std::getline(in, r2);
    CHECK(header == "t,d_prime,d_acc,fired,d_t1,d_t2");
    CHECK(r0.rfind("0,0.29999999999999999,0.29999999999999999,0,", 0) == 0);
    CHECK(r1.find(",0,") != std::string::npos);
    CHECK(r2.find(",1,") != std::string::npos);

    REQUIRE(run("trace --out " + d.string() + " --frames 1,2,3,4 --scores 0,0,0,0") == 0);
    CHECK(slurp(d / "trace.csv").find(",1,") == std::string::npos);

    REQUIRE(run("trace --out " + d.string() + " --checkpoint " + (trained() / "model.ckpt").string() + " --features " +
                (corpus() / "dev" / "session_2.feat").string()) == 0);
    // 40 s at 10 ms with downsampling 8: one row per encoded frame.
    std::istringstream rows(slurp(d / "trace.csv"));
    std::string row;
    int count = -1;
    while (std::getline(rows, row)) ++count;
    CHECK(count == 500);
}
