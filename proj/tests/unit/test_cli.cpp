#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>

#include "cqa/service/formats.hpp"
#include "cqa/service/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cqa::service;

namespace {

struct Run {
    int status;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int s = run_pipeline(args, out, err);
    return {s, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / ("cqa_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().filename().string().rfind("last_", 0) != 0)
            files[fs::relative(e.path(), root).string()] = read_text(e.path());
    return files;
}

// Runs the whole pipeline through the installed binary into `dir`.
void pipeline(const fs::path& dir) {
    const std::string cli = CQA_CLI_PATH;
    const std::string d = dir.string();
    const std::vector<std::string> steps{
        "synth --n 60 --seed 7 --out " + d + "/train",
        "synth --n 30 --seed 8 --out " + d + "/cal",
        "synth --n 30 --seed 9 --out " + d + "/test",
        "train --data " + d + "/train --val " + d + "/cal --epochs 4 --seed 1 --out " + d + "/model.bin --log " + d +
            "/train_log.json",
        "fine-tune --init " + d + "/model.bin --data " + d + "/cal --labels manual --epochs 2 --lr-groups " +
            "dense1=1e-5,dense2=1e-4,head=1e-3 --out " + d + "/tuned.bin",
        "predict --model " + d + "/tuned.bin --data " + d + "/cal --seed 3 --probs-out " + d +
            "/cal_probs.csv --pred-out " + d + "/cal_pred.csv",
        "predict --model " + d + "/tuned.bin --data " + d + "/test --seed 3 --probs-out " + d +
            "/test_probs.csv --pred-out " + d + "/test_pred.csv",
        "calibrate --pred " + d + "/cal_pred.csv --data " + d + "/cal --target 0.3 --out " + d +
            "/threshold.json --records-out " + d + "/cal_records.csv",
        "evaluate --pred " + d + "/test_pred.csv --data " + d + "/test --threshold " + d + "/threshold.json --out " +
            d + "/report.json",
        "metrics --data " + d + "/test --out " + d + "/metrics.csv",
        "surrogate-label --data " + d + "/test --rule min_rule --out " + d + "/min_labels.csv",
    };
    for (const auto& s : steps) {
        const std::string cmd = cli + " " + s + " > " + d + "/last_out.txt 2> " + d + "/last_err.txt";
        CAPTURE(s);
        REQUIRE(std::system(cmd.c_str()) == 0);
    }
}

}  // namespace

TEST_CASE("calibrate on the five-record fixture") {
    auto dir = fresh_dir("calib");
    auto r = run({"calibrate", "--records", CQA_FIXTURE_DIR "/five_record.csv", "--target", "0.9", "--out",
                  (dir / "t.json").string()});
    REQUIRE(r.status == 0);
    auto j = Json::parse(read_text(dir / "t.json"));
    CHECK(j["tau"] == 0.10);
    CHECK(j["coverage"] == 0.4);
    CHECK(j["target_accuracy"] == 0.9);

    auto e = run({"evaluate", "--records", CQA_FIXTURE_DIR "/five_record.csv", "--threshold",
                  (dir / "t.json").string(), "--out", (dir / "rep.json").string()});
    REQUIRE(e.status == 0);
    auto rep = Json::parse(read_text(dir / "rep.json"));
    CHECK(rep["coverage"] == 0.4);
    CHECK(rep["selective_accuracy"] == 1.0);
    CHECK(rep["overall_accuracy"] == 0.6);
}

TEST_CASE("errors are reported as json on stderr") {
    auto bad_verb = run({"frobnicate"});
    CHECK(bad_verb.status != 0);
    auto j = Json::parse(bad_verb.err);
    CHECK(j.contains("error"));
    CHECK(j.contains("message"));

    auto missing_flag = run({"calibrate", "--target", "0.9"});
    CHECK(missing_flag.status != 0);
    CHECK(Json::parse(missing_flag.err)["error"] == "usage_error");
}

TEST_CASE("unachievable calibration target") {
    auto dir = fresh_dir("unreach");
    write_text(dir / "r.csv", "slice_id,uncertainty,predicted_class,reference_class\na,0.1,0,1\nb,0.2,1,1\n");
    auto r = run({"calibrate", "--records", (dir / "r.csv").string(), "--target", "0.9", "--out",
                  (dir / "t.json").string()});
    CHECK(r.status != 0);
    auto j = Json::parse(r.err);
    CHECK(j["error"] == "unachievable_target");
    CHECK(j["best_accuracy"] == 0.5);
    CHECK_FALSE(fs::exists(dir / "t.json"));

    auto missing = run({"calibrate", "--records", (dir / "nope.csv").string(), "--target", "0.9", "--out",
                        (dir / "t.json").string()});
    CHECK(missing.status != 0);
    CHECK(Json::parse(missing.err).contains("error"));
}

TEST_CASE("synth is byte-identical across runs and predict writes T rows per slice") {
    auto a = fresh_dir("synth_a"), b = fresh_dir("synth_b");
    REQUIRE(run({"synth", "--n", "40", "--seed", "7", "--out", a.string()}).status == 0);
    REQUIRE(run({"synth", "--n", "40", "--seed", "7", "--out", b.string()}).status == 0);
    auto sa = snapshot(a), sb = snapshot(b);
    CHECK(sa.size() > 40);
    CHECK(sa == sb);
    auto meta = Json::parse(read_text(a / "dataset.json"));
    CHECK(meta["n"] == 40);

    auto m = fresh_dir("synth_model");
    REQUIRE(run({"train", "--data", a.string(), "--epochs", "2", "--out", (m / "model.bin").string()}).status == 0);
    REQUIRE(run({"predict", "--model", (m / "model.bin").string(), "--data", a.string(), "--t", "20", "--probs-out",
                 (m / "probs.csv").string(), "--pred-out", (m / "pred.csv").string()})
                .status == 0);
    auto probs = read_csv(m / "probs.csv");
    std::map<std::string, int> rows;
    for (const auto& r : probs.rows) ++rows[r[0]];
    CHECK(rows.size() == 40);
    for (const auto& [id, n] : rows) CHECK(n == 20);
    CHECK(read_predictions_csv(m / "pred.csv").size() == 40);
}

TEST_CASE("config file supplies T and thresholds") {
    auto dir = fresh_dir("config");
    write_text(dir / "cfg.json", R"({"T": 5, "dropout_rate": 0.2, "thresholds": {"aggregation": "min_rule"}})");
    REQUIRE(run({"--config", (dir / "cfg.json").string(), "synth", "--n", "12", "--seed", "1", "--out",
                 (dir / "d").string()})
                .status == 0);
    CHECK(Json::parse(read_text(dir / "d" / "dataset.json"))["thresholds"]["aggregation"] == "min_rule");
    REQUIRE(run({"--config", (dir / "cfg.json").string(), "train", "--data", (dir / "d").string(), "--epochs", "1",
                 "--out", (dir / "m.bin").string()})
                .status == 0);
    REQUIRE(run({"--config", (dir / "cfg.json").string(), "predict", "--model", (dir / "m.bin").string(), "--data",
                 (dir / "d").string(), "--probs-out", (dir / "p.csv").string(), "--pred-out",
                 (dir / "q.csv").string()})
                .status == 0);
    CHECK(read_csv(dir / "p.csv").rows.size() == 12 * 5);
    write_text(dir / "broken.json", "[1,2]");
    CHECK(run({"--config", (dir / "broken.json").string(), "synth", "--n", "2", "--out", (dir / "x").string()})
              .status != 0);
}

TEST_CASE("full pipeline is byte-identical across runs") {
    auto a = fresh_dir("pipe_a"), b = fresh_dir("pipe_b");
    pipeline(a);
    pipeline(b);
    auto sa = snapshot(a), sb = snapshot(b);
    CHECK(sa.count("report.json") == 1);
    CHECK(sa.count("tuned.bin") == 1);
    REQUIRE(sa.size() == sb.size());
    for (const auto& [name, content] : sa) {
        CAPTURE(name);
        CHECK(sb[name] == content);
    }
}
