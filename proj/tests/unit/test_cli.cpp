#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "flowsentry/cli.hpp"
#include "flowsentry/flowdata.hpp"
#include "support.hpp"

using namespace flowsentry;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    int code = dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path write_log(const fs::path& dir, const std::string& name,
                   const std::vector<std::pair<std::string, std::size_t>>& counts) {
    auto path = dir / name;
    std::ofstream out(path);
    write_conn_log(out, testsupport::make_capture(counts));
    return path;
}

std::size_t files_under(const fs::path& dir) {
    std::size_t n = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir)) n += e.is_regular_file();
    return n;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
    auto none = run({});
    CHECK(none.code == kExitUsage);
    CHECK(none.err.find("Usage") != std::string::npos);
    CHECK(run({"frobnicate"}).code == kExitUsage);
    CHECK(run({"train"}).code == kExitUsage);
    auto help = run({"--help"});
    CHECK(help.code == kExitOk);
    CHECK(help.out.find("summarize") != std::string::npos);
}

TEST_CASE("summarize a 42-1 sized capture") {
    testsupport::TempDir dir;
    auto log = write_log(dir.path, "conn.log.labeled", {{"Benign", 4421}, {"FileDownload", 3}, {"C&C-FileDownload", 3}});
    auto r = run({"summarize", log.string(), "--dataset", "42-1"});
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.find("total\t4427\n") != std::string::npos);
    CHECK(r.out.find("Benign\t4421\n") != std::string::npos);
    CHECK(r.out.find("C&C-FD\t3\n") != std::string::npos);
    CHECK(r.out.find("published_total\t4427\n") != std::string::npos);

    auto missing = run({"summarize", (dir.path / "nope.log").string()});
    CHECK(missing.code == kExitData);
    std::ofstream(dir.path / "bad.log") << "garbage\n";
    CHECK(run({"summarize", (dir.path / "bad.log").string()}).code == kExitData);
}

TEST_CASE("end-to-end pipeline on a synthetic capture") {
    testsupport::TempDir dir;
    auto log = write_log(dir.path, "capture.log", {{"Benign", 150}, {"POAHPS", 100}, {"C&C", 30}});
    const auto data = (dir.path / "data").string();
    const auto multi = (dir.path / "multi").string();

    auto pre = run({"preprocess", log.string(), "--out", data, "--dataset", "34-1", "--seed", "3"});
    REQUIRE(pre.code == kExitOk);
    for (auto f : {"schema.json", "train.csv", "eval.csv"}) CHECK(fs::exists(fs::path(data) / f));
    CHECK(files_under(data) == 3);
    REQUIRE(run({"preprocess", log.string(), "--out", multi, "--scenario", "multiclass"}).code == kExitOk);

    // Training is deterministic under --seed.
    const auto m1 = (dir.path / "m1").string(), m2 = (dir.path / "m2").string();
    auto t1 = run({"train", "lightgbm", "--data", data, "--out", m1, "--seed", "5", "--config", R"({"n_estimators": 10})"});
    REQUIRE(t1.code == kExitOk);
    REQUIRE(run({"train", "lightgbm", "--data", data, "--out", m2, "--seed", "5", "--config", R"({"n_estimators": 10})"})
                .code == kExitOk);
    CHECK(slurp(fs::path(m1) / "model.json") == slurp(fs::path(m2) / "model.json"));
    CHECK(t1.out.find("macro_f1\t") != std::string::npos);

    auto cv = run({"crossval", "svm", "--data", data, "--folds", "3"});
    REQUIRE(cv.code == kExitOk);
    CHECK(cv.out.find("fold 2\t") != std::string::npos);
    CHECK(cv.out.find("mean_macro_f1\t") != std::string::npos);

    const auto grid_out = (dir.path / "grid").string();
    auto gs = run({"gridsearch", "svm", "--data", data, "--folds", "3", "--grid", R"([{"c": 0.01}, {"c": 0.1}])",
                   "--out", grid_out});
    REQUIRE(gs.code == kExitOk);
    CHECK(gs.out.find("best\t") != std::string::npos);
    CHECK(fs::exists(fs::path(grid_out) / "grid.csv"));

    auto ev = run({"evaluate", (fs::path(m1) / "model.json").string(), "--data", data, "--out",
                   (dir.path / "ev").string()});
    REQUIRE(ev.code == kExitOk);
    auto runs_csv = dir.path / "ev" / "runs.csv";
    CHECK(slurp(runs_csv).find("lightgbm,34-1,binary,eval") != std::string::npos);

    // The multi-class split does not fit a binary model.
    CHECK(run({"evaluate", (fs::path(m1) / "model.json").string(), "--data", multi}).code == kExitData);
    CHECK(run({"train", "iforest", "--data", multi, "--out", (dir.path / "x").string()}).code == kExitUsage);

    const auto drl_out = (dir.path / "drl").string();
    auto drl = run({"drl-train", "--data", data, "--out", drl_out, "--config", R"({"max_episodes": 30})"});
    REQUIRE(drl.code == kExitOk);
    CHECK(slurp(fs::path(drl_out) / "episodes.csv").rfind("episode,epsilon,mean_replay_loss\n", 0) == 0);
    CHECK(run({"evaluate", (fs::path(drl_out) / "model.json").string(), "--data", data}).code == kExitOk);

    auto cmp = run({"compare", "--runs", runs_csv.string()});
    REQUIRE(cmp.code == kExitOk);
    CHECK(cmp.out.find("99.76") != std::string::npos);

    const auto rep = (dir.path / "report").string();
    REQUIRE(run({"report", "--runs", runs_csv.string(), "--out", rep}).code == kExitOk);
    CHECK(files_under(rep) == 5);
    CHECK(run({"report", "--runs", (dir.path / "none.csv").string(), "--out", rep}).code == kExitData);
}

TEST_CASE("seed precedence") {
    testsupport::TempDir dir;
    auto log = write_log(dir.path, "c.log", {{"Benign", 60}, {"DDoS", 40}});
    auto prep = [&](const std::string& name, std::vector<std::string> extra) {
        std::vector<std::string> args{"preprocess", log.string(), "--out", (dir.path / name).string()};
        args.insert(args.end(), extra.begin(), extra.end());
        REQUIRE(run(args).code == kExitOk);
        return slurp(dir.path / name / "eval.csv");
    };
    const auto seed7 = prep("a", {"--seed", "7"});
    CHECK(seed7 != prep("b", {"--seed", "8"}));
    std::ofstream(dir.path / "rc.json") << R"({"seed": 7})";
    CHECK(prep("c", {"--run-config", (dir.path / "rc.json").string()}) == seed7);
    ::setenv("FLOWSENTRY_SEED", "7", 1);
    CHECK(prep("d", {}) == seed7);
    CHECK(prep("e", {"--seed", "8"}) != seed7);
    ::setenv("FLOWSENTRY_SEED", "x", 1);
    CHECK(run({"preprocess", log.string(), "--out", (dir.path / "f").string()}).code == kExitUsage);
    ::unsetenv("FLOWSENTRY_SEED");
}

TEST_CASE("carve writes the three 1-1 subsets") {
    testsupport::TempDir dir;
    auto log = write_log(dir.path, "c.log", {{"Benign", 10}, {"POAHPS", 10}, {"C&C", 1}});
    auto r = run({"carve", log.string(), "--out", (dir.path / "out").string()});
    // A tiny capture cannot supply the published subset sizes.
    CHECK(r.code == kExitData);
}

TEST_CASE("reproduce on a capture directory") {
    testsupport::TempDir dir;
    fs::create_directories(dir.path / "caps" / "42-1");
    write_log(dir.path / "caps" / "42-1", "conn.log.labeled", {{"Benign", 200}, {"FileDownload", 3}, {"C&C-FileDownload", 3}});
    std::ofstream(dir.path / "rc.json") << R"({"grid": {"svm": [{"c": 0.1}]}, "folds": 3})";
    auto r = run({"reproduce", "--captures", (dir.path / "caps").string(), "--out", (dir.path / "out").string(),
                  "--models", "svm", "--datasets", "42-1", "21-1", "--run-config", (dir.path / "rc.json").string()});
    REQUIRE(r.code == kExitOk);
    CHECK(r.err.find("skipping 21-1") != std::string::npos);
    auto runs = slurp(dir.path / "out" / "runs.csv");
    CHECK(runs.find("svm,42-1,binary,cv") != std::string::npos);
    CHECK(runs.find("svm,42-1,multiclass,eval") != std::string::npos);
    CHECK(run({"reproduce", "--out", (dir.path / "o2").string()}).code == kExitUsage);
}
