#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code;
    std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
    const std::string out_file =
        (fs::temp_directory_path() / ("n1grid_cli_out_" + std::to_string(::getpid()) + ".txt"))
            .string();
    const std::string cmd =
        std::string(N1GRID_CLI_PATH) + " " + args + " > " + out_file + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult res;
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    res.output = testutil::read_file_bytes(out_file);
    fs::remove(out_file);
    return res;
}

std::string case14() { return testutil::data_dir() + "/case14.m"; }

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() /
                     ("n1grid_cli_" + std::to_string(::getpid()))) {
        fs::create_directories(path);
    }
    ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
};

}  // namespace

TEST_CASE("solve happy path") {
    const RunResult res = run_cli("solve --case " + case14());
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("converged") != std::string::npos);
}

TEST_CASE("solve writes a solution file") {
    TempDir dir;
    const std::string out = (dir.path / "sol.json").string();
    const RunResult res = run_cli("solve --case " + case14() + " --out " + out);
    CHECK(res.exit_code == 0);
    CHECK(fs::exists(out));
}

TEST_CASE("solve on a missing file names the path and exits 1") {
    const RunResult res = run_cli("solve --case /nonexistent/nowhere.m");
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("/nonexistent/nowhere.m") != std::string::npos);
}

TEST_CASE("cutting the bridge line exits 3") {
    const RunResult res = run_cli("solve --case " + case14() + " --cut 13");
    CHECK(res.exit_code == 3);
}

TEST_CASE("non-convergence exits 2") {
    const RunResult res = run_cli("solve --case " + case14() + " --max-iter 1 --tol 1e-13");
    CHECK(res.exit_code == 2);
}

TEST_CASE("generate validates p") {
    TempDir dir;
    const RunResult res = run_cli("generate --case " + case14() + " --n 1 --p 1.5 --out " +
                                  (dir.path / "x.jsonl").string());
    CHECK(res.exit_code == 1);
}

TEST_CASE("generate is reproducible byte for byte, including --jobs") {
    TempDir dir;
    const std::string a = (dir.path / "a.jsonl").string();
    const std::string b = (dir.path / "b.jsonl").string();
    const std::string base =
        "generate --case " + case14() + " --n 30 --p 0.5 --seed 7 --sigma 0.1 --out ";
    CHECK(run_cli(base + a).exit_code == 0);
    CHECK(run_cli(base + b + " --jobs 4").exit_code == 0);
    CHECK(testutil::read_file_bytes(a) == testutil::read_file_bytes(b));
}

TEST_CASE("end-to-end train, evaluate, analyze") {
    TempDir dir;
    const std::string train_data = (dir.path / "train.jsonl").string();
    const std::string n_data = (dir.path / "n.jsonl").string();
    const std::string n1_data = (dir.path / "n1.jsonl").string();
    const std::string ckpt = (dir.path / "model.ckpt").string();

    REQUIRE(run_cli("generate --case " + case14() + " --n 80 --p 0 --seed 1 --out " + train_data)
                .exit_code == 0);
    REQUIRE(run_cli("generate --case " + case14() + " --n 20 --p 0 --seed 2 --out " + n_data)
                .exit_code == 0);
    REQUIRE(run_cli("generate --case " + case14() + " --n 20 --p 1 --seed 3 --out " + n1_data)
                .exit_code == 0);

    const std::string train_cmd = "train --data " + train_data +
                                  " --variant small --epochs 3 --seed 4 --out " + ckpt;
    const RunResult trained = run_cli(train_cmd);
    CHECK(trained.exit_code == 0);
    CHECK(fs::exists(ckpt));
    CHECK(trained.output.find("epoch 3/3") != std::string::npos);

    SUBCASE("training is reproducible") {
        const std::string ckpt2 = (dir.path / "model2.ckpt").string();
        REQUIRE(run_cli("train --data " + train_data +
                        " --variant small --epochs 3 --seed 4 --out " + ckpt2)
                    .exit_code == 0);
        CHECK(testutil::read_file_bytes(ckpt) == testutil::read_file_bytes(ckpt2));
    }

    SUBCASE("evaluate prints a finite mse") {
        const RunResult res = run_cli("evaluate --ckpt " + ckpt + " --data " + n_data);
        CHECK(res.exit_code == 0);
        CHECK(res.output.find("mse =") != std::string::npos);

        const RunResult res2 = run_cli("evaluate --ckpt " + ckpt + " --data " + n_data);
        CHECK(res2.output == res.output);  // rerun determinism
    }

    SUBCASE("evaluate rejects a mismatched dataset") {
        const std::string other = (dir.path / "other.jsonl").string();
        REQUIRE(run_cli("generate --case " + testutil::data_dir() +
                        "/case118.m --n 2 --p 0 --seed 5 --out " + other)
                    .exit_code == 0);
        const RunResult res = run_cli("evaluate --ckpt " + ckpt + " --data " + other);
        CHECK(res.exit_code == 1);
        CHECK(res.output.find("dimension") != std::string::npos);
    }

    SUBCASE("analyze emits the three tables") {
        const std::string out_dir = (dir.path / "report").string();
        const RunResult res = run_cli("analyze --case " + case14() + " --model small=" + ckpt +
                                      " --n-data " + n_data + " --n1-data " + n1_data +
                                      " --mix 0.1=" + ckpt + " --out " + out_dir);
        CHECK(res.exit_code == 0);
        CHECK(res.output.find("gap ratio") != std::string::npos);
        CHECK(fs::exists(fs::path(out_dir) / "table1.csv"));
        CHECK(fs::exists(fs::path(out_dir) / "table2.csv"));
        CHECK(fs::exists(fs::path(out_dir) / "table3.csv"));
    }

    SUBCASE("analyze lists missing inputs") {
        const RunResult res = run_cli("analyze --case " + case14() +
                                      " --model small=/missing.ckpt --n-data " + n_data +
                                      " --n1-data /missing.jsonl --out " + dir.path.string());
        CHECK(res.exit_code == 1);
        CHECK(res.output.find("/missing.ckpt") != std::string::npos);
        CHECK(res.output.find("/missing.jsonl") != std::string::npos);
    }
}

TEST_CASE("usage errors exit 1") {
    CHECK(run_cli("frobnicate").exit_code == 1);
    CHECK(run_cli("solve").exit_code == 1);  // --case is required
    CHECK(run_cli("--help").exit_code == 0);
}
