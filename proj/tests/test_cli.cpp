#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "json.hpp"

// The binary under test; injected by the build so the suite drives the real
// executable exactly as a user would.
#ifndef RCGAN_CLI_PATH
#error "RCGAN_CLI_PATH must point at the command-line binary"
#endif

namespace {

const std::string kDir = "/tmp/rcgan_cli_test";

// Fresh scratch directory, created once per test-binary run.
const std::string& test_dir() {
  static const std::string dir = [] {
    std::filesystem::remove_all(kDir);
    std::filesystem::create_directories(kDir);
    return kDir;
  }();
  return dir;
}

std::string path_in(const std::string& name) { return test_dir() + "/" + name; }

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  nlohmann::json j;
  in >> j;
  return j;
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs the CLI with the given arguments, capturing exit code and streams.
// `env_prefix` lets a case set environment variables for one invocation.
CliResult run_cli(const std::string& args, const std::string& env_prefix = "") {
  const std::string out_path = path_in("stdout.txt");
  const std::string err_path = path_in("stderr.txt");
  std::string cmd = env_prefix + std::string(RCGAN_CLI_PATH) + " " + args +
                    " >" + out_path + " 2>" + err_path;
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

// Small-but-real training flags shared by the pipeline cases.
const std::string kTinyTrain =
    "--epochs 2 --batch 32 --gen-hidden 8 --disc-hidden 8 --feature-dim 4";

}  // namespace

TEST_CASE("help lists every subcommand") {
  const auto r = run_cli("--help");
  CHECK(r.exit_code == 0);
  for (const char* sub :
       {"verify-bounds", "gen-data", "corrupt", "train", "eval", "sweep"})
    CHECK(contains(r.out, sub));
  CHECK(run_cli("no-such-command").exit_code == 1);
  CHECK(run_cli("").exit_code == 1);
}

TEST_CASE("verify-bounds passes on random instances and reports worst slack") {
  const std::string report = path_in("report.json");
  const auto r = run_cli("verify-bounds --trials 40 --seed 7 --out " + report);
  CHECK(r.exit_code == 0);
  CHECK(contains(r.out, "worst slack"));
  const auto j = load_json(report);
  CHECK(j.at("all_passed") == true);
  CHECK(j.at("trials") == 40);
  CHECK(j.at("reports").size() == 40 * 9);
  CHECK(j.at("worst_slack").get<double>() >= -1e-12);
  const auto m = load_json(report + ".manifest.json");
  CHECK(m.at("command") == "verify-bounds");
  CHECK(m.at("seed") == 7);
}

TEST_CASE("verify-bounds degenerates to factor one on identity channels") {
  const std::string report = path_in("identity.json");
  const auto r =
      run_cli("verify-bounds --trials 1 --seed 3 --identity --out " + report);
  CHECK(r.exit_code == 0);
  for (const auto& rep : load_json(report).at("reports"))
    CHECK(rep.at("kappa") == 1.0);
}

TEST_CASE("a scaled-down conditioning factor is caught as a violation") {
  const std::string report = path_in("fault.json");
  const auto r = run_cli("verify-bounds --trials 20 --seed 7 --kappa-scale 0.5 --out " +
                         report);
  CHECK(r.exit_code == 2);
  CHECK(contains(r.err, "bound violated: trial"));
  CHECK(load_json(report).at("all_passed") == false);
}

TEST_CASE("the generate-corrupt-train-eval pipeline runs end to end") {
  const std::string data = path_in("data.csv");
  const std::string corr = path_in("corr.csv");
  const std::string ckpt = path_in("ckpt.json");
  const std::string metrics = path_in("metrics.json");

  CHECK(run_cli("gen-data --out " + data + " --n 400 --classes 4 --seed 11")
            .exit_code == 0);
  CHECK(std::filesystem::exists(data + ".mixture.json"));
  CHECK(std::filesystem::exists(data + ".manifest.json"));

  CHECK(run_cli("corrupt --in " + data + " --out " + corr +
                " --classes 4 --alpha 0.5 --seed 12")
            .exit_code == 0);
  CHECK(std::filesystem::exists(corr + ".channel.json"));

  CHECK(run_cli("train --data " + corr + " --channel " + corr +
                ".channel.json " + kTinyTrain + " --seed 13 --checkpoint-out " +
                ckpt)
            .exit_code == 0);
  CHECK(std::filesystem::exists(ckpt + ".history.csv"));

  const auto r = run_cli("eval --checkpoint " + ckpt + " --mixture " + data +
                         ".mixture.json --n 300 --recovery-n 10 --steps 10 "
                         "--seed 14 --out " +
                         metrics);
  CHECK(r.exit_code == 0);
  const auto j = load_json(metrics);
  REQUIRE(j.at("results").size() == 2);
  for (const auto& row : j.at("results")) {
    const double v = row.at("value").get<double>();
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(j.at("results").at(0).at("metric") == "generated_label_accuracy");
  CHECK(j.at("results").at(1).at("metric") == "label_recovery_accuracy");
}

TEST_CASE("zero epochs checkpoints the initial parameters") {
  const std::string corr = path_in("corr.csv");
  const std::string ckpt = path_in("init.json");
  const auto r = run_cli("train --data " + corr + " --channel " + corr +
                         ".channel.json --epochs 0 --checkpoint-out " + ckpt);
  CHECK(r.exit_code == 0);
  CHECK(slurp(ckpt + ".history.csv") == "epoch,loss_d,loss_g\n");
  const auto j = load_json(ckpt);
  CHECK(j.contains("generator"));
  CHECK(j.contains("discriminator"));
}

TEST_CASE("evaluating a missing checkpoint is an I/O error") {
  const auto r = run_cli("eval --checkpoint " + path_in("nope.json") +
                         " --mixture " + path_in("data.csv.mixture.json"));
  CHECK(r.exit_code == 1);
  CHECK(contains(r.err, "cannot open"));
  CHECK(contains(r.err, "nope.json"));
}

TEST_CASE("corrupting a missing dataset is an I/O error") {
  const auto r = run_cli("corrupt --in " + path_in("missing.csv") + " --out " +
                         path_in("x.csv"));
  CHECK(r.exit_code == 1);
}

TEST_CASE("repeated runs produce byte-identical artifacts") {
  for (const char* tag : {"A", "B"}) {
    const std::string t = tag;
    CHECK(run_cli("gen-data --out " + path_in("d" + t + ".csv") +
                  " --n 120 --classes 4 --seed 77")
              .exit_code == 0);
    CHECK(run_cli("corrupt --in " + path_in("d" + t + ".csv") + " --out " +
                  path_in("c" + t + ".csv") + " --classes 4 --seed 78")
              .exit_code == 0);
    CHECK(run_cli("train --data " + path_in("c" + t + ".csv") + " --channel " +
                  path_in("c" + t + ".csv.channel.json") + " " + kTinyTrain +
                  " --seed 79 --checkpoint-out " + path_in("k" + t + ".json"))
              .exit_code == 0);
    CHECK(run_cli("eval --checkpoint " + path_in("k" + t + ".json") +
                  " --mixture " + path_in("d" + t + ".csv.mixture.json") +
                  " --n 200 --recovery-n 8 --steps 8 --seed 80 --out " +
                  path_in("m" + t + ".json"))
              .exit_code == 0);
  }
  CHECK(slurp(path_in("dA.csv")) == slurp(path_in("dB.csv")));
  CHECK(slurp(path_in("cA.csv")) == slurp(path_in("cB.csv")));
  CHECK(slurp(path_in("kA.json")) == slurp(path_in("kB.json")));
  CHECK(slurp(path_in("kA.json.history.csv")) ==
        slurp(path_in("kB.json.history.csv")));
  CHECK(slurp(path_in("mA.json")) == slurp(path_in("mB.json")));
}

TEST_CASE("flags override the config file, which overrides defaults") {
  std::ofstream(path_in("cfg.json"))
      << R"({"epochs": 1, "lambda": 0.5, "seed": 99})";
  const std::string ckpt = path_in("prec.json");
  const auto r = run_cli("train --data " + path_in("corr.csv") +
                         " --channel " + path_in("corr.csv.channel.json") +
                         " --config " + path_in("cfg.json") +
                         " --lambda 0.25 --checkpoint-out " + ckpt);
  CHECK(r.exit_code == 0);
  const auto m = load_json(ckpt + ".manifest.json");
  CHECK(m.at("config").at("lambda") == 0.25);
  CHECK(m.at("config").at("epochs") == 1);
  CHECK(m.at("seed") == 99);
  // Untouched keys keep their defaults in the resolved config.
  CHECK(m.at("config").at("batch") == 64);
}

TEST_CASE("config schema violations name the offending key") {
  std::ofstream(path_in("bad1.json")) << R"({"lambda": "high"})";
  auto r = run_cli("train --data " + path_in("corr.csv") + " --channel " +
                   path_in("corr.csv.channel.json") + " --config " +
                   path_in("bad1.json"));
  CHECK(r.exit_code == 1);
  CHECK(contains(r.err, "/lambda"));
  CHECK(contains(r.err, "expected number"));

  std::ofstream(path_in("bad2.json")) << R"({"lambdada": 1})";
  r = run_cli("train --data " + path_in("corr.csv") + " --channel " +
              path_in("corr.csv.channel.json") + " --config " +
              path_in("bad2.json"));
  CHECK(r.exit_code == 1);
  CHECK(contains(r.err, "/lambdada"));
  CHECK(contains(r.err, "unknown key"));

  std::ofstream(path_in("bad3.json")) << R"({"gen_hidden": [8, "x"]})";
  r = run_cli("train --data " + path_in("corr.csv") + " --channel " +
              path_in("corr.csv.channel.json") + " --config " +
              path_in("bad3.json"));
  CHECK(r.exit_code == 1);
  CHECK(contains(r.err, "/gen_hidden/1"));
}

TEST_CASE("the seed environment variable fills in only as a fallback") {
  const std::string flag_run = path_in("envf.csv");
  const std::string env_run = path_in("enve.csv");
  CHECK(run_cli("gen-data --out " + flag_run + " --n 50 --classes 4 --seed 123")
            .exit_code == 0);
  CHECK(run_cli("gen-data --out " + env_run + " --n 50 --classes 4",
                "RCGAN_SEED=123 ")
            .exit_code == 0);
  CHECK(slurp(flag_run) == slurp(env_run));
  CHECK(load_json(env_run + ".manifest.json").at("seed") == 123);

  const std::string beats = path_in("envb.csv");
  CHECK(run_cli("gen-data --out " + beats + " --n 50 --classes 4 --seed 5",
                "RCGAN_SEED=123 ")
            .exit_code == 0);
  CHECK(load_json(beats + ".manifest.json").at("seed") == 5);

  const auto r = run_cli("gen-data --out " + path_in("envx.csv") + " --n 50",
                         "RCGAN_SEED=xyz ");
  CHECK(r.exit_code == 1);
  CHECK(contains(r.err, "RCGAN_SEED"));
}

TEST_CASE("sweep writes one row per labeled fraction in input order") {
  const std::string empty = path_in("empty.csv");
  CHECK(run_cli("sweep --out " + empty).exit_code == 0);
  CHECK(slurp(empty) == "alpha,gen_label_acc,label_recovery_acc,seed\n");

  const std::string sw = path_in("sweep.csv");
  const auto r = run_cli(
      "sweep --alphas 1.0,0.5 --out " + sw +
      " --n 160 --classes 4 --epochs 2 --batch 32 --gen-hidden 8 "
      "--disc-hidden 8 --feature-dim 4 --gen-n 200 --recovery-n 8 --steps 8 "
      "--seed 30");
  CHECK(r.exit_code == 0);
  std::istringstream rows(slurp(sw));
  std::string line;
  std::getline(rows, line);
  CHECK(line == "alpha,gen_label_acc,label_recovery_acc,seed");
  std::getline(rows, line);
  CHECK(line.substr(0, 2) == "1,");
  CHECK(line.substr(line.rfind(',')) == ",30");
  std::getline(rows, line);
  CHECK(line.substr(0, 4) == "0.5,");
  CHECK(line.substr(line.rfind(',')) == ",31");

  CHECK(run_cli("sweep --alphas 0.5,1.5 --out " + path_in("badsweep.csv"))
            .exit_code == 1);
  CHECK(run_cli("sweep --alphas 0 --out " + path_in("badsweep.csv"))
            .exit_code == 1);
}
