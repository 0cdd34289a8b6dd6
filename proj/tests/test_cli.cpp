#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "vbid/manifest.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  std::string cmd = std::string(VBID_BINARY) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

const std::string kRoot = "/tmp/vbid_cli";

void write_config(const std::string& path, const std::string& extra) {
  std::ofstream out(path);
  out << "train_window_days = 56\n";
  out << "budget = 400\n";
  out << "beta = 0.9\n";
  out << "cheat_forecasts = 1\n";
  out << "n_samples = 10\n";
  out << "gbt_rounds = 10\n";
  out << "spread_epochs = 2\n";
  out << "spread_hidden = 4\n";
  out << "quantity_epochs = 2\n";
  out << "quantity_hidden = 4\n";
  out << extra;
}

}  // namespace

TEST_CASE("cli plumbing end to end") {
  fs::remove_all(kRoot);
  fs::create_directories(kRoot);
  std::string data = kRoot + "/data";

  SUBCASE("usage errors exit 1") {
    CHECK(run("--definitely-not-a-flag") == 1);
    CHECK(run("synth") == 1);  // missing required --out
    CHECK(run("") == 1);       // missing subcommand
  }

  SUBCASE("synth, ingest, backtest, report pipeline") {
    REQUIRE(run("--seed 7 synth --days 70 --nodes 3 --out " + data) == 0);
    CHECK(fs::exists(data + "/lmp.csv"));
    CHECK(fs::exists(data + "/features.csv"));
    CHECK(fs::exists(data + "/vbids.csv"));
    CHECK(fs::exists(data + "/manifest.txt"));

    // the manifest verifies against its recorded inputs
    vbid::RunManifest m = vbid::load_manifest(data + "/manifest.txt");
    CHECK(m.seed == 7);
    CHECK(vbid::verify_manifest(m));

    // ingest round-trips the generated file
    std::string ingested = kRoot + "/ingested";
    REQUIRE(run("ingest --lmp " + data + "/lmp.csv --ref-node n0 --out " +
                ingested) == 0);
    CHECK(slurp(ingested + "/lmp.csv") == slurp(data + "/lmp.csv"));
    vbid::RunManifest mi = vbid::load_manifest(ingested + "/manifest.txt");
    CHECK(verify_manifest(mi));

    // backtest with a short window; identical seeds, identical bytes
    std::string cfg = kRoot + "/bt.cfg";
    write_config(cfg, "");
    std::string out1 = kRoot + "/bt1", out2 = kRoot + "/bt2";
    std::string base = "--seed 11 --config " + cfg + " backtest --lmp " + data +
                       "/lmp.csv --features " + data + "/features.csv --vbids " +
                       data + "/vbids.csv --ref-node n0 --scenario no-ps --out ";
    REQUIRE(run(base + out1) == 0);
    REQUIRE(run(base + out2) == 0);
    CHECK(slurp(out1 + "/pnl.csv") == slurp(out2 + "/pnl.csv"));
    CHECK(slurp(out1 + "/metrics.txt") == slurp(out2 + "/metrics.txt"));

    CHECK(run("report --pnl " + out1 + "/pnl.csv") == 0);
  }

  SUBCASE("short dataset with a long window is a data error (exit 2)") {
    std::string tiny = kRoot + "/tiny";
    REQUIRE(run("--seed 3 synth --days 14 --nodes 2 --out " + tiny) == 0);
    std::string cfg = kRoot + "/long.cfg";
    write_config(cfg, "train_window_days = 365\n");
    CHECK(run("--config " + cfg + " backtest --lmp " + tiny +
              "/lmp.csv --features " + tiny + "/features.csv --vbids " + tiny +
              "/vbids.csv --ref-node n0 --out " + kRoot + "/nope") == 2);
  }

  SUBCASE("model training and sensitivity fitting commands") {
    std::string data2 = kRoot + "/data2";
    REQUIRE(run("--seed 5 synth --days 10 --nodes 2 --out " + data2) == 0);
    std::string cfg = kRoot + "/train.cfg";
    write_config(cfg, "");
    CHECK(run("--seed 5 --config " + cfg + " train-spread --lmp " + data2 +
              "/lmp.csv --features " + data2 + "/features.csv --ref-node n0" +
              " --out " + kRoot + "/spread.model") == 0);
    CHECK(fs::exists(kRoot + "/spread.model"));
    CHECK(run("--seed 5 --config " + cfg + " train-quantity --vbids " + data2 +
              "/vbids.csv --features " + data2 + "/features.csv --out " +
              kRoot + "/quantity.model") == 0);
    CHECK(run("--seed 5 --config " + cfg + " fit-sensitivity --lmp " + data2 +
              "/lmp.csv --features " + data2 + "/features.csv --vbids " +
              data2 + "/vbids.csv --ref-node n0 --out " + kRoot +
              "/pwl.csv") == 0);
    CHECK(fs::exists(kRoot + "/pwl.csv"));

    // optimize against the fitted sensitivity
    CHECK(run("--config " + cfg + " optimize --lmp " + data2 +
              "/lmp.csv --features " + data2 + "/features.csv --vbids " +
              data2 + "/vbids.csv --ref-node n0 --pwl " + kRoot +
              "/pwl.csv --date 2015-01-10 --budget 400 --mode full-ps --out " +
              kRoot + "/decisions.csv") == 0);
    std::string dec = slurp(kRoot + "/decisions.csv");
    CHECK(dec.rfind("hour,node_id,side,quantity_mwh\n", 0) == 0);

    CHECK(run("--config " + cfg + " optimize --lmp " + data2 +
              "/lmp.csv --features " + data2 + "/features.csv --vbids " +
              data2 + "/vbids.csv --ref-node n0 --date 2015-01-10 " +
              "--budget 400 --mode no-ps --out " + kRoot +
              "/decisions2.csv") == 0);
  }

  SUBCASE("missing input file is a data error") {
    CHECK(run("ingest --lmp /tmp/vbid_cli/does_not_exist.csv --ref-node R "
              "--out /tmp/vbid_cli/x") == 2);
  }
}
