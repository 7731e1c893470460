#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cli.hpp"
#include "rocerf/io.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "rocerf");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome o;
  o.code = rocerf::cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
}

// Raw toy table: two numeric columns, one categorical, a yes/no label.
fs::path make_raw(const fs::path& dir) {
  rocerf::Rng rng(3);
  std::ostringstream csv;
  csv << "income,debt,region,approved\n";
  for (int i = 0; i < 200; ++i) {
    const bool yes = i % 2 == 0;
    const double income = (yes ? 1.5 : -1.5) + rng.normal();
    const double debt = rng.normal();
    csv << income << ',' << debt << ',' << (i % 3 == 0 ? "north" : "south") << ',' << (yes ? "yes" : "no") << '\n';
  }
  write_text(dir / "raw.csv", csv.str());
  write_text(dir / "raw.schema",
             "column.income = numeric\ncolumn.debt = numeric\ncolumn.region = categorical\n"
             "column.approved = label\npositive_label = yes\n");
  return dir;
}

// Runs preprocess and train into dir/prep and dir/model.
void prepare(const fs::path& dir) {
  make_raw(dir);
  REQUIRE(run({"preprocess", "--data", (dir / "raw.csv").string(), "--schema", (dir / "raw.schema").string(), "-o",
               (dir / "prep").string()})
              .code == 0);
  REQUIRE(run({"train", "--train", (dir / "prep/train.csv").string(), "--test", (dir / "prep/test.csv").string(), "-o",
               (dir / "model").string()})
              .code == 0);
}

std::string drop_method_column(const std::string& csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    out << line.substr(0, a) << line.substr(b) << '\n';
  }
  return out.str();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help exits cleanly") {
    const Outcome o = run({"--help"});
    CHECK(o.code == 0);
    CHECK(o.out.find("explain") != std::string::npos);
  }

  TEST_CASE("a missing schema is a configuration error naming the path") {
    const fs::path dir = testing::temp_dir("cli_missing");
    make_raw(dir);
    const Outcome o = run({"preprocess", "--data", (dir / "raw.csv").string(), "--schema", "/nope/absent.schema", "-o",
                           dir.string()});
    CHECK(o.code == 1);
    CHECK(o.err.find("/nope/absent.schema") != std::string::npos);
    const json e = json::parse(rocerf::read_file(dir / "error.json"));
    CHECK(e["kind"] == "MissingFile");
    CHECK(e["exit_code"] == 1);
  }

  TEST_CASE("unknown subcommand options and config keys are rejected") {
    CHECK(run({"train", "--bogus"}).code == 1);
    const fs::path dir = testing::temp_dir("cli_badcfg");
    write_text(dir / "bad.ini", "not_an_option = 3\n");
    CHECK(run({"--config", (dir / "bad.ini").string(), "verify"}).code == 1);
  }

  TEST_CASE("preprocess, train and explain end to end") {
    const fs::path dir = testing::temp_dir("cli_pipeline");
    prepare(dir);
    for (const char* f : {"prep/train.csv", "prep/val.csv", "prep/test.csv", "prep/preprocessor.json",
                          "prep/provenance.json", "model/model.json", "model/influence.bin", "model/metrics.json"}) {
      CHECK_MESSAGE(fs::exists(dir / f), f);
    }
    const json metrics = json::parse(rocerf::read_file(dir / "model/metrics.json"));
    CHECK(metrics["test_accuracy"].get<double>() > 0.7);

    const std::string model = (dir / "model/model.json").string();
    const std::string test = (dir / "prep/test.csv").string();
    const std::string cache = (dir / "model/influence.bin").string();
    REQUIRE(run({"explain", "--model", model, "--data", test, "--method", "scfe", "-o", (dir / "scfe").string()}).code == 0);
    REQUIRE(run({"explain", "--model", model, "--data", test, "--cache", cache, "--method", "rocerf", "--k", "0", "-o",
                 (dir / "k0").string()})
                .code == 0);
    const std::string a = rocerf::read_file(dir / "scfe/cfes.csv");
    const std::string b = rocerf::read_file(dir / "k0/cfes.csv");
    CHECK(a.find(",scfe,") != std::string::npos);
    CHECK(drop_method_column(a) == drop_method_column(b));

    REQUIRE(run({"explain", "--model", model, "--data", test, "--cache", cache, "--k", "3", "-o", (dir / "k3").string()})
                .code == 0);
    const json side = json::parse(rocerf::read_file(dir / "k3/cfes.json"));
    CHECK(side["recourse"]["k"] == 3);
    CHECK(!side["results"].empty());
    // The always-one column is held fixed.
    const auto& r0 = side["results"][0];
    CHECK(r0["x_cf"].back() == r0["x0"].back());
  }

  TEST_CASE("evaluate writes one row per method and alpha") {
    const fs::path dir = testing::temp_dir("cli_eval");
    prepare(dir);
    const Outcome o = run({"evaluate", "--model", (dir / "model/model.json").string(), "--train",
                           (dir / "prep/train.csv").string(), "--test", (dir / "prep/test.csv").string(), "--cache",
                           (dir / "model/influence.bin").string(), "--M", "3", "--seed", "2", "-o", (dir / "eval").string()});
    REQUIRE(o.code == 0);
    const std::string csv = rocerf::read_file(dir / "eval/report.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
    const json rep = json::parse(rocerf::read_file(dir / "eval/report.json"));
    CHECK(rep["rows"].size() == 10);
    CHECK(rep["provenance"]["seed"] == 2);
    const json prov = json::parse(rocerf::read_file(dir / "eval/provenance.json"));
    CHECK(prov["command"] == "evaluate");
  }

  TEST_CASE("a corrupted cache is a data error") {
    const fs::path dir = testing::temp_dir("cli_corrupt");
    prepare(dir);
    std::string bytes = rocerf::read_file(dir / "model/influence.bin");
    bytes[60] ^= 0x10;
    write_text(dir / "bad.bin", bytes);
    const Outcome o = run({"explain", "--model", (dir / "model/model.json").string(), "--data",
                           (dir / "prep/test.csv").string(), "--cache", (dir / "bad.bin").string(), "-o",
                           (dir / "x").string()});
    CHECK(o.code == 2);
    CHECK(json::parse(rocerf::read_file(dir / "x/error.json"))["kind"] == "CorruptFile");
    CHECK(run({"verify", "--cache", (dir / "bad.bin").string(), "-o", (dir / "v").string()}).code == 2);
  }

  TEST_CASE("verify passes and rejects an oversized k") {
    const fs::path dir = testing::temp_dir("cli_verify");
    const Outcome ok = run({"verify", "-o", dir.string()});
    CHECK(ok.code == 0);
    CHECK(ok.out.find("FAIL") == std::string::npos);
    CHECK(std::count(ok.out.begin(), ok.out.end(), '\n') == 5);
    CHECK(run({"verify", "--k", "41", "-o", dir.string()}).code == 1);
  }

  TEST_CASE("config file values apply and flags override them") {
    const fs::path dir = testing::temp_dir("cli_config");
    make_raw(dir);
    write_text(dir / "run.ini", "seed = 5\n");
    const std::vector<std::string> base{"preprocess", "--data", (dir / "raw.csv").string(), "--schema",
                                        (dir / "raw.schema").string()};
    auto with = [&](std::vector<std::string> extra, const std::string& out) {
      std::vector<std::string> args{"--config", (dir / "run.ini").string()};
      args.insert(args.end(), extra.begin(), extra.end());
      args.insert(args.end(), base.begin(), base.end());
      args.insert(args.end(), {"-o", (dir / out).string()});
      return run(args);
    };
    REQUIRE(with({}, "a").code == 0);
    CHECK(json::parse(rocerf::read_file(dir / "a/provenance.json"))["seed"] == 5);
    REQUIRE(with({"--seed", "7"}, "b").code == 0);
    CHECK(json::parse(rocerf::read_file(dir / "b/provenance.json"))["seed"] == 7);
    CHECK(rocerf::read_file(dir / "a/train.csv") != rocerf::read_file(dir / "b/train.csv"));
  }
}
