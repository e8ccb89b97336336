#include "perflab/csv.hpp"
#include "perflab/io.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace perflab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("perflab_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void put(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

struct Run {
  int code = -1;
  std::string out, err;
};

// Runs the CLI through the shell; `env` is prepended verbatim.
Run cli(const std::string& args, const fs::path& dir, const std::string& env = "") {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = env + " \"" + std::string(PERFLAB_CLI_PATH) + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text_file(out.string());
  r.err = read_text_file(err.string());
  return r;
}

std::size_t count_prefix(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += line.rfind(prefix, 0) == 0;
  return n;
}

std::string small_fig3b() {
  return json{{"template", "fig3b-random"}, {"n_train", 4000}, {"n_test", 4000}, {"replicates", 2}}.dump();
}

}  // namespace

TEST_CASE("load covariates") {
  const fs::path dir = scratch("load");
  SUBCASE("plain numeric table") {
    put(dir / "a.csv", "x1,x2\n1,2\n3,4\n");
    const CovariateTable t = load_covariates((dir / "a.csv").string());
    CHECK(t.rows() == 2);
    CHECK(t.values.cols() == 2);
    CHECK(t.values(1, 0) == 3.0);
    CHECK_FALSE(t.labels);
  }
  SUBCASE("label column is split off") {
    put(dir / "b.csv", "x1,y,x2\n1,10,2\n3,20,4\n5,30,6\n");
    const CovariateTable t = load_covariates((dir / "b.csv").string(), std::string("y"));
    CHECK(t.values.cols() == 2);
    CHECK(t.columns == std::vector<std::string>{"x1", "x2"});
    REQUIRE(t.labels);
    CHECK(t.labels->size() == 3);
    CHECK((*t.labels)[2] == 30.0);
    CHECK(t.values(2, 1) == 6.0);
  }
  SUBCASE("a NaN cell names its row and column") {
    put(dir / "c.csv", "x1,x2\n1,2\n3,nan\n");
    try {
      load_covariates((dir / "c.csv").string());
      FAIL("expected an error");
    } catch (const std::exception& e) {
      const std::string msg = e.what();
      CHECK(msg.find("row 2") != std::string::npos);
      CHECK(msg.find("x2") != std::string::npos);
    }
  }
  SUBCASE("missing label column and missing file are errors") {
    put(dir / "d.csv", "x1,x2\n1,2\n");
    CHECK_THROWS(load_covariates((dir / "d.csv").string(), std::string("y")));
    try {
      load_covariates((dir / "nowhere.csv").string());
      FAIL("expected an error");
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).find("nowhere.csv") != std::string::npos);
    }
  }
}

TEST_CASE("run configuration") {
  const fs::path dir = scratch("config");
  put(dir / "s.json", "{}");
  RunConfig c;
  c.spec_path = (dir / "s.json").string();
  CHECK_NOTHROW(c.validate());
  c.jobs = 0;
  CHECK_THROWS(c.validate());
  c.jobs = 2;
  c.spec_path = (dir / "absent.json").string();
  CHECK_THROWS(c.validate());

  ::unsetenv("PERFLAB_SEED");
  CHECK(resolve_master_seed(std::nullopt, 5) == 5);
  ::setenv("PERFLAB_SEED", "99", 1);
  CHECK(resolve_master_seed(std::nullopt, 5) == 99);
  CHECK(resolve_master_seed(std::uint64_t{3}, 5) == 3);
  ::unsetenv("PERFLAB_SEED");
}

TEST_CASE("numeric formatting round trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, 0.0})
    CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("cli experiment outputs are reproducible") {
  const fs::path dir = scratch("repro");
  put(dir / "fig3b.json", small_fig3b());
  const std::string spec = "--spec \"" + (dir / "fig3b.json").string() + "\"";
  const Run a = cli("experiment " + spec + " --seed 7 --out \"" + (dir / "a").string() + "\"", dir);
  const Run b = cli("experiment " + spec + " --seed 7 --out \"" + (dir / "b").string() + "\"", dir);
  const Run c = cli("experiment " + spec + " --seed 7 --jobs 4 --out \"" + (dir / "c").string() + "\"", dir);
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  REQUIRE(c.code == 0);
  CHECK(count_prefix(a.out, "cell ") == 10);
  for (const char* ext : {".csv", ".json"}) {
    const std::string name = std::string("fig3b-random__seed7") + ext;
    const std::string first = read_text_file((dir / "a" / name).string());
    CHECK_FALSE(first.empty());
    CHECK(first == read_text_file((dir / "b" / name).string()));
    CHECK(first == read_text_file((dir / "c" / name).string()));
  }
  const json doc = json::parse(read_text_file((dir / "a" / "fig3b-random__seed7.json").string()));
  CHECK(doc.at("master_seed").get<std::uint64_t>() == 7);
  CHECK(doc.at("spec").at("n_train").get<int>() == 4000);
  CHECK(doc.at("spec").contains("reference"));
}

TEST_CASE("cli seed falls back to the environment") {
  const fs::path dir = scratch("env");
  put(dir / "fig3b.json", small_fig3b());
  const Run r = cli("experiment --spec \"" + (dir / "fig3b.json").string() + "\" --out \"" + dir.string() + "\"", dir,
                    "PERFLAB_SEED=11");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "fig3b-random__seed11.csv"));
}

TEST_CASE("cli config errors exit with code 2") {
  const fs::path dir = scratch("errors");
  SUBCASE("missing spec file") {
    const std::string missing = (dir / "no_such_spec.json").string();
    const Run r = cli("experiment --spec \"" + missing + "\"", dir);
    CHECK(r.code == 2);
    CHECK(r.err.find(missing) != std::string::npos);
  }
  SUBCASE("unparseable JSON") {
    put(dir / "bad.json", "{\"template\": ");
    CHECK(cli("experiment --spec \"" + (dir / "bad.json").string() + "\"", dir).code == 2);
  }
  SUBCASE("bad field is reported by pointer") {
    put(dir / "field.json", json{{"template", "fig3b-random"}, {"alpha", "high"}}.dump());
    const Run r = cli("experiment --spec \"" + (dir / "field.json").string() + "\"", dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("/alpha") != std::string::npos);
  }
  SUBCASE("unknown command and bad jobs") {
    put(dir / "ok.json", small_fig3b());
    CHECK(cli("bogus --spec \"" + (dir / "ok.json").string() + "\"", dir).code == 2);
    CHECK(cli("experiment --jobs 0 --spec \"" + (dir / "ok.json").string() + "\"", dir).code == 2);
  }
}

TEST_CASE("cli generate, fit and audit") {
  const fs::path dir = scratch("pipeline");
  const json predictor = {{"kind", "polynomial"}, {"input_dim", 1}, {"degree", 2}, {"weights", {2.0, 1.0}}, {"intercept", 0.0}};
  const json mechanism = {{"base", {{"kind", "linear"}, {"beta", {1.0}}}}, {"performativity", {{"kind", "linear"}, {"alpha", 0.5}}}};
  put(dir / "gen.json", json{{"covariates", {{"dim", 1}}}, {"predictor", predictor}, {"mechanism", mechanism}, {"n", 500}}.dump());
  const Run g = cli("generate --spec \"" + (dir / "gen.json").string() + "\" --seed 4 --out \"" + dir.string() + "\"", dir);
  REQUIRE(g.code == 0);
  const fs::path data = dir / "generate__seed4.csv";
  REQUIRE(fs::exists(data));
  CHECK(fs::exists(dir / "generate__seed4.json"));

  put(dir / "fit.json", json{{"data", data.string()}}.dump());
  const Run f = cli("fit --spec \"" + (dir / "fit.json").string() + "\" --seed 4 --out \"" + dir.string() + "\"", dir);
  REQUIRE(f.code == 0);
  const json fit = json::parse(read_text_file((dir / "fit__seed4.json").string()));
  CHECK(fit.at("master_seed").get<std::uint64_t>() == 4);
  CHECK(fit.at("spec").at("data") == data.string());

  put(dir / "audit.json", json{{"covariates", {{"dim", 1}}}, {"train_predictor", predictor}, {"n", 500}}.dump());
  const Run a = cli("audit --spec \"" + (dir / "audit.json").string() + "\" --seed 4 --out \"" + dir.string() + "\"", dir);
  REQUIRE(a.code == 0);
  CHECK(a.out.find("overparameterized: pass") != std::string::npos);
  const json audit = json::parse(read_text_file((dir / "audit__seed4.json").string()));
  CHECK(audit.at("overparameterized").at("passed").get<bool>());
  CHECK_FALSE(audit.at("discrete").at("passed").get<bool>());
}

TEST_CASE("cli interference on clone groups") {
  const fs::path dir = scratch("interference");
  const json predictor = {{"kind", "polynomial"}, {"input_dim", 2}, {"degree", 2}, {"weights", {1.0, 0.0, 0.5, 0.0, 0.0}}, {"intercept", 0.0}};
  put(dir / "net.json", json{{"covariates", {{"dim", 2}}},
                             {"n", 300},
                             {"predictor", predictor},
                             {"network", {{"method", "clone-groups"}, {"group_size", 2}}},
                             {"g1", {{"beta", {1.0, 0.5}}}},
                             {"alpha", 1.0},
                             {"beta_spill", 0.5}}
                            .dump());
  const Run r = cli("interference --spec \"" + (dir / "net.json").string() + "\" --seed 2 --out \"" + dir.string() + "\"", dir);
  REQUIRE(r.code == 0);
  const json doc = json::parse(read_text_file((dir / "interference__seed2.json").string()));
  CHECK(doc.at("homophily_delta").get<double>() == 0.0);
  CHECK(std::abs(doc.at("comparison").at("coef_yhat_without_G").get<double>() - 1.5) < 1e-8);
}

TEST_CASE("cli fig3b at defaults writes fifteen rows") {
  const fs::path dir = scratch("defaults");
  put(dir / "fig3b.json", json{{"template", "fig3b-random"}}.dump());
  const Run r = cli("experiment --spec \"" + (dir / "fig3b.json").string() + "\" --seed 1 --jobs 4 --out \"" + dir.string() + "\"", dir);
  REQUIRE(r.code == 0);
  const std::string csv = read_text_file((dir / "fig3b-random__seed1.csv").string());
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == 16);
  CHECK(count_prefix(r.out, "cell ") == 50);
}
