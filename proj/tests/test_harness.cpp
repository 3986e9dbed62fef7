#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fracinv/harness.hpp"

using namespace fracinv;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "fracinv_harness_test";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("table csv round trip is exact") {
  std::vector<ExperimentRow> rows = {{0.25, 1e-3, 2e-13, 1, 0.1 + 0.2, 1.0 / 3.0, std::nextafter(1.0, 2.0), 100},
                                     {0.75, 5e-2, 5e-10, 18446744073709551615ull, 4.9e-324, 1e300, 0, 0}};
  const auto path = temp_path("table.csv");
  write_table_csv(path, rows);
  const auto back = read_table_csv(path);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].alpha == rows[i].alpha);
    CHECK(back[i].epsilon == rows[i].epsilon);
    CHECK(back[i].gamma == rows[i].gamma);
    CHECK(back[i].seed == rows[i].seed);
    CHECK(back[i].e_q == rows[i].e_q);
    CHECK(back[i].e_u == rows[i].e_u);
    CHECK(back[i].delta == rows[i].delta);
    CHECK(back[i].iterations == rows[i].iterations);
  }
  const std::string text = slurp(path);
  CHECK(text.rfind("alpha,epsilon,gamma,seed,e_q,e_u,delta,iterations\r\n", 0) == 0);
  CHECK(text.find("0.30000000000000004") != std::string::npos);
}

TEST_CASE("empty tables and bad headers") {
  const auto path = temp_path("empty.csv");
  write_table_csv(path, {});
  CHECK(read_table_csv(path).empty());
  CHECK(slurp(path) == "alpha,epsilon,gamma,seed,e_q,e_u,delta,iterations\r\n");
  {
    std::ofstream os(path);
    os << "alpha,eps\n1,2\n";
  }
  CHECK_THROWS_AS(read_table_csv(path), std::invalid_argument);
  CHECK_THROWS_AS(read_table_csv(temp_path("missing.csv")), std::invalid_argument);
}

TEST_CASE("csv quoting") {
  const auto path = temp_path("quoted.csv");
  write_csv(path, {"a", "b"}, {{"x,y", "say \"hi\""}});
  CHECK(slurp(path) == "a,b\r\n\"x,y\",\"say \"\"hi\"\"\"\r\n");
  CHECK_THROWS_AS(write_csv(path, {"a"}, {{"1", "2"}}), std::invalid_argument);
}

TEST_CASE("real formatting keeps 17 significant digits") {
  CHECK(format_real(0.1) == "0.10000000000000001");
  CHECK(format_real(2e-13) == "2.0000000000000001e-13");
  CHECK(std::stod(format_real(M_PI)) == M_PI);
}

TEST_CASE("gamma settings") {
  const Preset p = example1();
  CHECK(GammaSetting::parse("table").resolve(p, 1e-2) == 2e-11);
  CHECK(GammaSetting::parse("1e-9").resolve(p, 1e-2) == 1e-9);
  CHECK(GammaSetting::parse("delta-squared").resolve(p, 1e-2) == doctest::Approx(2e-7 * 1e-4));
  CHECK(GammaSetting::parse("delta-squared:3").resolve(p, 1e-2) == doctest::Approx(3e-4));
  CHECK(GammaSetting::parse("table").resolve(p, 2e-2) == doctest::Approx(2e-7 * 4e-4));
  for (const char* bad : {"", "abc", "-1", "1e-9x", "delta-squared:", "delta-squared:-2", "delta-squaredX", "nan"})
    CHECK_THROWS_AS(GammaSetting::parse(bad), std::invalid_argument);
  CHECK(GammaSetting::parse("delta-squared:3").describe() == "delta-squared:3");
}

TEST_CASE("config parsing") {
  using nlohmann::json;
  const auto cfg = RunConfig::from_json(json::parse(R"({"preset":"example2","alpha":0.5,"epsilon":[0.01,0.05],
      "gamma":"delta-squared","seeds":[3],"M":12,"N":50,"max_iters":7,"metric":{"time_length":2}})"));
  CHECK(cfg.preset == "example2");
  CHECK(cfg.alphas == std::vector<double>{0.5});
  CHECK(cfg.epsilons.size() == 2);
  CHECK(cfg.gamma.kind == GammaSetting::Kind::DeltaSquared);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{3});
  CHECK(*cfg.M == 12);
  CHECK(cfg.max_iters == 7);
  CHECK(cfg.metric.time_length == 2);
  const Preset p = cfg.resolved_preset();
  CHECK(p.grid_rule(0.01).M == 12);
  CHECK(p.grid_rule(0.01).N == 50);
  CHECK(p.max_iters == 7);
  CHECK_NOTHROW(cfg.validate());

  const auto again = RunConfig::from_json(cfg.to_json());
  CHECK(again.to_json() == cfg.to_json());

  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"alpah":0.5})")), std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"alpha":"half"})")), std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"metric":{"length":1}})")), std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse("[1,2]")), std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::from_file(temp_path("nope.json").string()), std::invalid_argument);

  RunConfig bad;
  bad.alphas = {1.5};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  RunConfig odd;
  odd.M = 7;  // 960 is not a multiple of 7
  CHECK_THROWS_AS(odd.validate(), std::invalid_argument);
  RunConfig unknown;
  unknown.preset = "example9";
  CHECK_THROWS_AS(unknown.validate(), std::invalid_argument);
  CHECK_THROWS_AS(preset_by_name("example9"), std::invalid_argument);
}

TEST_CASE("medians and rates") {
  std::vector<ExperimentRow> rows;
  for (double eps : {1e-1, 1e-2, 1e-3})
    for (std::uint64_t seed : {1, 2, 3}) {
      const double jitter = seed == 1 ? 1.0 : seed == 2 ? 10.0 : 0.1;  // the median picks the unjittered seed
      rows.push_back({0.5, eps, 0, seed, 2 * std::pow(eps, 0.4) * jitter, std::pow(eps, 0.9) / jitter, eps, 10});
    }
  const auto med = median_rows(rows);
  REQUIRE(med.size() == 3);
  CHECK(med[0].epsilon == 1e-1);
  CHECK(med[1].e_q == doctest::Approx(2 * std::pow(1e-2, 0.4)));
  const auto rates = compute_rates(rows);
  REQUIRE(rates.size() == 2);
  CHECK(rates[0].quantity == "e_q");
  CHECK(rates[0].rate == doctest::Approx(0.4).epsilon(1e-10));
  CHECK(rates[1].quantity == "e_u");
  CHECK(rates[1].rate == doctest::Approx(0.9).epsilon(1e-10));
  CHECK(rates[1].levels == 3);
}

TEST_CASE("presets") {
  for (const auto& name : preset_names()) CHECK(preset_by_name(name).name == name);
  const Preset e2 = example2();
  CHECK(e2.gamma_for(1e-2) == 4e-11);
  CHECK(e2.q_true(Point<double>(0.25, 0), 0.05) == doctest::Approx(2 + 0.25 * 0.95));
  CHECK(example3().dim == 2);
  const int M = snap_mesh_size(1e-2, 960);
  CHECK(960 % M == 0);
}

TEST_CASE("an epsilon subset keeps the tabulated gamma of each level") {
  RunConfig cfg;
  cfg.preset = "example1";
  cfg.epsilons = {1e-3, 5e-2, 7e-3};
  const Preset p = cfg.resolved_preset();
  CHECK(cfg.gamma.resolve(p, 1e-3) == 2e-13);
  CHECK(cfg.gamma.resolve(p, 5e-2) == 5e-10);
  CHECK(cfg.gamma.resolve(p, 7e-3) == doctest::Approx(2e-7 * 49e-6));
}

TEST_CASE("metadata is deterministic") {
  RunConfig cfg;
  const auto a = temp_path("meta_a.json"), b = temp_path("meta_b.json");
  write_metadata(a, cfg, {{"k", 1}});
  write_metadata(b, cfg, {{"k", 1}});
  CHECK(slurp(a) == slurp(b));
  const auto j = nlohmann::json::parse(slurp(a));
  CHECK(j.contains("version"));
  CHECK(j["rng"] == GaussianStream::kName);
}
