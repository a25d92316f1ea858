// SPDX-License-Identifier: Apache-2.0
#include <fstream>

#include "doctest.h"
#include "memdecode/config.hpp"
#include "tmpdir.hpp"

using namespace memdecode;

TEST_CASE("defaults") {
  const RunConfig cfg;
  const auto e = cfg.eval();
  CHECK(e.segment.window == 100);
  CHECK(e.segment.stride == 10);
  CHECK(e.knn_k == 25);
  CHECK(e.train.temperature == 0.1);
  CHECK(e.train.epochs == 8);
  CHECK(e.train.steps_per_epoch == 500);
  CHECK(e.train.per_concept == 8);
  CHECK(e.preprocess.clip_lo == 0.005);
  CHECK(e.preprocess.clip_hi == 0.995);
  CHECK(e.preprocess.trim_seconds == 4.0);
  CHECK(e.test_size == 25);
  CHECK(e.n_trials == 25);
  CHECK(e.min_band_trials == 20);
  CHECK(e.backend == Backend::encoder_knn);
  CHECK_FALSE(e.knn_normalize);
  CHECK(e.preprocess.band == BandSpec::broadband());
  CHECK_FALSE(e.preprocess.subset.has_value());
  const auto s = cfg.synth();
  CHECK(s.n_concepts == 20);
  CHECK(s.days == std::vector<int>{0, 1, 3});
  CHECK(s.separability == 0.8);
  for (const auto& k : config_keys()) CHECK(cfg.get(k.name) == k.default_value);
}

TEST_CASE("unknown keys and bad values are rejected") {
  RunConfig cfg;
  CHECK_THROWS_WITH_AS(cfg.set("knn.kk", "3"), doctest::Contains("unknown config key"), Error);
  CHECK_THROWS_AS(cfg.set("knn.k", "three"), Error);
  CHECK_THROWS_AS(cfg.set("knn.k", "-1"), Error);
  CHECK_THROWS_AS(cfg.set("clip.lo", "0.1x"), Error);
  CHECK_THROWS_AS(cfg.set("eval.day", "2"), Error);
  CHECK_THROWS_AS(cfg.set("eval.backend", "svm"), Error);
  CHECK_THROWS_AS(cfg.set("band.name", "kappa"), Error);
  CHECK_THROWS_AS(cfg.set("channels.subset", "F3,O1"), Error);
  CHECK_THROWS_AS(cfg.set("synth.days", "0,2"), Error);
  CHECK_THROWS_AS(cfg.set("synth.target_band", "broadband"), Error);
  CHECK_THROWS_AS(cfg.set("knn.normalize", "maybe"), Error);
  CHECK_THROWS_AS(cfg.set_assignment("knn.k"), Error);
  // Failed sets leave the value untouched.
  CHECK(cfg.get("knn.k") == "25");
}

TEST_CASE("typed accessors") {
  RunConfig cfg;
  cfg.set_assignment("knn.k = 7");
  cfg.set("knn.normalize", "true");
  cfg.set("band.name", "theta");
  cfg.set("filter.high_hz", "7.5");
  cfg.set("channels.subset", "F3, F4");
  cfg.set("train.mode", "standard");
  cfg.set("seed", "42");
  cfg.set("synth.target_channel", "F3");
  const auto e = cfg.eval();
  CHECK(e.knn_k == 7);
  CHECK(e.knn_normalize);
  CHECK(e.preprocess.band.name == "theta");
  CHECK(e.preprocess.band.low_hz == 4.0);
  CHECK(e.preprocess.band.high_hz == 7.5);
  REQUIRE(e.preprocess.subset.has_value());
  CHECK(e.preprocess.subset->labels() == std::vector<std::string>{"F3", "F4"});
  CHECK(e.train.mode == SupConMode::standard);
  CHECK(e.seed == 42);
  CHECK(e.train.seed == 42);
  cfg.set("train.seed", "5");
  CHECK(cfg.train().seed == 5);
  CHECK(cfg.synth().target_channel == std::optional<std::string>("F3"));
  CHECK(cfg.synth().seed == 42);
}

TEST_CASE("file layering and precedence") {
  TempDir dir;
  const auto path = dir.path / "run.cfg";
  std::ofstream(path) << "# experiment\n\nknn.k = 5   # fewer neighbours\neval.trials=3\n";
  RunConfig cfg;
  cfg.load_file(path);
  CHECK(cfg.get_size("knn.k") == 5);
  CHECK(cfg.get_size("eval.trials") == 3);
  cfg.set_assignment("knn.k=9");
  CHECK(cfg.get_size("knn.k") == 9);
  CHECK(cfg.get_size("eval.trials") == 3);

  std::ofstream(dir.path / "bad.cfg") << "knn.k=5\nbogus=1\n";
  CHECK_THROWS_WITH_AS(cfg.load_file(dir.path / "bad.cfg"), doctest::Contains("bad.cfg:2"), Error);
  CHECK_THROWS_AS(cfg.load_file(dir.path / "missing.cfg"), Error);
}

TEST_CASE("dump round trips") {
  RunConfig a;
  a.set("knn.k", "3");
  a.set("synth.days", "0,1");
  RunConfig b;
  b.load_text(a.dump());
  CHECK(b.dump() == a.dump());
}

TEST_CASE("help lists every key") {
  const auto help = config_help();
  for (const auto& k : config_keys()) CHECK(help.find(k.name) != std::string::npos);
}

TEST_CASE("list parsing") {
  CHECK(split_list("a, b,c") == std::vector<std::string>{"a", "b", "c"});
  CHECK(split_list("").empty());
  CHECK_THROWS_AS(split_list("a,,b"), Error);
  CHECK(parse_size_list("10,20,80") == std::vector<std::size_t>{10, 20, 80});
  CHECK_THROWS_AS(parse_size_list("1,x"), Error);
  CHECK(parse_day_list("3,1") == std::vector<int>{3, 1});
}
