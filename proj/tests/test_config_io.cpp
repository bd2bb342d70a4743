#include "pheno/config_io.hpp"
#include "pheno/errors.hpp"

#include <doctest.h>

using namespace pheno;

TEST_CASE("synth configs override defaults") {
  const SynthConfig c = parse_synth_config(
      R"({"schema_version": 1, "kind": "synth", "universe": {"n_moas": 30, "cell_noise": 0.5},
          "split": {"n_plates": 8}})",
      "synth.json");
  CHECK(c.universe.n_moas == 30);
  CHECK(c.universe.cell_noise == 0.5);
  CHECK(c.universe.n_targets == UniverseConfig{}.n_targets);
  CHECK(c.split.n_plates == 8);
  const SynthConfig d = parse_synth_config(R"({"schema_version": 1, "kind": "synth"})", "d.json");
  CHECK(d.split.replicates == SplitPlan{}.replicates);
  CHECK(d.universe.activators);
  CHECK(!parse_synth_config(R"({"schema_version": 1, "kind": "synth", "universe": {"activators": false}})", "a")
             .universe.activators);
}

TEST_CASE("unknown keys are errors naming the location") {
  CHECK_THROWS_WITH_AS(parse_synth_config(R"({"schema_version": 1, "kind": "synth", "universe": {"n_moa": 3}})", "s.json"),
                       doctest::Contains("s.json.universe: unknown key 'n_moa'"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_zoo_config(R"({"schema_version": 1, "kind": "zoo", "grid": {"depth": [1]}})", "z.json"),
                       doctest::Contains("unknown key 'depth'"), ConfigError);
  CHECK_THROWS_AS(parse_zoo_config(R"({"schema_version": 1, "kind": "zoo", "extra": 1})", "z.json"), ConfigError);
}

TEST_CASE("schema version, kind and types are checked") {
  CHECK_THROWS_AS(parse_synth_config(R"({"schema_version": 2, "kind": "synth"})", "a"), ConfigError);
  CHECK_THROWS_AS(parse_synth_config(R"({"kind": "synth"})", "a"), ConfigError);
  CHECK_THROWS_AS(parse_synth_config(R"({"schema_version": 1, "kind": "zoo"})", "a"), ConfigError);
  CHECK_THROWS_AS(parse_synth_config("[1, 2]", "a"), ConfigError);
  CHECK_THROWS_AS(parse_synth_config("{", "a"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_synth_config(R"({"schema_version": 1, "kind": "synth", "universe": {"n_moas": "many"}})", "a"),
      doctest::Contains("a.universe.n_moas: wrong type"), ConfigError);
  CHECK_THROWS_AS(load_synth_config("/nonexistent/pheno.json"), ConfigError);
}

TEST_CASE("zoo configs parse every axis") {
  const ZooConfig c = parse_zoo_config(R"({
    "schema_version": 1, "kind": "zoo",
    "grid": {"depths": [1, 3], "widths": [16], "ood_fractions": [0, 0.5, 1],
             "replicate_fractions": [0.2, 1], "supervisions": ["ibp"], "tasks": ["moa", "discovery"],
             "seeds": [0, 1], "adversarial": {"plate": 0.5},
             "exclude": [{"depth": 3, "task": "discovery"}]},
    "train": {"lr": 0.001, "batch_size": 64, "patience": 5, "max_epochs": 20}})",
                                       "zoo.json");
  CHECK(c.axes.depths == std::vector<int>{1, 3});
  REQUIRE(c.ood_fractions.has_value());
  CHECK(c.axes.adversarial.plate == 0.5);
  CHECK(c.axes.tasks.size() == 2);
  CHECK(c.train.lr == 0.001);
  CHECK(c.train.batch_size == 64);
  CHECK(c.train.adversary_steps == 1);
  CHECK(parse_zoo_config(R"({"schema_version": 1, "kind": "zoo", "train": {"adversary_steps": 4}})", "z")
            .train.adversary_steps == 4);
  const GridAxes a = resolve_axes(c, 40);
  CHECK(a.ood_counts == std::vector<int>{0, 20, 40});
  // 2 depths x 3 ood x 2 rep x 2 tasks x 2 seeds, minus 12 excluded discovery runs at depth 3
  CHECK(build_grid(a).size() == 48 - 12);
}

TEST_CASE("zoo config consistency errors") {
  CHECK_THROWS_AS(parse_zoo_config(R"({"schema_version": 1, "kind": "zoo",
      "grid": {"ood_counts": [1], "ood_fractions": [0.5]}})", "z"), ConfigError);
  CHECK_THROWS_AS(parse_zoo_config(R"({"schema_version": 1, "kind": "zoo", "grid": {"depths": []}})", "z"), ConfigError);
  CHECK_THROWS_AS(parse_zoo_config(R"({"schema_version": 1, "kind": "zoo", "grid": {"tasks": ["nope"]}})", "z"),
                  ConfigError);
  CHECK_THROWS_AS(parse_zoo_config(R"({"schema_version": 1, "kind": "zoo", "train": {"patience": 0}})", "z"),
                  ConfigError);
  ZooConfig c;
  c.axes.ood_counts = {50};
  CHECK_THROWS_AS(resolve_axes(c, 40), ConfigError);
}
