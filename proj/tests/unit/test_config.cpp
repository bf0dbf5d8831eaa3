#include <fstream>

#include "doctest.h"
#include "dsaqc/config.hpp"
#include "dsaqc/errors.hpp"
#include "support/temp_dir.hpp"

using namespace dsaqc;

TEST_CASE("empty config gives the defaults") {
  const PipelineConfig c = parse_config("{}");
  CHECK(c.backbones == std::vector<int>{18, 34, 50});
  CHECK(c.agreement_threshold == 0.81);
  CHECK(c.overlay_alpha == 0.5);
  CHECK(c.reference_rater == "expert");
  CHECK(c.phantom.n_patients == 100);
  CHECK(c.train.epochs > 0);
}

TEST_CASE("seed propagates to every stage") {
  const PipelineConfig c = parse_config(R"({"seed": 17})");
  CHECK(c.phantom.seed == 17);
  CHECK(c.split.seed == 17);
  CHECK(c.train.seed == 17);
}

TEST_CASE("unknown keys and wrong types are schema errors") {
  CHECK_THROWS_AS(parse_config(R"({"sed": 1})"), SchemaError);
  CHECK_THROWS_AS(parse_config(R"({"train": {"epoch": 3}})"), SchemaError);
  CHECK_THROWS_AS(parse_config(R"({"train": {"epochs": "3"}})"), SchemaError);
  CHECK_THROWS_AS(parse_config(R"({"train": {"epochs": 2.5}})"), SchemaError);
  CHECK_THROWS_AS(parse_config(R"({"filter": {"dsa": 1}})"), SchemaError);
  CHECK_THROWS_AS(parse_config(R"({"train": {"labels": [3]}})"), SchemaError);
  CHECK_THROWS_AS(parse_config(R"({"seed": -4})"), SchemaError);
  CHECK_THROWS_AS(parse_config(R"([1, 2])"), SchemaError);
  try {
    parse_config(R"({"phantom": {"frames": true}})", "cfg.json");
    FAIL("expected an error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("cfg.json.phantom.frames") != std::string::npos);
  }
}

TEST_CASE("malformed JSON and invalid values") {
  CHECK_THROWS_AS(parse_config("{\"seed\": "), MalformedInputError);
  CHECK_THROWS_AS(parse_config(R"({"train": {"backbones": [101]}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"split": {"train": 0.9}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"explain": {"alpha": 1.5}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"train": {"labels": ["Colour"]}})"), ValidationError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), NotFoundError);
}

TEST_CASE("serialised config parses back to the same settings") {
  const PipelineConfig c = parse_config(R"({
    "seed": 5,
    "phantom": {"n_patients": 12, "noise_level": 0.02, "flip_if_success": 0.2},
    "split": {"candidates": 50},
    "train": {"epochs": 4, "input_side": 48, "backbones": [18, 50], "labels": ["DSA"]},
    "filter": {"motion_artefact": false},
    "agreement": {"threshold": 0.7},
    "explain": {"max_images": 3}
  })");
  const PipelineConfig back = parse_config(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.phantom.n_patients == 12);
  CHECK(back.phantom.segmentability.flip_if_success == 0.2);
  CHECK(back.train.input_side == 48);
  CHECK(back.backbones == std::vector<int>{18, 50});
  CHECK(back.labels == std::vector<std::string>{"DSA"});
  CHECK_FALSE(back.filter.motion_artefact);
  CHECK(back.explain_max_images == 3);

  test_support::TempDir tmp;
  echo_config(c, tmp.path);
  CHECK(to_json(load_config(tmp.path / "config.json")) == to_json(c));
}
