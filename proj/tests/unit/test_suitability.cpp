#include <filesystem>

#include "doctest.h"
#include "dsaqc/errors.hpp"
#include "dsaqc/suitability.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace dsaqc;

namespace {

PredictionRecord record(int neuro, int skull, int contrast, int dsa, int motion) {
  PredictionRecord r;
  r.image_id = "img";
  auto put = [&r](std::string_view l, int k) { r.labels[std::string(l)].predicted = k; };
  put(label::kNeuroImaging, neuro);
  put(label::kSkullVisibility, skull);
  put(label::kContrastFluid, contrast);
  put(label::kDsa, dsa);
  put(label::kMotionArtefact, motion);
  put(label::kProjection, 0);
  return r;
}

}  // namespace

TEST_CASE("assess") {
  const auto clean = assess(record(1, 1, 1, 1, 0));
  CHECK(clean.suitable);
  CHECK(clean.triggered_rules.empty());

  const auto mild = assess(record(1, 1, 1, 1, 1));
  CHECK_FALSE(mild.suitable);
  CHECK(mild.triggered_rules == std::vector<std::string>{"motion_artefact"});
  CHECK(assess(record(1, 1, 1, 1, 2)).triggered_rules == std::vector<std::string>{"motion_artefact"});

  const auto two = assess(record(0, 1, 0, 1, 0));
  CHECK(two.triggered_rules == std::vector<std::string>{"neuro_imaging", "contrast_fluid"});
  CHECK(assess(record(1, 0, 1, 0, 0)).triggered_rules == std::vector<std::string>{"skull_visibility", "dsa"});
  CHECK(assess(record(1, 2, 1, 1, 0)).suitable);  // Partial skull is fine

  RuleSet no_motion;
  no_motion.motion_artefact = false;
  CHECK(assess(record(1, 1, 1, 1, 2), no_motion).suitable);

  auto missing = record(1, 1, 1, 1, 0);
  missing.labels.erase(std::string(label::kDsa));
  try {
    assess(missing);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("DSA") != std::string::npos);
  }
}

TEST_CASE("two_proportion_z_test") {
  const auto eq = two_proportion_z_test(10, 40, 5, 20);
  CHECK(eq.z == 0.0);
  CHECK(eq.p_two_sided == 1.0);

  const auto t = two_proportion_z_test(97, 234, 60, 87);
  const double p = 157.0 / 321.0;
  const double z = (60.0 / 87 - 97.0 / 234) / std::sqrt(p * (1 - p) * (1.0 / 234 + 1.0 / 87));
  CHECK(t.z == doctest::Approx(z).epsilon(1e-12));
  CHECK(t.z == doctest::Approx(4.39).epsilon(0.02 / 4.39));
  CHECK(t.p_two_sided < 0.001);
  CHECK(t.p_two_sided == doctest::Approx(oracle::two_sided_p(t.z)).epsilon(1e-6));

  const auto ext = two_proportion_z_test(0, 10, 10, 10);
  CHECK(ext.z == doctest::Approx(std::sqrt(20.0)).epsilon(1e-12));
  CHECK(ext.p_two_sided == doctest::Approx(oracle::two_sided_p(std::sqrt(20.0))).epsilon(1e-5));

  const auto swapped = two_proportion_z_test(60, 87, 97, 234);
  CHECK(swapped.z == doctest::Approx(-t.z).epsilon(1e-14));
  CHECK(swapped.p_two_sided == doctest::Approx(t.p_two_sided).epsilon(1e-14));

  CHECK_THROWS_AS(two_proportion_z_test(0, 5, 0, 7), DegenerateDataError);
  CHECK_THROWS_AS(two_proportion_z_test(5, 5, 7, 7), DegenerateDataError);
  CHECK_THROWS_AS(two_proportion_z_test(6, 5, 1, 7), ValidationError);
}

namespace {

void add(std::vector<SuitabilityDecision>& d, std::vector<DownstreamOutcome>& o, int n, bool suitable, bool success) {
  for (int i = 0; i < n; ++i) {
    const std::string id = "i" + std::to_string(d.size());
    d.push_back({id, suitable, suitable ? std::vector<std::string>{} : std::vector<std::string>{"dsa"}});
    o.push_back({id, success});
  }
}

}  // namespace

TEST_CASE("evaluate_filter") {
  SUBCASE("downstream counts") {
    std::vector<SuitabilityDecision> d;
    std::vector<DownstreamOutcome> o;
    add(d, o, 60, true, true);
    add(d, o, 27, true, false);
    add(d, o, 37, false, true);
    add(d, o, 110, false, false);
    const auto r = evaluate_filter(d, o);
    CHECK(r.confusion.tp == 60);
    CHECK(r.confusion.fp == 27);
    CHECK(r.confusion.fn == 37);
    CHECK(r.confusion.tn == 110);
    CHECK(r.confusion.total() == 234);
    CHECK(*r.sensitivity == doctest::Approx(60.0 / 97));
    CHECK(*r.specificity == doctest::Approx(110.0 / 137));
    CHECK(r.unfiltered_rate == doctest::Approx(97.0 / 234));
    CHECK(*r.filtered_rate == doctest::Approx(60.0 / 87));
    REQUIRE(r.z_test.has_value());
    CHECK(r.z_test->z == doctest::Approx(two_proportion_z_test(97, 234, 60, 87).z));
    const std::string table = render_confusion_table(r);
    CHECK(table.find("Sensitivity = 0.62 & Specificity = 0.80") != std::string::npos);
    CHECK(table.find("p < 0.001") != std::string::npos);
  }
  SUBCASE("all suitable and successful") {
    std::vector<SuitabilityDecision> d;
    std::vector<DownstreamOutcome> o;
    add(d, o, 5, true, true);
    const auto r = evaluate_filter(d, o);
    CHECK(*r.sensitivity == 1.0);
    CHECK_FALSE(r.specificity.has_value());
    CHECK_FALSE(r.warnings.empty());
  }
  SUBCASE("perfect filter") {
    std::vector<SuitabilityDecision> d;
    std::vector<DownstreamOutcome> o;
    add(d, o, 7, true, true);
    add(d, o, 4, false, false);
    const auto r = evaluate_filter(d, o);
    CHECK(*r.sensitivity == 1.0);
    CHECK(*r.specificity == 1.0);
  }
  SUBCASE("coverage mismatch lists ids") {
    std::vector<SuitabilityDecision> d = {{"a", true, {}}, {"b", true, {}}};
    std::vector<DownstreamOutcome> o = {{"a", true}, {"c", false}};
    try {
      evaluate_filter(d, o);
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("b") != std::string::npos);
      CHECK(msg.find("c") != std::string::npos);
    }
  }
}

TEST_CASE("decision and outcome files round-trip") {
  test_support::TempDir tmp;
  const std::vector<SuitabilityDecision> d = {{"a", true, {}}, {"b", false, {"dsa", "motion_artefact"}}};
  write_decisions(tmp.path / "d.csv", d);
  const auto back = read_decisions(tmp.path / "d.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].triggered_rules == d[1].triggered_rules);
  CHECK(back[0].suitable);

  const std::vector<DownstreamOutcome> o = {{"a", true}, {"b", false}};
  write_outcomes(tmp.path / "o.csv", o);
  const auto ob = read_outcomes(tmp.path / "o.csv");
  CHECK(ob[0].success);
  CHECK_FALSE(ob[1].success);
}
