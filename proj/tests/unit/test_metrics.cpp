#include <random>

#include "doctest.h"
#include "dsaqc/errors.hpp"
#include "dsaqc/labels.hpp"
#include "dsaqc/metrics.hpp"
#include "support/oracles.hpp"

using namespace dsaqc;
using namespace dsaqc::metrics;

TEST_CASE("roc_auc_binary small cases") {
  CHECK(roc_auc_binary(std::vector<double>{0.9, 0.8, 0.1, 0.2}, std::vector<int>{1, 1, 0, 0}) == 1.0);
  CHECK(roc_auc_binary(std::vector<double>{0.1, 0.2, 0.9, 0.8}, std::vector<int>{1, 1, 0, 0}) == 0.0);
  CHECK(roc_auc_binary(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}) == 0.75);
  CHECK(roc_auc_binary(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}) == 0.5);
  CHECK_THROWS_AS(roc_auc_binary(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), DegenerateDataError);
  CHECK_THROWS_AS(roc_auc_binary(std::vector<double>{0.1}, std::vector<int>{0, 1}), ValidationError);
}

TEST_CASE("roc_auc_binary agrees with pair counting and trapezoid on random tied data") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 49);
    std::vector<double> s(n);
    std::vector<int> t(n);
    for (int i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 8) / 8.0;  // heavy ties
      t[i] = static_cast<int>(rng() % 2);
    }
    t[0] = 0;
    t[1] = 1;
    const double auc = roc_auc_binary(s, t);
    CHECK(auc == doctest::Approx(oracle::auc_pairs(s, t)).epsilon(1e-12));
    CHECK(auc == doctest::Approx(oracle::auc_trapezoid(s, t)).epsilon(1e-12));

    std::vector<double> neg(n), mono(n);
    for (int i = 0; i < n; ++i) {
      neg[i] = -s[i];
      mono[i] = std::exp(3.0 * s[i]) - 7.0;
    }
    // Complement holds exactly through the integer statistic.
    const long long u = doubled_mann_whitney(s, t), u_neg = doubled_mann_whitney(neg, t);
    long long P = 0;
    for (int v : t) P += v;
    CHECK(u + u_neg == 2 * P * (n - P));
    CHECK(roc_auc_binary(mono, t) == auc);
  }
}

TEST_CASE("roc_curve runs from origin to (1,1) and integrates to the AUC") {
  const std::vector<double> s = {0.9, 0.7, 0.7, 0.4, 0.3, 0.1};
  const std::vector<int> t = {1, 0, 1, 1, 0, 0};
  const auto curve = roc_curve(s, t);
  REQUIRE(curve.size() >= 2);
  CHECK(curve.front().fpr == 0.0);
  CHECK(curve.front().tpr == 0.0);
  CHECK(curve.back().fpr == 1.0);
  CHECK(curve.back().tpr == 1.0);
  double area = 0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2;
  }
  CHECK(area == doctest::Approx(roc_auc_binary(s, t)).epsilon(1e-12));
}

TEST_CASE("macro_roc_auc") {
  SUBCASE("one-hot rows give 1") {
    std::vector<std::vector<double>> p = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 0}};
    const auto m = macro_roc_auc(p, std::vector<int>{0, 1, 2, 0}, 3);
    CHECK(m.macro == 1.0);
    CHECK_FALSE(m.missing_class);
  }
  SUBCASE("K=2 is the mean of the two one-vs-rest AUCs") {
    std::vector<std::vector<double>> p = {{0.8, 0.2}, {0.3, 0.7}, {0.6, 0.4}, {0.45, 0.55}};
    const std::vector<int> t = {0, 1, 1, 0};
    const auto m = macro_roc_auc(p, t, 2);
    const double a1 = oracle::auc_pairs({0.2, 0.7, 0.4, 0.55}, t);
    const double a0 = oracle::auc_pairs({0.8, 0.3, 0.6, 0.45}, {1, 0, 0, 1});
    CHECK(m.macro == doctest::Approx((a0 + a1) / 2).epsilon(1e-12));
  }
  SUBCASE("random 20x3 against per-class oracles") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<std::vector<double>> p(20, std::vector<double>(3));
      std::vector<int> t = oracle::random_classes(rng, 20, 3);
      t[0] = 0, t[1] = 1, t[2] = 2;
      for (auto& row : p) {
        double s = 0;
        for (double& v : row) s += (v = u(rng));
        for (double& v : row) v /= s;
      }
      const auto m = macro_roc_auc(p, t, 3);
      double mean = 0;
      for (int k = 0; k < 3; ++k) {
        std::vector<double> sk;
        std::vector<int> tk;
        for (int i = 0; i < 20; ++i) {
          sk.push_back(p[i][k]);
          tk.push_back(t[i] == k);
        }
        const double o = oracle::auc_pairs(sk, tk);
        REQUIRE(m.per_class[k].has_value());
        CHECK(*m.per_class[k] == doctest::Approx(o).epsilon(1e-12));
        mean += o / 3;
      }
      CHECK(m.macro == doctest::Approx(mean).epsilon(1e-12));
    }
  }
  SUBCASE("missing class is excluded and flagged") {
    std::vector<std::vector<double>> p = {{0.7, 0.2, 0.1}, {0.2, 0.7, 0.1}, {0.6, 0.3, 0.1}};
    const auto m = macro_roc_auc(p, std::vector<int>{0, 1, 0}, 3);
    CHECK(m.missing_class);
    CHECK_FALSE(m.per_class[2].has_value());
    CHECK(m.macro == doctest::Approx((*m.per_class[0] + *m.per_class[1]) / 2));
  }
}

TEST_CASE("prf_accuracy") {
  SUBCASE("perfect predictions") {
    const std::vector<int> t = {0, 1, 2, 1, 0};
    const auto r = prf_accuracy(t, t, 3);
    CHECK(r.accuracy == 1.0);
    CHECK(r.macro_precision == 1.0);
    CHECK(r.macro_recall == 1.0);
    CHECK(r.macro_f1 == 1.0);
    CHECK_FALSE(r.zero_division);
  }
  SUBCASE("all predicted class 0, truth half/half") {
    const auto r = prf_accuracy(std::vector<int>{0, 0, 0, 0}, std::vector<int>{0, 0, 1, 1}, 2);
    CHECK(r.accuracy == 0.5);
    CHECK(r.macro_precision == doctest::Approx(0.25));
    CHECK(r.macro_recall == doctest::Approx(0.5));
    CHECK(r.per_class[1].precision == 0.0);
    CHECK(r.per_class[1].precision_undefined);
    CHECK(r.zero_division);
  }
  SUBCASE("confusion invariants") {
    std::mt19937_64 rng(3);
    const auto p = oracle::random_classes(rng, 60, 4), t = oracle::random_classes(rng, 60, 4);
    const auto r = prf_accuracy(p, t, 4);
    long total = 0, trace = 0;
    for (int i = 0; i < 4; ++i) {
      long row = 0;
      for (int j = 0; j < 4; ++j) row += r.confusion[i][j];
      CHECK(row == std::count(t.begin(), t.end(), i));
      total += row;
      trace += r.confusion[i][i];
    }
    CHECK(total == 60);
    CHECK(r.accuracy == doctest::Approx(trace / 60.0));
  }
  CHECK_THROWS_AS(prf_accuracy(std::vector<int>{0}, std::vector<int>{0, 1}, 2), ValidationError);
}

TEST_CASE("binary confusion rates from the downstream counts") {
  const BinaryConfusion c{60, 27, 37, 110};
  CHECK(*c.sensitivity() == doctest::Approx(60.0 / 97));
  CHECK(*c.specificity() == doctest::Approx(110.0 / 137));
  CHECK(*c.sensitivity() == doctest::Approx(0.62).epsilon(0.005 / 0.62));
  CHECK(*c.specificity() == doctest::Approx(0.80).epsilon(0.005 / 0.80));
  const BinaryConfusion none{5, 0, 0, 0};
  CHECK_FALSE(none.specificity().has_value());
}

TEST_CASE("evaluate_label reports positive-class scores for binary labels") {
  const auto& def = find_label(builtin_taxonomy(), label::kContrastFluid);
  std::vector<std::vector<double>> p = {{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}, {0.3, 0.7}};
  const auto r = evaluate_label(def, p, std::vector<int>{0, 1, 1, 1}, "ResNet-18");
  CHECK(r.roc_auc == 1.0);
  CHECK(r.accuracy == 0.75);
  CHECK(r.precision == 1.0);
  CHECK(r.recall == doctest::Approx(2.0 / 3));
  const std::string table = render_table({r});
  CHECK(table.find("Contrast Fluid") != std::string::npos);
  CHECK(to_json(r).find("\"roc_auc\"") != std::string::npos);
}
