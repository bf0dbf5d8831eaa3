// Acceptance suite: one PASS/FAIL line per criterion. Arguments select criteria
// by number (default: all). Exit status is non-zero if any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dsaqc/agreement.hpp"
#include "dsaqc/classifier.hpp"
#include "dsaqc/config.hpp"
#include "dsaqc/gradcam.hpp"
#include "dsaqc/ingest.hpp"
#include "dsaqc/metrics.hpp"
#include "dsaqc/phantom.hpp"
#include "dsaqc/pipeline.hpp"
#include "dsaqc/suitability.hpp"
#include "support/fixtures.hpp"
#include "support/gradcam_fixture.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace dsaqc;
using namespace dsaqc::agreement;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void progress(const std::string& msg) { std::cerr << "  .. " << msg << std::endl; }

/// Collects failed checks with a short reason each.
struct Outcome {
  std::vector<std::string> failures;
  std::vector<std::string> facts;

  void check(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void note(const std::string& fact) { facts.push_back(fact); }
};

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ------------------------------------------------------------------ shared synthetic run

/// Default corpus, split, trained ensemble and test predictions; built on first use.
struct SyntheticRun {
  PipelineConfig config;
  phantom::Corpus corpus;
  std::vector<MinIPImage> images;
  SplitAssignment split;
  std::map<std::string, pipeline::LabelRun> runs;
  Ensemble ensemble;
  std::vector<std::string> test_ids;
  std::vector<MinIPImage> test_images;
  std::vector<PredictionRecord> predictions;
  double corpus_seconds = 0, train_seconds = 0;
  bool trained = false;
};

PipelineConfig acceptance_config() {
  PipelineConfig cfg;
  cfg.apply_seed(0);
  // Desk-scale input resolution; everything else keeps its default.
  cfg.train.input_side = 64;
  return cfg;
}

SyntheticRun& corpus_run() {
  static std::optional<SyntheticRun> run;
  if (run) return *run;
  run.emplace();
  SyntheticRun& r = *run;
  r.config = acceptance_config();
  const auto t0 = Clock::now();
  progress("generating the default synthetic corpus");
  r.corpus = phantom::generate_corpus(r.config.phantom);
  test_support::TempDir dir;
  phantom::write_corpus(r.corpus, dir.path);
  r.images = pipeline::ingest_directory(dir.path / "sequences");
  r.corpus_seconds = seconds_since(t0);
  r.split = stratified_patient_split(r.corpus.annotations, builtin_taxonomy(), r.config.split);
  return r;
}

SyntheticRun& trained_run() {
  SyntheticRun& r = corpus_run();
  if (r.trained) return r;
  const int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  progress("training all labels on " + std::to_string(jobs) + " thread(s)");
  const auto t0 = Clock::now();
  r.runs = pipeline::train_all(r.images, r.corpus.annotations, r.split, r.config, jobs, progress);
  r.train_seconds = seconds_since(t0);
  r.ensemble = pipeline::ensemble_of(r.runs);
  r.test_ids = r.split.images_in(Split::test);
  const std::set<std::string> ids(r.test_ids.begin(), r.test_ids.end());
  for (const auto& img : r.images) {
    if (ids.count(img.image_id)) r.test_images.push_back(img);
  }
  r.predictions = predict_batch(r.ensemble, r.test_images);
  r.trained = true;
  return r;
}

// ------------------------------------------------------------------ criteria

Outcome metric_oracles() {
  Outcome out;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0, worst_macro = 0;
  int ties = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const int n = std::uniform_int_distribution<int>(2, 50)(rng);
    std::vector<double> s(n);
    std::vector<int> t(n);
    std::uniform_int_distribution<int> grid(0, 8);
    for (int i = 0; i < n; ++i) s[i] = grid(rng) / 8.0;
    do {
      t = oracle::random_classes(rng, n, 2);
    } while (std::count(t.begin(), t.end(), 1) == 0 || std::count(t.begin(), t.end(), 0) == 0);
    std::set<double> distinct(s.begin(), s.end());
    ties += distinct.size() < s.size();
    worst = std::max(worst, std::fabs(metrics::roc_auc_binary(s, t) - oracle::auc_pairs(s, t)));

    const int K = std::uniform_int_distribution<int>(3, 5)(rng);
    std::vector<int> truth = oracle::random_classes(rng, n, K);
    std::vector<std::vector<double>> probs(n, std::vector<double>(K));
    for (auto& row : probs) {
      double z = 0;
      for (double& p : row) z += (p = grid(rng) + 1.0);
      for (double& p : row) p /= z;
    }
    const auto macro = metrics::macro_roc_auc(probs, truth, K);
    double sum = 0;
    int present = 0;
    for (int k = 0; k < K; ++k) {
      std::vector<double> score(n);
      std::vector<int> is_k(n);
      for (int i = 0; i < n; ++i) score[i] = probs[i][k], is_k[i] = truth[i] == k;
      const int pos = std::accumulate(is_k.begin(), is_k.end(), 0);
      if (pos == 0 || pos == n) {
        out.check(!macro.per_class[k].has_value(), "class without both outcomes was scored");
        continue;
      }
      const double o = oracle::auc_pairs(score, is_k);
      out.check(macro.per_class[k].has_value(), "present class not scored");
      if (macro.per_class[k]) worst_macro = std::max(worst_macro, std::fabs(*macro.per_class[k] - o));
      sum += o;
      ++present;
    }
    if (present) worst_macro = std::max(worst_macro, std::fabs(macro.macro - sum / present));
  }
  const double secs = seconds_since(t0);
  out.check(worst <= 1e-12, "binary AUC deviates by " + sci(worst));
  out.check(worst_macro <= 1e-12, "macro AUC deviates by " + sci(worst_macro));
  out.check(ties > 50, "too few instances with ties");
  out.check(secs < 5.0, "runtime " + fmt(secs, 2) + " s");
  out.note("max |AUC - pairs| = " + sci(worst) + ", macro " + sci(worst_macro) + ", " +
           std::to_string(ties) + "/100 tied, " + fmt(secs, 3) + " s");
  return out;
}

Outcome kappa_goldens() {
  Outcome out;
  const std::vector<int> a = {1, 1, 0, 0}, b = {1, 0, 0, 0};
  const double ck = cohen_kappa(a, b, 2).value;
  const double fk = fleiss_kappa({{3, 0}, {1, 2}}, 3).value;
  out.check(std::fabs(ck - 0.5) <= 1e-12, "cohen golden = " + std::to_string(ck));
  out.check(std::fabs(fk - 0.25) <= 1e-12, "fleiss golden = " + std::to_string(fk));

  std::mt19937_64 rng(7);
  double worst = 0;
  for (int table = 0; table < 50; ++table) {
    const int n = std::uniform_int_distribution<int>(5, 60)(rng);
    const int K = std::uniform_int_distribution<int>(2, 4)(rng);
    const int R = std::uniform_int_distribution<int>(2, 6)(rng);
    std::vector<std::vector<int>> by_rater(R);
    for (auto& r : by_rater) r = oracle::random_classes(rng, n, K);
    // Agreement-heavy copies so kappa is not always near zero.
    for (int i = 0; i < n; ++i) {
      if (rng() % 2) by_rater[1][i] = by_rater[0][i];
    }
    const double k01 = cohen_kappa(by_rater[0], by_rater[1], K).value;
    const double k10 = cohen_kappa(by_rater[1], by_rater[0], K).value;
    worst = std::max(worst, std::fabs(k01 - k10));
    worst = std::max(worst, std::fabs(k01 - oracle::cohen(by_rater[0], by_rater[1], K)));

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> relabel(K);
    std::iota(relabel.begin(), relabel.end(), 0);
    std::shuffle(relabel.begin(), relabel.end(), rng);
    std::vector<int> pa(n), pb(n);
    for (int i = 0; i < n; ++i) pa[i] = relabel[by_rater[0][perm[i]]], pb[i] = relabel[by_rater[1][perm[i]]];
    worst = std::max(worst, std::fabs(cohen_kappa(pa, pb, K).value - k01));

    std::vector<std::vector<int>> counts(n, std::vector<int>(K, 0)), permuted(n, std::vector<int>(K, 0));
    std::vector<std::vector<int>> by_item(n);
    for (int i = 0; i < n; ++i) {
      for (int r = 0; r < R; ++r) {
        ++counts[i][by_rater[r][i]];
        ++permuted[i][relabel[by_rater[r][perm[i]]]];
        by_item[i].push_back(by_rater[r][i]);
      }
    }
    std::vector<std::vector<int>> raters_shuffled = by_rater;
    std::shuffle(raters_shuffled.begin(), raters_shuffled.end(), rng);
    std::vector<std::vector<int>> shuffled_counts(n, std::vector<int>(K, 0));
    for (int i = 0; i < n; ++i) {
      for (int r = 0; r < R; ++r) ++shuffled_counts[i][raters_shuffled[r][i]];
    }
    const double f = fleiss_kappa(counts, R).value;
    worst = std::max(worst, std::fabs(f - oracle::fleiss_pairs(by_item, K)));
    worst = std::max(worst, std::fabs(fleiss_kappa(permuted, R).value - f));
    worst = std::max(worst, std::fabs(fleiss_kappa(shuffled_counts, R).value - f));
  }
  out.check(worst <= 1e-12, "invariant or oracle deviation " + sci(worst));
  out.note("cohen = " + fmt(ck, 12) + ", fleiss = " + fmt(fk, 12) + ", max deviation over 50 tables " +
           sci(worst));
  return out;
}

Outcome reported_statistics() {
  Outcome out;
  const auto t0 = Clock::now();
  std::vector<SuitabilityDecision> decisions;
  std::vector<DownstreamOutcome> outcomes;
  auto add = [&](int count, bool suitable, bool success) {
    for (int i = 0; i < count; ++i) {
      const std::string id = "img" + std::to_string(decisions.size());
      decisions.push_back({id, suitable, {}});
      outcomes.push_back({id, success});
    }
  };
  add(60, true, true);
  add(27, true, false);
  add(37, false, true);
  add(110, false, false);
  const DownstreamReport r = evaluate_filter(decisions, outcomes);
  const ZTest z = two_proportion_z_test(97, 234, 60, 87);
  const double secs = seconds_since(t0);
  auto near = [](std::optional<double> v, double want, double tol) { return v && std::fabs(*v - want) <= tol; };
  out.check(near(r.sensitivity, 0.6186, 0.005), "sensitivity");
  out.check(near(r.specificity, 0.8029, 0.005), "specificity");
  out.check(near(r.unfiltered_rate, 0.4145, 0.005), "unfiltered rate");
  out.check(near(r.filtered_rate, 0.6897, 0.005), "filtered rate");
  out.check(std::fabs(z.z - 4.39) <= 0.02, "z = " + fmt(z.z));
  out.check(z.p_two_sided < 0.001, "p = " + sci(z.p_two_sided));
  out.check(r.z_test && std::fabs(r.z_test->z - z.z) < 1e-12, "report z-test differs from the direct test");
  out.check(secs < 1.0, "runtime " + fmt(secs, 3) + " s");
  out.note("sens " + fmt(r.sensitivity.value_or(-1)) + ", spec " + fmt(r.specificity.value_or(-1)) + ", rates " +
           fmt(r.unfiltered_rate) + " -> " + fmt(r.filtered_rate.value_or(-1)) + ", z " + fmt(z.z, 3) + ", p " +
           sci(z.p_two_sided));
  return out;
}

Outcome class_weight_contract() {
  Outcome out;
  for (int k = 2; k <= 5; ++k) {
    for (double w : class_weights(std::vector<int>(k, 37))) out.check(w == 1.0, "balanced weight " + fmt(w, 17));
  }
  const auto w = class_weights(std::vector<int>{272, 1321});
  out.check(std::fabs(w[0] - 2.928) <= 0.001 && std::fabs(w[1] - 0.603) <= 0.001,
            "Contrast Fluid weights " + fmt(w[0]) + ", " + fmt(w[1]));
  std::mt19937_64 rng(99);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> counts(std::uniform_int_distribution<int>(2, 6)(rng));
    for (int& c : counts) c = std::uniform_int_distribution<int>(1, 5000)(rng);
    const auto cw = class_weights(counts);
    const double n = std::accumulate(counts.begin(), counts.end(), 0.0);
    double mean = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) mean += counts[k] * cw[k] / n;
    worst = std::max(worst, std::fabs(mean - 1.0));
  }
  out.check(worst <= 1e-12, "per-sample mean weight deviates by " + sci(worst));
  out.note("[272,1321] -> [" + fmt(w[0]) + ", " + fmt(w[1]) + "], max |mean - 1| " + sci(worst));
  return out;
}

Outcome training_mechanics() {
  Outcome out;
  double worst_ce = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    worst_ce = std::max(worst_ce, gradcheck::check_cross_entropy(seed, 8, 3, {}).relative);
    worst_ce = std::max(worst_ce, gradcheck::check_cross_entropy(seed, 8, 2, {2.928, 0.603}).relative);
  }
  out.check(worst_ce < 1e-4, "loss gradient relative error " + sci(worst_ce));

  std::vector<int> classes;
  const auto images = fixtures::square_images(24, 40, 5, classes);
  const auto train = fixtures::labeled(images, classes, 0, 16);
  const auto val = fixtures::labeled(images, classes, 16, 24);
  const TrainConfig cfg = fixtures::tiny_config();
  const auto& def = find_label(builtin_taxonomy(), label::kContrastFluid);
  LabelModel before = build_model(nn::BackboneDepth::r18, 2, cfg.dropout, false, cfg.seed);
  std::vector<const Image2D*> cal;
  for (int i = 0; i < cfg.calibration_images; ++i) cal.push_back(&train[i].image->image);
  before.network->calibrate_statistics(to_network_input(cal, cfg.input_side));
  const TrainedLabelModel after = train_label_model(train, val, def, nn::BackboneDepth::r18, cfg);
  auto p0 = before.network->parameters();
  auto p1 = after.network->parameters();
  int frozen = 0, changed_frozen = 0, changed_tail = 0;
  for (std::size_t i = 0; i < p0.size(); ++i) {
    if (p0[i]->trainable) {
      changed_tail += p0[i]->value != p1[i]->value;
    } else {
      ++frozen;
      changed_frozen += p0[i]->value != p1[i]->value;
    }
  }
  out.check(frozen > 0 && changed_frozen == 0, std::to_string(changed_frozen) + " frozen tensors changed");
  out.check(changed_tail > 0, "training did not move the trainable tail");

  auto make = [](nn::BackboneDepth d, double loss) {
    TrainedLabelModel m;
    m.label_name = "DSA";
    m.variant = d;
    m.best_validation_loss = loss;
    return m;
  };
  using nn::BackboneDepth;
  const std::vector<TrainedLabelModel> argmin = {make(BackboneDepth::r18, 0.5), make(BackboneDepth::r34, 0.2),
                                                 make(BackboneDepth::r50, 0.3)};
  const std::vector<TrainedLabelModel> tied = {make(BackboneDepth::r50, 0.2), make(BackboneDepth::r34, 0.2),
                                               make(BackboneDepth::r18, 0.4)};
  out.check(select_best(argmin).variant == BackboneDepth::r34, "select_best argmin");
  out.check(select_best(tied).variant == BackboneDepth::r34, "select_best tie-break");
  out.note(std::to_string(frozen) + " frozen tensors bit-identical, loss-gradient rel. error " +
           sci(worst_ce) + ", tie goes to the shallower backbone");
  return out;
}

Outcome synthetic_end_to_end() {
  Outcome out;
  SyntheticRun& r = trained_run();
  const auto ev = pipeline::evaluate(r.ensemble, r.predictions, r.corpus.annotations, r.test_ids);
  const std::map<std::string, double> bars = {{std::string(label::kContrastFluid), 0.90},
                                              {std::string(label::kDsa), 0.90},
                                              {std::string(label::kMotionArtefact), 0.80},
                                              {std::string(label::kProjection), 0.80}};
  std::ostringstream facts;
  for (const auto& rep : ev.reports) {
    const auto bar = bars.find(rep.label_name);
    if (bar != bars.end()) {
      out.check(rep.roc_auc >= bar->second, rep.label_name + " AUC " + fmt(rep.roc_auc, 3) + " < " + fmt(bar->second, 2));
      facts << rep.label_name << " " << fmt(rep.roc_auc, 3) << ", ";
    }
  }
  std::cerr << metrics::render_table(ev.reports);
  std::set<std::string> evaluated;
  for (const auto& rep : ev.reports) evaluated.insert(rep.label_name);
  for (const auto& [name, bar] : bars) out.check(evaluated.count(name) == 1, name + " not evaluated");
  out.check(r.images.size() >= 700 && r.images.size() <= 900, "corpus size " + std::to_string(r.images.size()));
  const double limit = 3 * 3600.0;
  out.check(r.train_seconds <= limit, "training took " + fmt(r.train_seconds, 0) + " s");
  facts << r.images.size() << " images, " << r.test_ids.size() << " test, trained 9 labels x 3 backbones in "
        << fmt(r.train_seconds / 60.0, 1) << " min on " << std::max(1u, std::thread::hardware_concurrency())
        << " core(s)";
  out.note(facts.str());
  return out;
}

Outcome downstream_effect() {
  Outcome out;
  SyntheticRun& r = trained_run();
  phantom::PhantomSpec spec = r.config.phantom;
  spec.seed = r.config.seed + 7919;
  spec.n_patients = 45;
  const phantom::Corpus held = phantom::generate_corpus(spec);
  out.check(held.images.size() >= 300, "held-out corpus has only " + std::to_string(held.images.size()) + " images");
  const std::size_t n = std::min<std::size_t>(300, held.images.size());
  std::vector<SuitabilityDecision> decisions;
  std::vector<DownstreamOutcome> outcomes;
  for (std::size_t i = 0; i < n; ++i) {
    const MinIPImage img = ingest::normalize(ingest::compute_minip(held.images[i].stack()));
    decisions.push_back(assess(predict(r.ensemble, img), r.config.filter));
    outcomes.push_back(held.outcomes[i]);
  }
  const DownstreamReport rep = evaluate_filter(decisions, outcomes);
  const double filtered = rep.filtered_rate.value_or(-1);
  out.check(filtered > rep.unfiltered_rate, "filtered " + fmt(filtered) + " <= unfiltered " + fmt(rep.unfiltered_rate));
  out.check(rep.z_test && rep.z_test->p_two_sided < 0.05,
            "z-test p = " + (rep.z_test ? sci(rep.z_test->p_two_sided) : std::string("n/a")));
  out.note(std::to_string(n) + " images, success " + fmt(rep.unfiltered_rate) + " -> " + fmt(filtered) + ", sens " +
           fmt(rep.sensitivity.value_or(-1), 2) + ", spec " + fmt(rep.specificity.value_or(-1), 2) + ", z " +
           (rep.z_test ? fmt(rep.z_test->z, 2) + ", p " + sci(rep.z_test->p_two_sided) : "n/a"));
  return out;
}

Outcome pipeline_invariants() {
  Outcome out;
  std::mt19937_64 rng(31);
  int minip_bad = 0, idem_bad = 0;
  for (int s = 0; s < 100; ++s) {
    FrameStack st;
    st.frame_count = std::uniform_int_distribution<int>(1, 8)(rng);
    st.height = std::uniform_int_distribution<int>(1, 24)(rng);
    st.width = std::uniform_int_distribution<int>(1, 24)(rng);
    st.sequence_id = "s" + std::to_string(s);
    std::uniform_int_distribution<int> v(0, 4095);
    st.data.resize(static_cast<std::size_t>(st.frame_count) * st.height * st.width);
    for (double& x : st.data) x = v(rng);
    std::vector<int> order(st.frame_count);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    FrameStack shuffled = st;
    const std::size_t fs = static_cast<std::size_t>(st.height) * st.width;
    for (int t = 0; t < st.frame_count; ++t) {
      std::copy_n(st.data.begin() + static_cast<std::ptrdiff_t>(order[t] * fs), fs,
                  shuffled.data.begin() + static_cast<std::ptrdiff_t>(t * fs));
    }
    const MinIPImage m = ingest::compute_minip(st);
    minip_bad += !(m.image == ingest::compute_minip(shuffled).image);
    const MinIPImage once = ingest::normalize(m);
    const MinIPImage twice = ingest::normalize(once);
    double diff = 0;
    for (std::size_t i = 0; i < once.image.size(); ++i) diff = std::max(diff, std::fabs(once.image.pixels[i] - twice.image.pixels[i]));
    idem_bad += diff > 1e-15;
  }
  out.check(minip_bad == 0, std::to_string(minip_bad) + " stacks not permutation invariant");
  out.check(idem_bad == 0, std::to_string(idem_bad) + " stacks not idempotent under normalization");

  SyntheticRun& r = corpus_run();
  std::map<std::string, std::set<Split>> by_patient;
  std::map<Split, int> counts;
  for (const auto& rec : r.corpus.annotations) {
    const Split s = r.split.by_image.at(rec.image_id);
    by_patient[rec.patient_id].insert(s);
    ++counts[s];
  }
  int leaking = 0;
  for (const auto& [p, splits] : by_patient) leaking += splits.size() != 1;
  out.check(leaking == 0, std::to_string(leaking) + " patients in more than one split");
  const double total = static_cast<double>(r.corpus.annotations.size());
  const std::map<Split, double> target = {{Split::train, 0.70}, {Split::validation, 0.15}, {Split::test, 0.15}};
  std::ostringstream fr;
  for (const auto& [s, want] : target) {
    const double got = counts[s] / total;
    out.check(std::fabs(got - want) <= 0.05, std::string(to_string(s)) + " fraction " + fmt(got, 3));
    fr << to_string(s) << " " << fmt(got, 3) << " ";
  }

  const auto again = stratified_patient_split(r.corpus.annotations, builtin_taxonomy(), r.config.split);
  out.check(again.by_image == r.split.by_image, "split not reproducible");
  const phantom::Corpus regenerated = phantom::generate_corpus(r.config.phantom);
  bool same = regenerated.images.size() == r.corpus.images.size();
  for (std::size_t i = 0; same && i < regenerated.images.size(); ++i) {
    same = regenerated.images[i].pixels == r.corpus.images[i].pixels &&
           regenerated.images[i].truth == r.corpus.images[i].truth;
  }
  same = same && regenerated.ratings.size() == r.corpus.ratings.size();
  out.check(same, "corpus not reproducible");
  const auto report = [&](const phantom::Corpus& c) {
    const auto tables = build_rating_tables(c.ratings, builtin_taxonomy());
    return to_json(agreement_report(tables, r.config.reference_rater, r.config.agreement_threshold));
  };
  out.check(report(regenerated) == report(r.corpus), "agreement report not reproducible");
  out.note("100 stacks, split " + fr.str() + "over " + std::to_string(by_patient.size()) +
           " patients, reproducible corpus/split/report");
  return out;
}

Outcome gradcam_checks() {
  Outcome out;
  using namespace gradcam_fixture;
  const ConvPoolLinear fx = fixture_model();
  const MinIPImage fimg = fixture_image();
  double worst = 0;
  for (int target : {0, 1}) {
    const auto map = grad_cam(fx, fimg, target);
    const auto expect = hand_cam(fx, fimg.image, target);
    for (std::size_t i = 0; i < expect.size(); ++i) worst = std::max(worst, std::fabs(map.raw.pixels[i] - expect[i]));
  }
  out.check(worst <= 1e-6, "fixture deviates by " + sci(worst));

  SyntheticRun& r = trained_run();
  long maps = 0, zero = 0, bad_shape = 0, negative = 0, bad_range = 0;
  for (const auto& [name, model] : r.ensemble) {
    for (std::size_t i = 0; i < r.test_images.size(); ++i) {
      const MinIPImage& img = r.test_images[i];
      const auto map = grad_cam(model, img, r.predictions[i].labels.at(name).predicted);
      ++maps;
      zero += map.zero_map;
      bad_shape += map.heatmap.height != img.height() || map.heatmap.width != img.width() ||
                   map.raw.height != img.height() || map.raw.width != img.width();
      negative += std::any_of(map.raw.pixels.begin(), map.raw.pixels.end(), [](double v) { return v < 0.0; });
      const auto [lo, hi] = std::minmax_element(map.heatmap.pixels.begin(), map.heatmap.pixels.end());
      const bool in_unit = *lo >= 0.0 && *hi <= 1.0;
      const bool spans = map.zero_map ? *hi == 0.0 : (*hi == 1.0 && (*lo == 0.0 || *lo == 1.0));
      bad_range += !(in_unit && spans);
    }
  }
  out.check(maps > 0, "no maps computed");
  out.check(bad_shape == 0, std::to_string(bad_shape) + " maps with the wrong shape");
  out.check(negative == 0, std::to_string(negative) + " maps negative before normalization");
  out.check(bad_range == 0, std::to_string(bad_range) + " maps not normalized to [0,1]");
  out.note("fixture max error " + sci(worst) + ", " + std::to_string(maps) + " maps on " +
           std::to_string(r.test_images.size()) + " test images (" + std::to_string(zero) + " all-zero)");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"metric oracle equivalence", metric_oracles},
      {"kappa golden values and invariants", kappa_goldens},
      {"downstream statistics from reported counts", reported_statistics},
      {"class-weight contract", class_weight_contract},
      {"training mechanics", training_mechanics},
      {"synthetic end-to-end", synthetic_end_to_end},
      {"downstream filtering effect", downstream_effect},
      {"pipeline invariants", pipeline_invariants},
      {"Grad-CAM", gradcam_checks},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.failures.push_back(std::string("exception: ") + e.what());
    }
    const bool pass = o.failures.empty();
    failed += !pass;
    std::ostringstream line;
    line << "criterion " << id << " (" << criteria[i].first << "): " << (pass ? "PASS" : "FAIL") << " ["
         << fmt(seconds_since(t0), 1) << " s]";
    for (const auto& f : o.facts) line << " " << f;
    for (const auto& f : o.failures) line << " | failed: " << f;
    std::cout << line.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
