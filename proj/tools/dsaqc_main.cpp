// dsaqc: fluoroscopy quality-control pipeline driver.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dsaqc/agreement.hpp"
#include "dsaqc/checkpoint.hpp"
#include "dsaqc/classifier.hpp"
#include "dsaqc/config.hpp"
#include "dsaqc/errors.hpp"
#include "dsaqc/gradcam.hpp"
#include "dsaqc/ingest.hpp"
#include "dsaqc/labels.hpp"
#include "dsaqc/metrics.hpp"
#include "dsaqc/phantom.hpp"
#include "dsaqc/pipeline.hpp"
#include "dsaqc/suitability.hpp"

namespace fs = std::filesystem;
using namespace dsaqc;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

PipelineConfig effective_config(const Common& c) {
  PipelineConfig cfg = c.config_path.empty() ? PipelineConfig{} : load_config(c.config_path);
  if (c.seed) cfg.apply_seed(*c.seed);
  cfg.validate();
  return cfg;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory", dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write", path.string());
  out << text;
  if (!out) throw IoError("failed writing", path.string());
}

void note(const std::string& msg) { std::cerr << msg << "\n"; }

std::vector<std::string> subset_ids(const std::string& split_path, const std::string& subset,
                                    const std::vector<MinIPImage>& images) {
  std::vector<std::string> ids;
  if (split_path.empty()) {
    for (const auto& img : images) ids.push_back(img.image_id);
    return ids;
  }
  const SplitAssignment split = read_split(split_path);
  const Split which = split_from_string(subset);
  for (const auto& img : images) {
    const auto it = split.by_image.find(img.image_id);
    if (it != split.by_image.end() && it->second == which) ids.push_back(img.image_id);
  }
  if (ids.empty()) throw DegenerateDataError("no images of split '" + subset + "' in the corpus");
  return ids;
}

std::vector<MinIPImage> select_images(std::vector<MinIPImage> images, const std::vector<std::string>& ids) {
  const std::set<std::string> keep(ids.begin(), ids.end());
  std::vector<MinIPImage> out;
  for (auto& img : images) {
    if (keep.count(img.image_id)) out.push_back(std::move(img));
  }
  return out;
}

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--config", c.config_path, "JSON configuration file");
  cmd->add_option("--seed", c.seed, "Seed for every random choice");
  auto* o = cmd->add_option("--out", c.out, "Output (run) directory");
  if (out_required) o->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quality control for fluoroscopic angiography sequences"};
  app.require_subcommand(1);
  Common common;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic phantom corpus");
  add_common(synth, common);
  std::optional<int> n_patients;
  synth->add_option("--patients", n_patients, "Number of patients");

  auto* ingest_cmd = app.add_subcommand("ingest", "Sequences to normalized MinIP images plus manifest");
  add_common(ingest_cmd, common);
  std::string input;
  ingest_cmd->add_option("--input", input, "Directory of sequences")->required();

  auto* split_cmd = app.add_subcommand("split", "Patient-exclusive stratified split");
  add_common(split_cmd, common);
  std::string annotations;
  split_cmd->add_option("--annotations", annotations, "Annotation CSV")->required();

  auto* train = app.add_subcommand("train", "Train every backbone per label and keep the best");
  add_common(train, common);
  std::string manifest, split_path;
  int jobs = 1;
  train->add_option("--manifest", manifest, "Image manifest")->required();
  train->add_option("--annotations", annotations, "Annotation CSV")->required();
  train->add_option("--split", split_path, "Split CSV")->required();
  train->add_option("--jobs", jobs, "Labels trained in parallel")->check(CLI::PositiveNumber);

  auto* predict_cmd = app.add_subcommand("predict", "Per-label class probabilities");
  add_common(predict_cmd, common);
  std::string models, subset = "test";
  predict_cmd->add_option("--models", models, "Training run directory")->required();
  predict_cmd->add_option("--manifest", manifest, "Image manifest")->required();
  predict_cmd->add_option("--split", split_path, "Restrict to one split");
  predict_cmd->add_option("--subset", subset, "train, validation or test");

  auto* evaluate = app.add_subcommand("evaluate", "Metrics table and ROC plots");
  add_common(evaluate, common);
  std::string predictions;
  evaluate->add_option("--models", models, "Training run directory")->required();
  evaluate->add_option("--predictions", predictions, "Predictions CSV")->required();
  evaluate->add_option("--annotations", annotations, "Annotation CSV")->required();

  auto* agree = app.add_subcommand("agree", "Inter-rater agreement report");
  add_common(agree, common);
  std::string ratings;
  std::optional<std::string> reference;
  agree->add_option("--ratings", ratings, "Multi-rater annotation CSV")->required();
  agree->add_option("--reference", reference, "Reference rater id");

  auto* explain = app.add_subcommand("explain", "Grad-CAM overlays");
  add_common(explain, common);
  std::vector<std::string> explain_labels;
  std::string target = "predicted";
  explain->add_option("--models", models, "Training run directory")->required();
  explain->add_option("--manifest", manifest, "Image manifest")->required();
  explain->add_option("--split", split_path, "Restrict to one split");
  explain->add_option("--subset", subset, "train, validation or test");
  explain->add_option("--label", explain_labels, "Labels to explain (default all)");
  explain->add_option("--target", target, "'predicted' or a class index");

  auto* filter = app.add_subcommand("filter", "Suitability decisions from predictions");
  add_common(filter, common);
  filter->add_option("--predictions", predictions, "Predictions CSV")->required();

  auto* downstream = app.add_subcommand("downstream", "Filter evaluation against downstream outcomes");
  add_common(downstream, common);
  std::string decisions, outcomes;
  downstream->add_option("--decisions", decisions, "Decisions CSV")->required();
  downstream->add_option("--outcomes", outcomes, "Outcomes CSV (image_id,success)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    const PipelineConfig cfg = effective_config(common);
    const fs::path out = common.out;
    make_dir(out);
    echo_config(cfg, out);

    if (synth->parsed()) {
      phantom::PhantomSpec spec = cfg.phantom;
      if (n_patients) spec.n_patients = *n_patients;
      const phantom::Corpus corpus = phantom::generate_corpus(spec);
      phantom::write_corpus(corpus, out);
      note("wrote " + std::to_string(corpus.images.size()) + " sequences for " + std::to_string(spec.n_patients) +
          " patients to " + out.string());
    } else if (ingest_cmd->parsed()) {
      const auto images = pipeline::ingest_directory(input);
      ingest::write_corpus(images, out);
      note("wrote " + std::to_string(images.size()) + " MinIP images and " + (out / ingest::kManifestName).string());
    } else if (split_cmd->parsed()) {
      const auto records = parse_annotations(annotations, builtin_taxonomy());
      const SplitAssignment split = stratified_patient_split(records, builtin_taxonomy(), cfg.split);
      write_split(out / "split.csv", split);
      char msg[160];
      std::snprintf(msg, sizeof msg, "split: train %zu, validation %zu, test %zu images; imbalance %.4f",
                    split.images_in(Split::train).size(), split.images_in(Split::validation).size(),
                    split.images_in(Split::test).size(), split.imbalance);
      note(msg);
    } else if (train->parsed()) {
      const auto images = ingest::read_corpus(manifest);
      const auto records = parse_annotations(annotations, builtin_taxonomy());
      const SplitAssignment split = read_split(split_path);
      const auto runs = pipeline::train_all(images, records, split, cfg, jobs, note);
      pipeline::save_runs(runs, out);
      std::string summary = "label,backbone,best_validation_loss,best_epoch\n";
      for (const auto& [name, run] : runs) {
        summary += "\"" + name + "\"," + nn::depth_name(run.best.variant) + "," +
                   std::to_string(run.best.best_validation_loss) + "," + std::to_string(run.best.best_epoch) + "\n";
      }
      write_text(out / "selection.csv", summary);
    } else if (predict_cmd->parsed()) {
      const Ensemble ensemble = pipeline::load_ensemble(models);
      auto images = ingest::read_corpus(manifest);
      images = select_images(std::move(images), subset_ids(split_path, subset, images));
      write_predictions(out / "predictions.csv", predict_batch(ensemble, images));
      note("predicted " + std::to_string(images.size()) + " images");
    } else if (evaluate->parsed()) {
      const Ensemble ensemble = pipeline::load_ensemble(models);
      const auto preds = read_predictions(predictions);
      const auto records = parse_annotations(annotations, builtin_taxonomy());
      std::vector<std::string> ids;
      for (const auto& p : preds) ids.push_back(p.image_id);
      const auto ev = pipeline::evaluate(ensemble, preds, records, ids);
      std::string json = "[\n";
      for (std::size_t i = 0; i < ev.reports.size(); ++i) {
        json += metrics::to_json(ev.reports[i]);
        if (i + 1 < ev.reports.size()) json += ",";
        json += "\n";
      }
      json += "]\n";
      write_text(out / "metrics.json", json);
      const std::string table = metrics::render_table(ev.reports);
      write_text(out / "metrics.txt", table);
      pipeline::write_plots(ev, ensemble, out / "plots");
      std::cout << table;
    } else if (agree->parsed()) {
      const auto records = parse_annotations(ratings, builtin_taxonomy());
      const auto tables = agreement::build_rating_tables(records, builtin_taxonomy());
      const auto report =
          agreement::agreement_report(tables, reference.value_or(cfg.reference_rater), cfg.agreement_threshold);
      write_text(out / "agreement.json", agreement::to_json(report));
      const std::string text = agreement::render_text(report);
      write_text(out / "agreement.txt", text);
      std::cout << text;
    } else if (explain->parsed()) {
      const Ensemble ensemble = pipeline::load_ensemble(models);
      auto images = ingest::read_corpus(manifest);
      images = select_images(std::move(images), subset_ids(split_path, subset, images));
      if (cfg.explain_max_images > 0 && static_cast<int>(images.size()) > cfg.explain_max_images) {
        images.resize(cfg.explain_max_images);
      }
      std::optional<int> fixed;
      if (target != "predicted") {
        try {
          fixed = std::stoi(target);
        } catch (const std::exception&) {
          throw ValidationError("--target must be 'predicted' or a class index, got '" + target + "'");
        }
      }
      std::vector<std::string> wanted = explain_labels;
      if (wanted.empty()) {
        for (const auto& [name, _] : ensemble) wanted.push_back(name);
      }
      std::string index = "image_id,label,target_class,zero_map,path\n";
      std::size_t written = 0;
      for (const auto& name : wanted) {
        const auto it = ensemble.find(name);
        if (it == ensemble.end()) throw ValidationError("no trained model for label '" + name + "'");
        const fs::path dir = out / find_label(builtin_taxonomy(), name).slug();
        make_dir(dir);
        for (const auto& img : images) {
          const int cls = fixed ? *fixed : dsaqc::predict(ensemble, img).labels.at(name).predicted;
          const ActivationMap map = grad_cam(it->second, img, cls);
          const fs::path png = dir / (img.image_id + ".png");
          export_overlay(map, img, png, cfg.overlay_alpha);
          index += img.image_id + ",\"" + name + "\"," + std::to_string(cls) + "," + (map.zero_map ? "1" : "0") + "," +
                   fs::relative(png, out).string() + "\n";
          ++written;
        }
      }
      write_text(out / "overlays.csv", index);
      note("wrote " + std::to_string(written) + " overlays");
    } else if (filter->parsed()) {
      std::vector<SuitabilityDecision> ds;
      std::size_t excluded = 0;
      for (const auto& p : read_predictions(predictions)) {
        ds.push_back(assess(p, cfg.filter));
        excluded += !ds.back().suitable;
      }
      write_decisions(out / "decisions.csv", ds);
      note("excluded " + std::to_string(excluded) + " of " + std::to_string(ds.size()) + " images");
    } else if (downstream->parsed()) {
      const auto report = evaluate_filter(read_decisions(decisions), read_outcomes(outcomes));
      write_text(out / "downstream.json", to_json(report));
      const std::string table = render_confusion_table(report);
      write_text(out / "downstream.txt", table);
      std::cout << table;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}
