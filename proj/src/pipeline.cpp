#include "dsaqc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "dsaqc/checkpoint.hpp"
#include "dsaqc/errors.hpp"
#include "dsaqc/ingest.hpp"
#include "dsaqc/plot.hpp"

namespace dsaqc::pipeline {

namespace fs = std::filesystem;

std::vector<MinIPImage> ingest_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw NotFoundError("sequence directory not found", dir.string());
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.empty() || name[0] == '.') continue;
    if (e.is_directory() || e.is_regular_file()) entries.push_back(e.path());
  }
  std::sort(entries.begin(), entries.end());
  if (entries.empty()) throw MalformedInputError("no sequences in " + dir.string());
  std::vector<MinIPImage> out;
  for (const auto& p : entries) out.push_back(ingest::normalize(ingest::compute_minip(ingest::load_sequence(p))));
  return out;
}

std::map<std::string, const AnnotationRecord*> index_by_image(const std::vector<AnnotationRecord>& records) {
  std::map<std::string, const AnnotationRecord*> out;
  for (const auto& r : records) {
    if (!out.emplace(r.image_id, &r).second) {
      throw ValidationError("image '" + r.image_id + "' is annotated more than once; pass a single-rater file");
    }
  }
  return out;
}

std::map<std::string, LabelRun> train_all(const std::vector<MinIPImage>& images,
                                          const std::vector<AnnotationRecord>& annotations,
                                          const SplitAssignment& split, const PipelineConfig& config, int jobs,
                                          const Progress& progress) {
  config.validate();
  const Taxonomy& tax = builtin_taxonomy();
  const auto index = index_by_image(annotations);
  std::vector<const LabelDefinition*> labels;
  if (config.labels.empty()) {
    for (const auto& def : tax) labels.push_back(&def);
  } else {
    for (const auto& name : config.labels) labels.push_back(&find_label(tax, name));
  }

  std::map<std::string, LabelRun> runs;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;

  auto work = [&] {
    for (;;) {
      const std::size_t li = next++;
      if (li >= labels.size()) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      const LabelDefinition& def = *labels[li];
      try {
        std::vector<LabeledImage> train_set, val_set;
        for (const auto& img : images) {
          const auto a = index.find(img.image_id);
          const auto s = split.by_image.find(img.image_id);
          if (a == index.end() || s == split.by_image.end()) continue;
          const auto v = a->second->values.find(def.name);
          if (v == a->second->values.end()) continue;
          if (s->second == Split::train) train_set.push_back({&img, v->second});
          if (s->second == Split::validation) val_set.push_back({&img, v->second});
        }
        LabelRun run;
        for (int d : config.backbones) {
          const BackboneDepth depth = nn::depth_from_int(d);
          if (progress) progress("training " + def.name + " with " + nn::depth_name(depth));
          run.candidates.push_back(train_label_model(train_set, val_set, def, depth, config.train));
          if (progress) {
            const auto& m = run.candidates.back();
            progress(def.name + " " + nn::depth_name(depth) + ": best validation loss " +
                     std::to_string(m.best_validation_loss) + " at epoch " + std::to_string(m.best_epoch));
          }
        }
        run.best = select_best(run.candidates);
        std::lock_guard lock(mu);
        runs.emplace(def.name, std::move(run));
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  const int n_threads = std::clamp(jobs, 1, static_cast<int>(labels.size()));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return runs;
}

Ensemble ensemble_of(const std::map<std::string, LabelRun>& runs) {
  Ensemble e;
  for (const auto& [name, run] : runs) e.emplace(name, run.best);
  return e;
}

namespace {

std::string slug_of(const std::string& label) { return find_label(builtin_taxonomy(), label).slug(); }

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory", dir.string());
}

}  // namespace

void save_ensemble(const Ensemble& ensemble, const fs::path& dir) {
  make_dir(dir / "models");
  for (const auto& [name, model] : ensemble) {
    checkpoint::save_model(dir / "models" / (slug_of(name) + ".model"), model);
    checkpoint::write_loss_log(dir / "models" / (slug_of(name) + "_loss.csv"), model);
  }
}

void save_runs(const std::map<std::string, LabelRun>& runs, const fs::path& dir) {
  save_ensemble(ensemble_of(runs), dir);
  make_dir(dir / "models" / "candidates");
  for (const auto& [name, run] : runs) {
    for (const auto& m : run.candidates) {
      const std::string base = slug_of(name) + "_resnet" + std::to_string(static_cast<int>(m.variant));
      checkpoint::save_model(dir / "models" / "candidates" / (base + ".model"), m);
      checkpoint::write_loss_log(dir / "models" / "candidates" / (base + "_loss.csv"), m);
    }
  }
}

Ensemble load_ensemble(const fs::path& dir) {
  fs::path models = dir / "models";
  if (!fs::is_directory(models)) models = dir;
  if (!fs::is_directory(models)) throw NotFoundError("model directory not found", dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(models)) {
    if (e.is_regular_file() && e.path().extension() == ".model") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw NotFoundError("no .model files", models.string());
  Ensemble out;
  for (const auto& f : files) {
    TrainedLabelModel m = checkpoint::load_model(f);
    const std::string name = m.label_name;
    if (!out.emplace(name, std::move(m)).second) throw ValidationError("two models for label '" + name + "'");
  }
  return out;
}

Evaluation evaluate(const Ensemble& ensemble, const std::vector<PredictionRecord>& predictions,
                    const std::vector<AnnotationRecord>& annotations, const std::vector<std::string>& image_ids) {
  const auto index = index_by_image(annotations);
  std::map<std::string, const PredictionRecord*> pred;
  for (const auto& p : predictions) pred[p.image_id] = &p;
  Evaluation ev;
  for (const auto& [name, model] : ensemble) {
    const LabelDefinition& def = find_label(builtin_taxonomy(), name);
    std::vector<std::vector<double>> probs;
    std::vector<int> truths;
    for (const auto& id : image_ids) {
      const auto a = index.find(id);
      const auto p = pred.find(id);
      if (a == index.end() || p == pred.end()) continue;
      const auto v = a->second->values.find(name);
      const auto lp = p->second->labels.find(name);
      if (v == a->second->values.end() || lp == p->second->labels.end()) continue;
      probs.push_back(lp->second.probabilities);
      truths.push_back(v->second);
    }
    if (truths.empty()) throw DegenerateDataError("no annotated predictions for label '" + name + "'");
    ev.reports.push_back(metrics::evaluate_label(def, probs, truths, nn::depth_name(model.variant)));

    auto& curves = ev.roc[name];
    const int K = def.class_count();
    for (int k = (K == 2 ? 1 : 0); k < K; ++k) {
      std::vector<double> s;
      std::vector<int> t;
      for (std::size_t i = 0; i < truths.size(); ++i) {
        s.push_back(probs[i][k]);
        t.push_back(truths[i] == k ? 1 : 0);
      }
      const bool both = std::count(t.begin(), t.end(), 1) > 0 && std::count(t.begin(), t.end(), 0) > 0;
      curves.push_back(both ? metrics::roc_curve(s, t) : std::vector<metrics::RocPoint>{});
    }
  }
  return ev;
}

void write_plots(const Evaluation& evaluation, const Ensemble& ensemble, const fs::path& dir) {
  make_dir(dir);
  for (const auto& [name, curves] : evaluation.roc) {
    const LabelDefinition& def = find_label(builtin_taxonomy(), name);
    plot::Figure fig;
    fig.title = name + " ROC";
    fig.x_label = "False positive rate";
    fig.y_label = "True positive rate";
    fig.diagonal = true;
    const int first = def.class_count() == 2 ? 1 : 0;
    for (std::size_t c = 0; c < curves.size(); ++c) {
      if (curves[c].empty()) continue;
      plot::Series s;
      s.name = def.classes[first + c];
      for (const auto& p : curves[c]) {
        s.x.push_back(p.fpr);
        s.y.push_back(p.tpr);
      }
      fig.series.push_back(std::move(s));
    }
    plot::write_svg(dir / ("roc_" + def.slug() + ".svg"), fig);
  }
  for (const auto& [name, model] : ensemble) {
    if (model.history.empty()) continue;
    plot::Figure fig;
    fig.title = name + " loss (" + nn::depth_name(model.variant) + ")";
    fig.x_label = "Epoch";
    fig.y_label = "Loss";
    fig.x_min = 1;
    fig.x_max = std::max<double>(2, model.history.size());
    double hi = 0;
    plot::Series tr{"train", {}, {}}, va{"validation", {}, {}};
    for (const auto& h : model.history) {
      tr.x.push_back(h.epoch);
      tr.y.push_back(h.train_loss);
      va.x.push_back(h.epoch);
      va.y.push_back(h.validation_loss);
      hi = std::max({hi, h.train_loss, h.validation_loss});
    }
    fig.y_max = hi > 0 ? hi * 1.1 : 1.0;
    fig.series = {tr, va};
    plot::write_svg(dir / ("loss_" + find_label(builtin_taxonomy(), name).slug() + ".svg"), fig);
  }
}

}  // namespace dsaqc::pipeline
